"""Boundary determination: an explicit potential matching a tensor field
at the boundary, up to gauge.

Given an order-``m`` field whose transform vanishes (so its tangential
restriction to the boundary vanishes), a chart flattening the boundary
yields an order ``m-1`` potential with components

    p_{hat-pattern} = (m / (m - l)) * xn * f_{hat-pattern + n}(theta, 0)

(``l`` tangential indices and ``xn`` the chart's normal coordinate).
The potential vanishes on the boundary and its symmetrized covariant
derivative restricts to the field there.  A collar partition of unity
glues local constructions into a potential on the whole disk; the
boundary identity survives the gluing because each local potential
vanishes on the boundary.

Charts share the tangential coordinate ``theta`` (the construction is
invariant under tangential reparametrization) but may rescale the
normal coordinate by a positive angular profile, which genuinely
changes the local potentials away from the boundary and so exercises
the gluing cancellation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .errors import CoverGap
from .flow import unit_vector
from .tensors import (SympyTensorField, cov_derivative_exprs, sorted_indices,
                      sym_cov_derivative)

__all__ = [
    "BoundaryChart",
    "PartitionOfUnity",
    "tangential_vanishing_check",
    "local_boundary_potential",
    "glue_boundary_potential",
    "boundary_identity_report",
]

X1, X2 = sp.symbols("x1 x2", real=True)
_R = sp.sqrt(X1**2 + X2**2)
_COS_T = X1 / _R
_SIN_T = X2 / _R


def _smoothstep(t):
    """Quintic smoothstep, exactly 0/1 outside the transition."""
    return sp.Piecewise((0, t <= 0), (1, t >= 1),
                        (6 * t**5 - 15 * t**4 + 10 * t**3, True))


def _angle_from(center):
    """Angular offset theta - center in (-pi, pi], smooth away from the
    antipode of ``center``."""
    c, s = sp.cos(center), sp.sin(center)
    return sp.atan2(_SIN_T * c - _COS_T * s, _COS_T * c + _SIN_T * s)


@dataclass(frozen=True)
class BoundaryChart:
    """Collar chart ``(theta, xn)`` with ``xn = (1 - r) * eta(theta)``.

    ``eta`` is a strictly positive trigonometric profile given by the
    coefficients ``(eta_sin, eta_cos)`` relative to the chart center.
    ``half_width`` bounds the angular support used during gluing.
    """

    center: float = 0.0
    half_width: float = np.pi
    eta_sin: float = 0.0
    eta_cos: float = 0.0

    def eta_expr(self):
        d = _angle_from(self.center)
        return 1 + self.eta_sin * sp.sin(d) + self.eta_cos * sp.cos(d)

    def eta_of_theta(self, theta):
        d = theta - self.center
        return 1 + self.eta_sin * np.sin(d) + self.eta_cos * np.cos(d)

    def xn_expr(self):
        return (1 - _R) * self.eta_expr()

    def boundary_frame(self, theta):
        """Chart Jacobian columns at the boundary: tangential ``T`` and
        normal ``N`` (numeric, batched over ``theta``)."""
        t_col = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
        n_col = np.stack([-np.cos(theta), -np.sin(theta)], axis=-1)
        return t_col, n_col / self.eta_of_theta(theta)[..., None]

    def inv_jac_exprs(self):
        """Rows ``d(theta)/dx`` and ``d(xn)/dx`` as sympy expressions."""
        r2 = X1**2 + X2**2
        dtheta = (-X2 / r2, X1 / r2)
        eta = self.eta_expr()
        d = _angle_from(self.center)
        deta = self.eta_sin * sp.cos(d) - self.eta_cos * sp.sin(d)
        dxn = (-eta * X1 / _R + (1 - _R) * deta * dtheta[0],
               -eta * X2 / _R + (1 - _R) * deta * dtheta[1])
        return dtheta, dxn


def _boundary_component_exprs(f):
    """Field components restricted to the unit circle, as functions of
    the base point through ``cos(theta) = x1/r`` and ``sin = x2/r``."""
    sub = {X1: _COS_T, X2: _SIN_T}
    return {idx: sp.sympify(f.component_expr(idx)).subs(sub, simultaneous=True)
            for idx in sorted_indices(f.order)}


def _fhat_pattern_expr(fbound, pattern, chart):
    """Boundary value of the chart component of ``f`` for a 0/1 pattern
    (0 = tangential slot, 1 = normal slot)."""
    m = len(pattern)
    t_col = (-_SIN_T, _COS_T)
    eta = chart.eta_expr()
    n_col = (-_COS_T / eta, -_SIN_T / eta)
    total = sp.Integer(0)
    for full in itertools.product(range(2), repeat=m):
        w = sp.Integer(1)
        for slot in range(m):
            col = t_col if pattern[slot] == 0 else n_col
            w *= col[full[slot]]
        total += fbound[tuple(sorted(full))] * w
    return total


def local_boundary_potential(f, chart):
    """The local potential of order ``m - 1`` on a chart, in Cartesian
    components (sympy field, valid on the punctured disk)."""
    m = f.order
    fbound = _boundary_component_exprs(f)
    xn = chart.xn_expr()

    phat = {}
    for pat in sorted_indices(m - 1):  # 0 = tangential, 1 = normal
        l = sum(1 for a in pat if a == 0)
        factor = sp.Rational(m, m - l)
        fpat = tuple(sorted(pat + (1,)))
        phat[pat] = factor * xn * _fhat_pattern_expr(fbound, fpat, chart)

    dtheta, dxn = chart.inv_jac_exprs()
    rows = (dtheta, dxn)
    comps = {}
    for cart in sorted_indices(m - 1):
        total = sp.Integer(0)
        for pat in itertools.product(range(2), repeat=m - 1):
            w = sp.Integer(1)
            for slot in range(m - 1):
                w *= rows[pat[slot]][cart[slot]]
            total += phat[tuple(sorted(pat))] * w
        comps[cart] = total
    return SympyTensorField(m - 1, comps)


class PartitionOfUnity:
    """Collar partition subordinate to a family of boundary charts.

    Angular bumps use quintic-smoothstep transitions at the midpoints
    between consecutive chart centers and sum to one exactly; the
    radial collar cutoff is shared.  The interior bump is the
    complement of the collar cutoff.
    """

    def __init__(self, charts, transition_width=0.35, collar=(0.15, 0.45)):
        self.charts = list(charts)
        self.transition_width = transition_width
        self.collar = collar
        k = len(self.charts)
        if k > 1:
            centers = np.array([c.center for c in self.charts])
            if np.any(np.diff(centers) <= 0):
                raise CoverGap("chart centers must be strictly increasing")
            gaps = np.diff(np.concatenate([centers, [centers[0] + 2 * np.pi]]))
            for c, gap in zip(self.charts, gaps):
                if gap / 2 + transition_width / 2 > c.half_width:
                    raise CoverGap(f"chart at {c.center:.3f} does not reach its transition")

    def collar_cutoff_expr(self):
        n0, n1 = self.collar
        return 1 - _smoothstep(((1 - _R) - n0) / (n1 - n0))

    def bump_exprs(self):
        """One bump per chart (interior bump is ``1 - sum`` implicitly)."""
        zeta = self.collar_cutoff_expr()
        k = len(self.charts)
        if k == 1:
            return [zeta]
        centers = [c.center for c in self.charts]
        mids = [0.5 * (centers[i] + (centers[(i + 1) % k]
                                     + (2 * np.pi if i == k - 1 else 0.0)))
                for i in range(k)]
        w = self.transition_width
        bumps = []
        for i in range(k):
            up = _smoothstep((_angle_from(mids[i - 1]) + w / 2) / w)
            down = _smoothstep((_angle_from(mids[i]) + w / 2) / w)
            # product form: exact on overlaps and immune to circular wrap
            bumps.append(zeta * up * (1 - down))
        return bumps

    def check_partition(self, n=400, seed=0):
        """Max deviation of the bump sum from the collar cutoff."""
        rng = np.random.default_rng(seed)
        r = rng.uniform(0.55, 1.0, n)
        th = rng.uniform(0, 2 * np.pi, n)
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        total = sum(sp.lambdify((X1, X2), b, "numpy")(pts[:, 0], pts[:, 1])
                    for b in self.bump_exprs())
        zeta = sp.lambdify((X1, X2), self.collar_cutoff_expr(), "numpy")(
            pts[:, 0], pts[:, 1])
        return float(np.max(np.abs(np.asarray(total) - zeta)))


def glue_boundary_potential(f, metric, partition):
    """Glue the per-chart potentials with the partition of unity."""
    gap = partition.check_partition()
    if gap > 1e-10:
        raise CoverGap(f"partition deviates from unity by {gap:.2e} on the collar")
    m = f.order
    bumps = partition.bump_exprs()
    comps = {idx: sp.Integer(0) for idx in sorted_indices(m - 1)}
    for chart, bump in zip(partition.charts, bumps):
        local = local_boundary_potential(f, chart)
        for idx in comps:
            comps[idx] += bump * local.component_expr(idx)
    return SympyTensorField(m - 1, comps)


def _boundary_points(n, offset=0.37):
    theta = 2 * np.pi * (np.arange(n) + offset) / n
    return theta, np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def tangential_vanishing_check(f, metric, n_samples=128):
    """Max of the induced function over tangential boundary directions.

    This is the premise of the construction: a field with vanishing
    transform has no purely tangential boundary values.
    """
    theta, pts = _boundary_points(n_samples)
    t = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    that = unit_vector(metric, pts, t)
    vals = f.lam(pts, that)
    return {"max_tangential": float(np.max(np.abs(vals))),
            "n_samples": int(n_samples)}


def boundary_identity_report(f, p, metric, chart, n_samples=128):
    """Residuals of the boundary identities for a constructed potential.

    Returns the sup over boundary samples of ``|sigma-nabla-p - f|``
    (all Cartesian components), the normal-derivative identity residual
    and the tangential-derivative residual, both in chart components.
    """
    m = f.order
    theta, pts = _boundary_points(n_samples)
    x1v, x2v = pts[:, 0], pts[:, 1]

    sg = sym_cov_derivative(p, metric)
    sup = 0.0
    for idx in sorted_indices(m):
        lhs = sg.comp_values(idx, pts)
        rhs = f.comp_values(idx, pts)
        sup = max(sup, float(np.max(np.abs(lhs - rhs))))

    # chart-component identities for the covariant derivative of p
    grad = cov_derivative_exprs(p, metric)
    gradv = {key: sp.lambdify((X1, X2), expr, "numpy")(x1v, x2v) * np.ones(n_samples)
             for key, expr in grad.items()}
    t_col, n_col = chart.boundary_frame(theta)
    fbound = {idx: f.comp_values(idx, pts) for idx in sorted_indices(m)}

    def contract_grad(der_col, slot_cols):
        total = np.zeros(n_samples)
        for j in range(2):
            for full in itertools.product(range(2), repeat=m - 1):
                w = der_col[:, j].copy()
                for s in range(m - 1):
                    w = w * slot_cols[s][:, full[s]]
                total += w * gradv[(j, tuple(sorted(full)))]
        return total

    def contract_f(slot_cols):
        total = np.zeros(n_samples)
        for full in itertools.product(range(2), repeat=m):
            w = np.ones(n_samples)
            for s in range(m):
                w = w * slot_cols[s][:, full[s]]
            total += w * fbound[tuple(sorted(full))]
        return total

    normal_resid = 0.0
    tangent_resid = 0.0
    for pat in sorted_indices(m - 1):  # pattern of the p-component slots
        l = sum(1 for a in pat if a == 0)
        slot_cols = [t_col if a == 0 else n_col for a in pat]
        lhs = contract_grad(n_col, slot_cols)
        rhs = (m / (m - l)) * contract_f(slot_cols + [n_col, ])
        normal_resid = max(normal_resid, float(np.max(np.abs(lhs - rhs))))
        tan = contract_grad(t_col, slot_cols)
        tangent_resid = max(tangent_resid, float(np.max(np.abs(tan))))

    return {"sup_sigma_grad_minus_f": sup,
            "normal_derivative_residual": normal_resid,
            "tangential_derivative_residual": tangent_resid,
            "n_samples": int(n_samples)}
