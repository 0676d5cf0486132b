"""Riemannian metrics on the closed unit disk.

Four metric families are supported:

* ``euclidean`` -- the flat metric.
* ``hyperbolic_like(rho)`` -- the constant-curvature ``K = -1`` metric
  ``g = 4 rho^2 / (1 - rho^2 |x|^2)^2 * delta`` obtained by pulling the
  Poincare disk metric back by ``x -> rho x``; smooth on the closed disk
  for ``rho in (0, 1)``.
* ``conformal_c11(eps)`` -- ``g = e^{2 phi} delta`` with
  ``phi(x) = eps * h(x1)``, ``h(t) = t^2`` for ``t >= 0`` and ``0``
  otherwise.  The first derivatives of ``g`` are Lipschitz but not
  differentiable across ``x1 = 0``; curvature exists almost everywhere
  and equals ``-2 eps e^{-2 phi}`` for ``x1 > 0`` and ``0`` for
  ``x1 < 0``.  Negative ``eps`` produces a positive-curvature pocket
  (used as a negative control).
* ``grid_sampled`` -- bilinear interpolation of tabulated ``g`` and its
  tabulated first derivatives (the derivatives are stored data, never
  differentiated from the interpolant).

All evaluators are vectorized over a leading batch axis and immutable
after construction.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .errors import ConfigError, SingularMetric

__all__ = [
    "DomainSpec",
    "MetricField",
    "christoffel",
    "gauss_curvature",
    "gauss_curvature_fd",
    "frame_coefficients",
    "sqrt_spd_2x2",
]

_GRID_CSV_HEADER = "x1,x2,g11,g12,g22,dg11_1,dg11_2,dg12_1,dg12_2,dg22_1,dg22_2"


@dataclass(frozen=True)
class DomainSpec:
    """The computational domain: the closed Euclidean unit disk."""

    dimension: int = 2
    radius: float = 1.0

    def __post_init__(self):
        if self.dimension != 2 or self.radius != 1.0:
            raise ConfigError("only the closed unit disk in dimension 2 is implemented")


@dataclass(frozen=True)
class ConformalModel:
    """Symbolic payload ``g = e^{2 phi} delta`` for analytic families."""

    phi: sp.Expr
    x1: sp.Symbol
    x2: sp.Symbol

    @property
    def dphi(self):
        return (sp.diff(self.phi, self.x1), sp.diff(self.phi, self.x2))

    @property
    def curvature(self):
        lap = sp.diff(self.phi, self.x1, 2) + sp.diff(self.phi, self.x2, 2)
        return -sp.exp(-2 * self.phi) * lap


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have a trailing axis of length 2")
    return x


class MetricField:
    """A metric on the disk with vectorized evaluators for ``g``, ``dg``,
    Christoffel symbols and Gauss curvature.

    Construct through the classmethods; instances are immutable.
    """

    def __init__(self, family, params=None, tables=None):
        self.family = family
        self.params = dict(params or {})
        self._tables = tables
        self.domain = DomainSpec()
        self.symbolic = self._build_symbolic()

    # -- constructors ---------------------------------------------------

    @classmethod
    def euclidean(cls):
        return cls("euclidean")

    @classmethod
    def hyperbolic_like(cls, rho=0.5):
        if not 0.0 < rho < 1.0:
            raise ConfigError("hyperbolic_like scale must lie in (0, 1)")
        return cls("hyperbolic_like", {"rho": float(rho)})

    @classmethod
    def conformal_c11(cls, eps=0.05):
        return cls("conformal_c11", {"eps": float(eps)})

    @classmethod
    def from_grid_csv(cls, path):
        """Load a grid_sampled metric from CSV (see ``to_grid_csv``)."""
        raw = np.loadtxt(path, delimiter=",", skiprows=1)
        return cls._from_grid_rows(raw)

    @classmethod
    def from_grid_arrays(cls, x1, x2, g, dg):
        """Build a grid_sampled metric from node coordinates and tables.

        ``x1`` (nx,), ``x2`` (ny,) strictly increasing and uniform;
        ``g`` (nx, ny, 2, 2); ``dg`` (nx, ny, 2, 2, 2) with
        ``dg[..., k, i, j] = d_k g_ij``.
        """
        tables = _GridTables(np.asarray(x1, float), np.asarray(x2, float),
                             np.asarray(g, float), np.asarray(dg, float))
        return cls("grid_sampled", {}, tables)

    @classmethod
    def _from_grid_rows(cls, raw):
        x1s = np.unique(raw[:, 0])
        x2s = np.unique(raw[:, 1])
        nx, ny = len(x1s), len(x2s)
        if nx * ny != raw.shape[0]:
            raise ConfigError("grid CSV rows do not form a full tensor grid")
        order = np.lexsort((raw[:, 1], raw[:, 0]))  # x1 outer, x2 inner
        raw = raw[order]
        g = np.empty((nx, ny, 2, 2))
        dg = np.empty((nx, ny, 2, 2, 2))
        g11, g12, g22 = raw[:, 2], raw[:, 3], raw[:, 4]
        g[..., 0, 0] = g11.reshape(nx, ny)
        g[..., 0, 1] = g[..., 1, 0] = g12.reshape(nx, ny)
        g[..., 1, 1] = g22.reshape(nx, ny)
        cols = raw[:, 5:].reshape(nx, ny, 6)
        for k in range(2):
            dg[..., k, 0, 0] = cols[..., 0 + k]
            dg[..., k, 0, 1] = dg[..., k, 1, 0] = cols[..., 2 + k]
            dg[..., k, 1, 1] = cols[..., 4 + k]
        return cls.from_grid_arrays(x1s, x2s, g, dg)

    def to_grid_csv(self, path, n=33, extent=1.05):
        """Sample this metric on a uniform square grid and write CSV."""
        xs = np.linspace(-extent, extent, n)
        X1, X2 = np.meshgrid(xs, xs, indexing="ij")
        pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
        g = self.g(pts)
        dg = self.dg(pts)
        out = io.StringIO()
        out.write(_GRID_CSV_HEADER + "\n")
        for i in range(pts.shape[0]):
            row = [pts[i, 0], pts[i, 1], g[i, 0, 0], g[i, 0, 1], g[i, 1, 1],
                   dg[i, 0, 0, 0], dg[i, 1, 0, 0], dg[i, 0, 0, 1],
                   dg[i, 1, 0, 1], dg[i, 0, 1, 1], dg[i, 1, 1, 1]]
            out.write(",".join(repr(float(v)) for v in row) + "\n")
        with open(path, "w") as fh:
            fh.write(out.getvalue())

    # -- identity -------------------------------------------------------

    def metric_id(self):
        if self.family == "hyperbolic_like":
            return f"hyperbolic_like(rho={self.params['rho']})"
        if self.family == "conformal_c11":
            return f"conformal_c11(eps={self.params['eps']})"
        return self.family

    def __repr__(self):
        return f"MetricField({self.metric_id()})"

    @property
    def is_conformal(self):
        return self.family in ("euclidean", "hyperbolic_like", "conformal_c11")

    def _build_symbolic(self):
        x1, x2 = sp.symbols("x1 x2", real=True)
        if self.family == "euclidean":
            return ConformalModel(sp.Integer(0), x1, x2)
        if self.family == "hyperbolic_like":
            rho = sp.nsimplify(self.params["rho"], rational=True)
            phi = sp.log(2 * rho) - sp.log(1 - rho**2 * (x1**2 + x2**2))
            return ConformalModel(phi, x1, x2)
        if self.family == "conformal_c11":
            eps = sp.nsimplify(self.params["eps"], rational=True)
            phi = eps * sp.Piecewise((x1**2, x1 >= 0), (0, True))
            return ConformalModel(phi, x1, x2)
        return None

    # -- conformal scalar data (hand-coded, vectorized) ------------------

    def _phi(self, x):
        x = _as_points(x)
        if self.family == "euclidean":
            return np.zeros(x.shape[:-1])
        if self.family == "hyperbolic_like":
            rho = self.params["rho"]
            r2 = x[..., 0] ** 2 + x[..., 1] ** 2
            return np.log(2 * rho) - np.log(1 - rho**2 * r2)
        if self.family == "conformal_c11":
            eps = self.params["eps"]
            return eps * np.maximum(x[..., 0], 0.0) ** 2
        raise SingularMetric("no conformal factor for grid metrics")

    def _dphi(self, x):
        x = _as_points(x)
        out = np.zeros(x.shape)
        if self.family == "euclidean":
            return out
        if self.family == "hyperbolic_like":
            rho = self.params["rho"]
            r2 = x[..., 0] ** 2 + x[..., 1] ** 2
            c = 1.0 - rho**2 * r2
            out[..., 0] = 2 * rho**2 * x[..., 0] / c
            out[..., 1] = 2 * rho**2 * x[..., 1] / c
            return out
        if self.family == "conformal_c11":
            out[..., 0] = 2 * self.params["eps"] * np.maximum(x[..., 0], 0.0)
            return out
        raise SingularMetric("no conformal factor for grid metrics")

    # -- tensor evaluators ----------------------------------------------

    def g(self, x):
        x = _as_points(x)
        if self.is_conformal:
            e2 = np.exp(2 * self._phi(x))
            out = np.zeros(x.shape[:-1] + (2, 2))
            out[..., 0, 0] = e2
            out[..., 1, 1] = e2
            return out
        return self._tables.interp_g(x)

    def dg(self, x):
        """First derivatives ``dg[..., k, i, j] = d_k g_ij`` (Lipschitz)."""
        x = _as_points(x)
        if self.is_conformal:
            e2 = np.exp(2 * self._phi(x))
            dphi = self._dphi(x)
            out = np.zeros(x.shape[:-1] + (2, 2, 2))
            for k in range(2):
                out[..., k, 0, 0] = 2 * dphi[..., k] * e2
                out[..., k, 1, 1] = 2 * dphi[..., k] * e2
            return out
        return self._tables.interp_dg(x)

    def det_g(self, x):
        g = self.g(x)
        return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2

    def inv_g(self, x):
        g = self.g(x)
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        if np.any(det <= 0):
            raise SingularMetric("metric determinant is not positive")
        out = np.empty_like(g)
        out[..., 0, 0] = g[..., 1, 1] / det
        out[..., 1, 1] = g[..., 0, 0] / det
        out[..., 0, 1] = -g[..., 0, 1] / det
        out[..., 1, 0] = -g[..., 1, 0] / det
        return out

    def sqrt_det_g(self, x):
        det = self.det_g(x)
        if np.any(det <= 0):
            raise SingularMetric("metric determinant is not positive")
        return np.sqrt(det)

    def christoffel(self, x):
        """Levi-Civita symbols ``Gamma[..., i, j, k] = Gamma^i_{jk}``."""
        g = self.g(x)
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        if np.any(det <= 0):
            raise SingularMetric("metric determinant is not positive")
        ginv = np.empty_like(g)
        ginv[..., 0, 0] = g[..., 1, 1] / det
        ginv[..., 1, 1] = g[..., 0, 0] / det
        ginv[..., 0, 1] = ginv[..., 1, 0] = -g[..., 0, 1] / det
        dg = self.dg(x)
        # Gamma^i_jk = 1/2 g^{il} (d_j g_lk + d_k g_lj - d_l g_jk)
        bracket = (np.einsum("...jlk->...ljk", dg)
                   + np.einsum("...klj->...ljk", dg)
                   - dg)
        return 0.5 * np.einsum("...il,...ljk->...ijk", ginv, bracket)

    def gauss_curvature(self, x):
        """Gauss curvature, almost everywhere defined.

        Closed form for the analytic families; second differences of the
        tabulated data for grid metrics.
        """
        x = _as_points(x)
        if self.family == "euclidean":
            return np.zeros(x.shape[:-1])
        if self.family == "hyperbolic_like":
            return np.full(x.shape[:-1], -1.0)
        if self.family == "conformal_c11":
            eps = self.params["eps"]
            lap = 2 * eps * (x[..., 0] > 0)
            return -np.exp(-2 * self._phi(x)) * lap
        return gauss_curvature_fd(self, x)[0]

    def kink_distance(self, x):
        """Distance to the non-smoothness set (inf for smooth families)."""
        x = _as_points(x)
        if self.family == "conformal_c11":
            return np.abs(x[..., 0])
        return np.full(x.shape[:-1], np.inf)

    # -- kernel dispatch -------------------------------------------------

    def kernel_spec(self):
        """(family code, parameter vector, grid tables) for flow kernels."""
        if self.family == "euclidean":
            return 0, np.zeros(1), None
        if self.family == "hyperbolic_like":
            return 1, np.array([self.params["rho"]]), None
        if self.family == "conformal_c11":
            return 2, np.array([self.params["eps"]]), None
        return 3, np.zeros(1), self._tables


class _GridTables:
    """Bilinear interpolation tables for grid_sampled metrics."""

    def __init__(self, x1, x2, g, dg):
        if len(x1) < 2 or len(x2) < 2:
            raise ConfigError("metric grid needs at least 2 nodes per axis")
        self.x1, self.x2 = x1, x2
        self.h1 = x1[1] - x1[0]
        self.h2 = x2[1] - x2[0]
        self.g_tab = g
        self.dg_tab = dg

    def _locate(self, x):
        t1 = np.clip((x[..., 0] - self.x1[0]) / self.h1, 0, len(self.x1) - 1 - 1e-12)
        t2 = np.clip((x[..., 1] - self.x2[0]) / self.h2, 0, len(self.x2) - 1 - 1e-12)
        i = t1.astype(int)
        j = t2.astype(int)
        return i, j, t1 - i, t2 - j

    def _interp(self, tab, x):
        i, j, s, t = self._locate(x)
        extra = (1,) * (tab.ndim - 2)
        s = s.reshape(s.shape + extra)
        t = t.reshape(t.shape + extra)
        return ((1 - s) * (1 - t) * tab[i, j] + s * (1 - t) * tab[i + 1, j]
                + (1 - s) * t * tab[i, j + 1] + s * t * tab[i + 1, j + 1])

    def interp_g(self, x):
        return self._interp(self.g_tab, x)

    def interp_dg(self, x):
        return self._interp(self.dg_tab, x)

    def flat_arrays(self):
        g = self.g_tab
        dg = self.dg_tab
        gflat = np.stack([g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]], axis=-1)
        dgflat = np.stack([dg[..., 0, 0, 0], dg[..., 1, 0, 0],
                           dg[..., 0, 0, 1], dg[..., 1, 0, 1],
                           dg[..., 0, 1, 1], dg[..., 1, 1, 1]], axis=-1)
        return (np.ascontiguousarray(gflat.reshape(-1, 3)),
                np.ascontiguousarray(dgflat.reshape(-1, 6)),
                len(self.x1), len(self.x2),
                self.x1[0], self.x2[0], self.h1, self.h2)


# -- module-level operations ---------------------------------------------


def christoffel(metric, x):
    """Christoffel symbols ``Gamma^i_{jk}`` at ``x`` (symmetric in jk)."""
    return metric.christoffel(x)


def gauss_curvature(metric, x, return_flag=False):
    """Gauss curvature at ``x``; optionally also a non-smooth-point flag.

    On the non-smoothness set of a ``conformal_c11`` metric the value is
    the one-sided limit from ``x1 > 0``; the flag marks such points.
    """
    x = _as_points(x)
    k = metric.gauss_curvature(x)
    if not return_flag:
        return k
    flag = metric.kink_distance(x) == 0.0
    return k, flag


def gauss_curvature_fd(metric, x, step=1e-5):
    """Curvature from second differences of ``g`` (the independent route).

    Uses the curvature-tensor component ``R_1212 / det g`` with the
    derivative of the Christoffel symbols taken by central differences;
    near a kink line the stencil is shifted one-sided and the point is
    flagged.
    """
    x = _as_points(x)
    flat = x.reshape(-1, 2)
    shift = np.zeros_like(flat)
    near = metric.kink_distance(flat) < step
    # push the stencil to the side of the kink the point lies on
    side = np.where(flat[:, 0] >= 0, 1.0, -1.0)
    shift[near, 0] = side[near] * (step - np.abs(flat[near, 0]) + 1e-12)
    base = flat + shift

    dgamma = np.empty(flat.shape[:1] + (2, 2, 2, 2))
    for k in range(2):
        dx = np.zeros_like(flat)
        dx[:, k] = step
        dgamma[:, k] = (metric.christoffel(base + dx)
                        - metric.christoffel(base - dx)) / (2 * step)
    gam = metric.christoffel(base)
    # R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj} + Gamma terms
    r0 = (dgamma[:, 0, :, 1, :] - dgamma[:, 1, :, 0, :]
          + np.einsum("pim,pmj->pij", gam[:, :, 0, :], gam[:, :, 1, :])
          - np.einsum("pim,pmj->pij", gam[:, :, 1, :], gam[:, :, 0, :]))
    # r0[p, i, j] = R^i_{j 1 2} with k=1, l=2 (0-based k=0, l=1)
    g = metric.g(base)
    r1212 = np.einsum("pi,pi->p", g[:, 0, :], r0[:, :, 1])
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    kappa = (r1212 / det).reshape(x.shape[:-1])
    return kappa, near.reshape(x.shape[:-1])


def sqrt_spd_2x2(g):
    """Symmetric square root of SPD 2x2 matrices (batched closed form)."""
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    if np.any(det <= 0):
        raise SingularMetric("matrix is not positive definite")
    s = np.sqrt(det)
    q = np.sqrt(g[..., 0, 0] + g[..., 1, 1] + 2 * s)
    out = g.copy()
    out[..., 0, 0] += s
    out[..., 1, 1] += s
    return out / q[..., None, None]


def _dsqrt_spd_2x2(g, dg):
    """Derivatives of the SPD square root from ``g`` and ``dg``."""
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    s = np.sqrt(det)
    tr = g[..., 0, 0] + g[..., 1, 1]
    q = np.sqrt(tr + 2 * s)
    ddet = (dg[..., 0, 0] * g[..., None, 1, 1] + g[..., None, 0, 0] * dg[..., 1, 1]
            - 2 * g[..., None, 0, 1] * dg[..., 0, 1])
    ds = ddet / (2 * s[..., None])
    dtr = dg[..., 0, 0] + dg[..., 1, 1]
    dq = (dtr + 2 * ds) / (2 * q[..., None])
    num = g.copy()
    num[..., 0, 0] += s
    num[..., 1, 1] += s
    dnum = dg.copy()
    dnum[..., 0, 0] += ds
    dnum[..., 1, 1] += ds
    return (dnum / q[..., None, None, None]
            - num[..., None, :, :] * (dq / q[..., None] ** 2)[..., None, None])


def frame_coefficients(metric, x, alpha):
    """Coefficient functions of the sphere-bundle frame at ``(x, alpha)``.

    The fiber is parametrized by the Euclidean angle of ``w = g^{1/2} v``,
    so ``v = g^{-1/2} e(alpha)`` and ``vperp = g^{-1/2} e'(alpha)``.
    Returns a dict with ``v``, ``vperp``, the fiber-rotation rates ``A``
    (along the flow) and ``B`` (along the perpendicular horizontal
    direction), the per-axis rates ``C`` with ``delta_j = d_j + C_j d_a``,
    and the extra horizontal-divergence coefficient ``c_h`` (zero for
    conformal metrics).
    """
    x = _as_points(x)
    alpha = np.asarray(alpha, dtype=float)
    ca, sa = np.cos(alpha), np.sin(alpha)
    e = np.stack([ca, sa], axis=-1)
    ep = np.stack([-sa, ca], axis=-1)

    if metric.is_conformal:
        emphi = np.exp(-metric._phi(x))
        dphi = metric._dphi(x)
        v = emphi[..., None] * e
        vperp = emphi[..., None] * ep
        s_rot = -sa * dphi[..., 0] + ca * dphi[..., 1]
        p_rot = ca * dphi[..., 0] + sa * dphi[..., 1]
        a_rate = emphi * s_rot
        b_rate = -emphi * p_rot
        c_vec = np.stack([-(ep[..., 0] * p_rot - e[..., 0] * s_rot),
                          -(ep[..., 1] * p_rot - e[..., 1] * s_rot)], axis=-1)
        ch = np.zeros_like(a_rate)
        return {"v": v, "vperp": vperp, "A": a_rate, "B": b_rate,
                "C": c_vec, "c_h": ch}

    g = metric.g(x)
    dg = metric.dg(x)
    sq = sqrt_spd_2x2(g)
    dsq = _dsqrt_spd_2x2(g, dg)
    det_sq = sq[..., 0, 0] * sq[..., 1, 1] - sq[..., 0, 1] ** 2
    isq = np.empty_like(sq)
    isq[..., 0, 0] = sq[..., 1, 1] / det_sq
    isq[..., 1, 1] = sq[..., 0, 0] / det_sq
    isq[..., 0, 1] = isq[..., 1, 0] = -sq[..., 0, 1] / det_sq

    v = np.einsum("...ij,...j->...i", isq, e)
    vperp = np.einsum("...ij,...j->...i", isq, ep)
    gam = metric.christoffel(x)
    # C_j = e'^T (d_j g^{1/2}) v - (g vperp)_l Gamma^l_{jk} v^k
    term1 = np.einsum("...l,...jlk,...k->...j", ep, dsq, v)
    vplow = np.einsum("...ij,...j->...i", g, vperp)
    term2 = np.einsum("...l,...ljk,...k->...j", vplow, gam, v)
    c_vec = term1 - term2
    a_rate = np.einsum("...j,...j->...", v, c_vec)
    b_rate = np.einsum("...j,...j->...", vperp, c_vec)

    # c_h = sum_j [ d_j (vperp^j) + C_j d_a (vperp^j) ] + Gamma^i_{ji} vperp^j
    disq = -np.einsum("...im,...jmn,...nk->...jik", isq, dsq, isq)
    dvp = np.einsum("...jik,...k->...ji", disq, ep)  # d_j (vperp^i) at fixed alpha
    trace_dvp = dvp[..., 0, 0] + dvp[..., 1, 1]
    # d_a vperp = g^{-1/2} e'' = -v
    ch = (trace_dvp + np.einsum("...j,...j->...", c_vec, -v)
          + np.einsum("...iji,...j->...", gam, vperp))
    return {"v": v, "vperp": vperp, "A": a_rate, "B": b_rate,
            "C": c_vec, "c_h": ch}
