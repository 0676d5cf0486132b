"""Numerical verification of the operator identities, energy estimates
and constants used in the injectivity argument for the transform.

Every check produces one or more ``CheckResult`` rows with an explicit
left-hand side, right-hand side, residual, tolerance, verdict and the
verdict that was *expected*.  Negative controls (a parity check on data
with nonvanishing transform, the transport-energy inequality on a
positive-curvature metric) are first-class: their rows carry
``expected='fail'`` and the suite is healthy only when they do fail.

All randomness is drawn from one seeded generator, so reports are
reproducible bit for bit on a given platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import sympy as sp

from . import __version__ as _version
from .backend import BACKEND
from .bundle import (ALPHA, X1, X2, CallableSM, GridSM, NSection, SMGrid,
                     SymbolicSM, degree_component, degree_norms, div_h, div_v,
                     fiber_fourier, grad_h, grad_v, random_sm_expr, sm_inner,
                     sm_norm, vertical_laplacian, x_plus_minus, x_scalar,
                     x_section)
from .flow import diameter, trace_to_boundary
from .metrics import MetricField, frame_coefficients
from .quadrature import DiskQuadrature
from .tensors import (PolyTensorField, Poly2D, l2_inner_tensor,
                      random_poly_tensor, random_potential, sorted_indices,
                      sym_cov_derivative)
from .transform import BoundaryFan, integral_function, santalo_integral

__all__ = [
    "CHECK_NAMES",
    "CheckResult",
    "VerificationReport",
    "ToleranceConfig",
    "EstimateConstants",
    "run_checks",
]

CHECK_NAMES = [
    "commutators",
    "degree_commutators",
    "pestov",
    "pestov_ineq",
    "santalo",
    "liouville",
    "friedrichs",
    "index_form",
    "l2_chain",
    "parity",
    "norm_identity",
    "constant_bound",
    "xpm_bound",
]


@dataclass
class CheckResult:
    name: str
    lhs: float
    rhs: float
    residual: float
    tol: float
    verdict: str
    expected: str = "pass"
    extras: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.verdict == self.expected

    def to_json_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "residual": self.residual, "tol": self.tol,
                "verdict": self.verdict, "expected": self.expected,
                "extras": self.extras}


def _result(name, lhs, rhs, residual, tol, expected="pass", **extras):
    verdict = "pass" if residual <= tol else "fail"
    return CheckResult(name=name, lhs=float(lhs), rhs=float(rhs),
                       residual=float(residual), tol=float(tol),
                       verdict=verdict, expected=expected, extras=extras)


@dataclass
class ToleranceConfig:
    """Per-check tolerances and discretization parameters."""

    commutators_analytic: float = 1e-6
    commutators_fd: float = 1e-4
    degree_commutators: float = 1e-8
    pestov: float = 1e-3
    pestov_ineq: float = 1e-6
    santalo: float = 1e-3
    liouville: float = 1e-3
    liouville_flat: float = 1e-12
    friedrichs_slack: float = 1e-6
    index_form_slack: float = 1e-6
    l2_chain_eq: float = 2e-3
    l2_chain_slack: float = 1e-6
    parity: float = 1e-4
    norm_identity: float = 1e-6
    xpm_bound_slack: float = 1e-6

    n_r: int = 24
    n_phi: int = 48
    n_alpha: int = 64
    n_boundary: int = 128
    n_dir: int = 32
    step: float = 1e-3
    n_functions: int = 5
    seed: int = 0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if name.startswith("n_") and value <= 0:
                raise ValueError(f"{name} must be positive")
        if self.step <= 0:
            raise ValueError("step must be positive")


class EstimateConstants:
    """Degree-shift constants and the index-form coercivity constant."""

    @staticmethod
    def C(n, k):
        if 2 * k + n - 3 <= 0:
            raise ValueError("C(n, k) needs 2k + n - 3 > 0")
        return Fraction(2 * k + n - 1, 2 * k + n - 3)

    @staticmethod
    def B(n, l, k):
        out = Fraction(1)
        for p in range(1, l + 1):
            out *= EstimateConstants.C(n, k + 2 * p)
        return out

    def __init__(self, metric=None, d=None, step=2e-3):
        self.diameter = d if d is not None else (
            diameter(metric, step=step) if metric is not None else None)

    @property
    def epsilon_index(self):
        """Coercivity constant for the global index form: 1 / d^2."""
        return 1.0 / self.diameter**2


@dataclass
class VerificationReport:
    results: list
    environment: dict
    notes: list = field(default_factory=list)

    @property
    def all_ok(self):
        return all(r.ok for r in self.results)

    def to_json_dict(self):
        return {"environment": self.environment,
                "notes": list(self.notes),
                "results": [r.to_json_dict() for r in self.results],
                "all_ok": self.all_ok}

    def table(self):
        lines = []
        head = f"{'check':38s} {'residual':>12s} {'tol':>10s} {'verdict':>8s} {'expected':>8s} ok"
        lines.append(head)
        lines.append("-" * len(head))
        for r in self.results:
            mark = "ok" if r.ok else "XX"
            lines.append(f"{r.name:38.38s} {r.residual:12.3e} {r.tol:10.1e} "
                         f"{r.verdict:>8s} {r.expected:>8s} {mark}")
        lines.append(f"overall: {'ok' if self.all_ok else 'FAILED'} "
                     f"({sum(r.ok for r in self.results)}/{len(self.results)})")
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines)


# -- helpers -----------------------------------------------------------------


def _norm2(u, grid):
    return sm_inner(u, u, grid)


def _hlike_norm(u, grid):
    parts = [_norm2(u, grid), _norm2(x_scalar(u), grid),
             _norm2(grad_v(u).coeff, grid), _norm2(grad_h(u).coeff, grid)]
    return float(np.sqrt(sum(parts)))


def _curvature_weighted_norm2(w_coeff, metric, grid):
    """Integral of K |W|^2 over the sphere bundle."""
    vals = w_coeff.values_on(grid)
    k = metric.gauss_curvature(grid.points())[:, :, None]
    return float(np.sum(grid.weights(metric) * k * vals**2))


def _seeded_functions(metric, rng, n, boundary_factor=True, max_fiber=3,
                      max_xdeg=2):
    return [SymbolicSM(metric, random_sm_expr(rng, max_xdeg, max_fiber,
                                              boundary_factor))
            for _ in range(n)]


def _nonpositive_curvature(metric, n=512, seed=0):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1, 1, (4 * n, 2))
    xs = xs[xs[:, 0] ** 2 + xs[:, 1] ** 2 < 0.995][:n]
    return float(np.max(metric.gauss_curvature(xs))) <= 1e-12


# -- individual checks --------------------------------------------------------


def check_commutators(metric, grid, cfg, rng):
    """First-order commutator identities, analytic and finite-difference
    paths."""
    out = []
    paths = [("analytic", cfg.commutators_analytic)]
    if metric.symbolic is None:
        paths = []
    paths.append(("fd", cfg.commutators_fd))
    funcs = _seeded_functions(metric, rng, cfg.n_functions)
    for path, tol in paths:
        for i, u_sym in enumerate(funcs):
            u = u_sym if path == "analytic" else CallableSM(metric, u_sym.__call__)
            scale = max(_hlike_norm(u_sym, grid), 1e-300)
            pairs = {
                "X_gradv": LhsRhs(x_section(grad_v(u)).coeff,
                                  _minus(grad_v(x_scalar(u)).coeff, grad_h(u).coeff)),
                "div_exchange": LhsRhs(_minus(div_h(grad_v(u)), div_v(grad_h(u))),
                                       x_scalar(u)),
                "X_laplacian": LhsRhs(_minus(x_scalar(vertical_laplacian(u)),
                                             vertical_laplacian(x_scalar(u))),
                                      _axpy(2.0, div_v(grad_h(u)), x_scalar(u))),
                "X_divv": LhsRhs(_minus(x_scalar(div_v(NSection(u))),
                                        div_v(x_section(NSection(u)))),
                                 _scale(div_h(NSection(u)), -1.0)),
            }
            for label, pair in pairs.items():
                resid = _grid_max_diff(pair.lhs, pair.rhs, grid) / scale
                out.append(_result(f"commutators/{path}/{label}[{i}]",
                                   0.0, 0.0, resid, tol, path=path))
    return out


class LhsRhs:
    def __init__(self, lhs, rhs):
        self.lhs = lhs
        self.rhs = rhs


def _grid_max_diff(a, b, grid):
    return float(np.max(np.abs(a.values_on(grid) - b.values_on(grid))))


def _minus(a, b):
    return _combine(a, b, -1.0)


def _axpy(wa, a, b):
    return _combine_scaled(wa, a, 1.0, b)


def _scale(a, w):
    if a.kind == "symbolic":
        return SymbolicSM(a.metric, w * a.expr)
    if a.kind == "grid":
        return GridSM(a.metric, a.grid, w * a.values)
    fn = a.fn
    return CallableSM(a.metric, lambda x, al: w * fn(x, al), fd_step=a.fd_step)


def _combine(a, b, wb):
    return _combine_scaled(1.0, a, wb, b)


def _combine_scaled(wa, a, wb, b):
    if a.kind == "symbolic" and b.kind == "symbolic":
        return SymbolicSM(a.metric, wa * a.expr + wb * b.expr)
    if a.kind == "grid" and b.kind == "grid":
        return GridSM(a.metric, a.grid, wa * a.values + wb * b.values)
    fa, fb = a.__call__, b.__call__
    return CallableSM(a.metric, lambda x, al: wa * fa(x, al) + wb * fb(x, al))


def check_degree_commutators(metric, grid, cfg, rng):
    """Degree-shift commutators with the vertical Laplacian.

    Spectrally exact; exercises the projection machinery."""
    out = []
    n = 2
    for i in range(cfg.n_functions):
        m = int(rng.integers(0, 4))
        a = random_poly_tensor(0, 2, rng).comps[()].to_sympy()
        b = random_poly_tensor(0, 2, rng).comps[()].to_sympy()
        expr = a * sp.cos(m * ALPHA) + (b * sp.sin(m * ALPHA) if m > 0 else 0)
        u = SymbolicSM(metric, expr).on_grid(grid)
        scale = max(np.sqrt(_norm2(u, grid)), 1e-300)
        up, um = x_plus_minus(u, m)
        lap_up = vertical_laplacian(up)
        lap_um = vertical_laplacian(um)
        # [X+, Lap]u = X+(m(m+n-2)u) - Lap(X+ u) = -(2m+n-1) X+ u
        r_plus = (m * (m + n - 2) * up.values - lap_up.values
                  + (2 * m + n - 1) * up.values)
        out.append(_result(f"degree_commutators/plus[m={m},{i}]", 0, 0,
                           float(np.max(np.abs(r_plus))) / scale,
                           cfg.degree_commutators))
        if m >= 1:
            r_minus = (m * (m + n - 2) * um.values - lap_um.values
                       - (2 * m + n - 3) * um.values)
            out.append(_result(f"degree_commutators/minus[m={m},{i}]", 0, 0,
                               float(np.max(np.abs(r_minus))) / scale,
                               cfg.degree_commutators))
    return out


def check_pestov(metric, grid, cfg, rng):
    """The transport energy identity for boundary-vanishing functions."""
    out = []
    for i, u in enumerate(_seeded_functions(metric, rng, cfg.n_functions)):
        xu = x_scalar(u)
        vu = grad_v(u).coeff
        lhs = _norm2(grad_v(xu).coeff, grid)
        rhs = (_norm2(x_scalar(vu), grid)
               - _curvature_weighted_norm2(vu, metric, grid)
               + _norm2(xu, grid))
        resid = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
        out.append(_result(f"pestov/identity[{i}]", lhs, rhs, resid, cfg.pestov))
    return out


def _pestov_ineq_value(metric, u, grid):
    xu = x_scalar(u)
    comm = _minus(x_scalar(vertical_laplacian(u)), vertical_laplacian(xu))
    return sm_inner(xu, comm, grid)


def check_pestov_inequality(metric, grid, cfg, rng, expected="pass"):
    """Sign of the commutator pairing; nonpositive on nonpositively
    curved metrics, and expected to break on the positive-curvature
    control."""
    out = []
    for i, u in enumerate(_seeded_functions(metric, rng, cfg.n_functions)):
        val = _pestov_ineq_value(metric, u, grid)
        scale = max(_hlike_norm(u, grid) ** 2, 1e-300)
        out.append(_result(f"pestov_ineq[{i}]", val, 0.0, val / scale,
                           cfg.pestov_ineq, expected=expected, value=val))
    return out


def _positive_curvature_control(cfg):
    """Deterministic control on a positive-curvature pocket metric.

    A pocket-localized, fiber-oscillatory function makes the curvature
    term dominate the horizontal energy, so the pairing goes positive.
    """
    metric = MetricField.conformal_c11(-2.0)
    grid = SMGrid(cfg.n_r, cfg.n_phi, max(32, cfg.n_alpha // 2))
    bump = (1 - X1**2 - X2**2) * sp.exp(
        -((X1 - sp.Rational(3, 10))**2 + X2**2) / sp.Rational(12, 100))
    u = SymbolicSM(metric, bump * sp.sin(4 * ALPHA))
    val = _pestov_ineq_value(metric, u, grid)
    scale = max(_hlike_norm(u, grid) ** 2, 1e-300)
    return _result("pestov_ineq/positive_curvature_control", val, 0.0,
                   val / scale, cfg.pestov_ineq, expected="fail",
                   control_metric=metric.metric_id(), value=val)


def check_santalo(metric, grid, cfg, rng, fan=None):
    """Volume integrals computed directly and through the boundary fan."""
    fan = fan or BoundaryFan(metric, cfg.n_boundary, cfg.n_dir)
    out = []
    for i, u in enumerate(_seeded_functions(metric, rng, cfg.n_functions)):
        lhs = sm_inner(u, SymbolicSM(metric, sp.Integer(1)), grid)
        rhs, cutoff = santalo_integral(u.flow_integrand(), metric, fan,
                                       step=cfg.step)
        resid = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
        out.append(_result(f"santalo[{i}]", lhs, rhs, resid, cfg.santalo,
                           cutoff_estimate=cutoff))
    return out


def check_liouville(metric, grid, cfg, rng):
    """The flow derivative of the phase-space volume form vanishes.

    The density is evaluated in raw coordinates: the base derivative of
    the metric determinant is taken by central differences (one-sided
    against a kink), the fiber derivative of the Christoffel part is
    analytic in the raw fiber coordinates.
    """
    pts = grid.points()
    h = 1e-5
    ddet = np.zeros(pts.shape)
    for k in range(2):
        dx = np.zeros_like(pts)
        dx[..., k] = h
        ddet[..., k] = (metric.det_g(pts + dx) - metric.det_g(pts - dx)) / (2 * h)
    det = metric.det_g(pts)
    gam = metric.christoffel(pts)
    trgam = gam[..., 0, :, 0] + gam[..., 1, :, 1]  # Gamma^i_{ki}
    x, a = grid.mesh()
    fr = grid.frame(metric)
    v = fr["v"]
    term_x = v[..., 0] * ddet[..., 0][:, :, None] + v[..., 1] * ddet[..., 1][:, :, None]
    term_v = 2 * det[:, :, None] * (trgam[..., 0][:, :, None] * v[..., 0]
                                    + trgam[..., 1][:, :, None] * v[..., 1])
    density = term_x - term_v
    w = grid.weights(metric)
    flat = metric.family == "euclidean"
    tol = cfg.liouville_flat if flat else cfg.liouville
    out = []
    funcs = [SymbolicSM(metric, sp.Integer(1))]
    funcs += _seeded_functions(metric, rng, cfg.n_functions - 1,
                               boundary_factor=False, max_fiber=2)
    for i, u in enumerate(funcs):
        vals = u.values_on(grid)
        integral = float(np.sum(w * vals * density))
        l1 = float(np.sum(w * np.abs(vals)))
        out.append(_result(f"liouville[{i}]", integral, 0.0,
                           abs(integral) / max(l1, 1e-300), tol,
                           l1_norm=l1))
    return out


def check_friedrichs(metric, grid, cfg, rng, d=None):
    """Flow-derivative control of the L^2 norm, for functions and
    sections vanishing on the boundary of the bundle."""
    d = d if d is not None else diameter(metric, step=2e-3)
    out = []
    funcs = _seeded_functions(metric, rng, cfg.n_functions)
    for i, u in enumerate(funcs):
        nu2 = _norm2(u, grid)
        nxu2 = _norm2(x_scalar(u), grid)
        slack = d**2 * nxu2 - nu2
        out.append(_result(f"friedrichs/scalar[{i}]", d**2 * nxu2, nu2,
                           max(0.0, -slack), cfg.friedrichs_slack,
                           slack=slack, diameter=d))
    for i, w in enumerate(_seeded_functions(metric, rng, cfg.n_functions)):
        sec = NSection(w)
        nw2 = _norm2(w, grid)
        nxw2 = _norm2(x_section(sec).coeff, grid)
        slack = d**2 * nxw2 - nw2
        out.append(_result(f"friedrichs/section[{i}]", d**2 * nxw2, nw2,
                           max(0.0, -slack), cfg.friedrichs_slack,
                           slack=slack, diameter=d))
    return out


def check_index_form(metric, grid, cfg, rng, d=None):
    """Coercivity of the global index form with the 1/d^2 constant."""
    d = d if d is not None else diameter(metric, step=2e-3)
    out = []
    for i, w in enumerate(_seeded_functions(metric, rng, cfg.n_functions)):
        sec = NSection(w)
        q = (_norm2(x_section(sec).coeff, grid)
             - _curvature_weighted_norm2(w, metric, grid))
        nw2 = _norm2(w, grid)
        slack = q - nw2 / d**2
        out.append(_result(f"index_form[{i}]", q, nw2 / d**2,
                           max(0.0, -slack), cfg.index_form_slack,
                           slack=slack, diameter=d))
    return out


def compute_integral_function_grid(metric, f, grid, step):
    """The integral function of a field sampled on the full bundle grid."""
    x, a = grid.mesh()
    fr = grid.frame(metric)
    states = np.concatenate([x.reshape(-1, 2), fr["v"].reshape(-1, 2)], axis=1)
    vals = integral_function(f, metric, states, step=step)
    return GridSM(metric, grid, vals.reshape(grid.shape))


def check_l2_chain(metric, grid, cfg, rng, return_u=False):
    """Degree-wise energy identities of the integral function of a
    potential-generated field (order 2).

    Includes the raising/lowering norm equalities, the one-degree
    inequality with constant C, the iterated inequality with constant B
    and the parity statement.
    """
    p = random_potential(1, 3, rng)
    f = sym_cov_derivative(p, metric)
    u = compute_integral_function_grid(metric, f, grid, cfg.step)
    nrm = np.sqrt(max(_norm2(u, grid), 1e-300))
    out = []

    # projected transport relation: the degree-(k+1) part of Xu + lam f
    # vanishes for k >= m; its size is the noise scale of the equality
    x_mesh, _ = grid.mesh()
    fr = grid.frame(metric)
    lamf = GridSM(metric, grid, f.lam(x_mesh, fr["v"]))
    xu = x_scalar(u)
    s = GridSM(metric, grid, xu.values + lamf.values)
    scale = np.sqrt(max(_norm2(lamf, grid), 1e-300))

    up2 = {}
    um2 = {}
    for k in (2, 3, 4, 5, 6):
        uk = degree_component(u, k)
        upk, umk = x_plus_minus(uk, k)
        up2[k] = _norm2(upk, grid)
        um2[k] = _norm2(umk, grid)

    for k in (2, 4):
        a = up2[k]
        b = um2[k + 2]
        resid = np.sqrt(max(_norm2(degree_component(s, k + 1), grid), 0.0)) / scale
        out.append(_result(f"l2_chain/equality[k={k}]", a, b, resid,
                           cfg.l2_chain_eq,
                           note="residual is the projected transport defect "
                                "|P_{k+1}(Xu + lam f)| / |lam f|"))
        c = float(EstimateConstants.C(2, k))
        slack = c * up2[k] - um2[k]
        out.append(_result(f"l2_chain/C_inequality[k={k}]", um2[k],
                           c * up2[k], max(0.0, -slack), cfg.l2_chain_slack,
                           constant=c, slack=slack))
    for l in (1, 2):
        bconst = float(EstimateConstants.B(2, l, 2))
        slack = bconst * up2[2 + 2 * l] - up2[2]
        out.append(_result(f"l2_chain/B_inequality[k=2,l={l}]", up2[2],
                           bconst * up2[2 + 2 * l], max(0.0, -slack),
                           cfg.l2_chain_slack, constant=bconst, slack=slack))

    nk = degree_norms(u)
    even = float(np.max(nk[0::2])) / max(nrm, 1e-300)
    out.append(_result("l2_chain/parity", even, 0.0, even, cfg.parity))
    if return_u:
        return out, u
    return out


def check_parity(metric, grid, cfg, rng, u=None, expected="pass", label=""):
    """Degree-parity of the integral function.

    With a potential-generated order-2 field the even-degree components
    vanish; with a generic field (nonzero transform) the parity is
    broken, which the negative control records."""
    m = 2
    if u is None:
        if expected == "pass":
            p = random_potential(m - 1, 3, rng)
            f = sym_cov_derivative(p, metric)
        else:
            f = random_poly_tensor(m, 3, rng)
        u = compute_integral_function_grid(metric, f, grid, cfg.step)
    nk = degree_norms(u)
    nrm = np.sqrt(max(_norm2(u, grid), 1e-300))
    resid = float(np.max(nk[m % 2::2])) / max(nrm, 1e-300)
    name = f"parity{label}" if label else "parity"
    return [_result(name, resid, 0.0, resid, cfg.parity, expected=expected)]


def _trace_free_random(m, rng, deg=3):
    """Random symmetric field, trace-free for every conformal metric."""
    if m == 0:
        return random_poly_tensor(0, deg, rng)
    a = random_poly_tensor(0, deg, rng).comps[()]
    b = random_poly_tensor(0, deg, rng).comps[()]
    neg_a = a * (-1.0)
    neg_b = b * (-1.0)
    if m == 1:
        return PolyTensorField(1, {(0,): a, (1,): b})
    if m == 2:
        return PolyTensorField(2, {(0, 0): a, (0, 1): b, (1, 1): neg_a})
    if m == 3:
        return PolyTensorField(3, {(0, 0, 0): a, (0, 0, 1): b,
                                   (0, 1, 1): neg_a, (1, 1, 1): neg_b})
    if m == 4:
        return PolyTensorField(4, {(0, 0, 0, 0): a, (0, 0, 0, 1): b,
                                   (0, 0, 1, 1): neg_a, (0, 1, 1, 1): neg_b,
                                   (1, 1, 1, 1): a})
    raise ValueError("orders up to 4")


def check_norm_identity(metric, grid, cfg, rng, orders=(0, 1, 2), n_fields=10):
    """Constancy of the norm ratio between a trace-free field and its
    sphere-bundle image.  The measured constant is recorded, not
    asserted."""
    out = []
    disk = grid.disk
    x, a = grid.mesh()
    fr = grid.frame(metric)
    for m in orders:
        ratios = []
        for _ in range(n_fields):
            f = _trace_free_random(m, rng)
            lam = GridSM(metric, grid, f.lam(x, fr["v"]))
            nl = np.sqrt(max(_norm2(lam, grid), 1e-300))
            nf = np.sqrt(max(l2_inner_tensor(f, f, metric, disk), 1e-300))
            ratios.append(nl / nf)
        ratios = np.array(ratios)
        spread = float((ratios.max() - ratios.min()) / ratios.mean())
        out.append(_result(f"norm_identity[m={m}]", ratios.max(), ratios.min(),
                           spread, cfg.norm_identity,
                           measured_constant=float(ratios.mean())))
    return out


def check_constant_bound(ns=(2, 3, 4), k_max=12, l_max=40):
    """Exact rational sweep of the estimate-chain constant bound."""
    violations = 0
    checked = 0
    worst = None
    for n in ns:
        for k in range(0, k_max + 1):
            a0 = 2 * k + n - 3
            if a0 <= 0:
                continue
            b = Fraction(1)
            for l in range(1, l_max + 1):
                b *= EstimateConstants.C(n, k + 2 * l)
                lhs = 1 + Fraction(4 * l, a0)
                checked += 1
                margin = lhs - b * b
                if margin < 0:
                    violations += 1
                if worst is None or margin < worst[0]:
                    worst = (margin, n, k, l)
            # sanity of the convention: l = 0 makes both sides 1
        checked += 1
    margin, wn, wk, wl = worst
    return [_result("constant_bound/sweep", float(violations), 0.0,
                    float(violations), 0.0, checked=checked,
                    worst_margin=float(margin), worst_at=[wn, wk, wl])]


def check_xpm_bound(metric, grid, cfg, rng):
    """Summed raising/lowering energies against the horizontal energy."""
    out = []
    kmax = 3
    for i in range(cfg.n_functions):
        expr = random_sm_expr(rng, 2, kmax, boundary_factor=True)
        u = SymbolicSM(metric, expr)
        ug = u.on_grid(grid)
        lhs = 0.0
        for k in range(kmax + 1):
            uk = degree_component(ug, k)
            upk, umk = x_plus_minus(uk, k)
            lhs += _norm2(upk, grid) + _norm2(umk, grid)
        rhs = _norm2(x_scalar(u), grid) + _norm2(grad_h(u).coeff, grid)
        slack = rhs - lhs
        resid = max(0.0, -slack) / max(rhs, 1e-300)
        out.append(_result(f"xpm_bound[{i}]", lhs, rhs, resid,
                           cfg.xpm_bound_slack, slack=slack))
    return out


# -- orchestration ------------------------------------------------------------


def run_checks(metric, selection=("all",), cfg=None):
    """Run the selected identity checks on one metric.

    Returns a ``VerificationReport``.  Negative controls run regardless
    of the configured metric.  Checks whose nonpositive-curvature
    precondition fails on the configured metric are skipped with a note.
    """
    cfg = cfg or ToleranceConfig()
    sel = set(selection)
    if "all" in sel:
        sel = set(CHECK_NAMES)
    unknown = sel - set(CHECK_NAMES)
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")

    grid = SMGrid(cfg.n_r, cfg.n_phi, cfg.n_alpha)
    rng = np.random.default_rng(cfg.seed)
    results = []
    notes = []
    nonpos = _nonpositive_curvature(metric)
    d = None
    if sel & {"friedrichs", "index_form"}:
        d = diameter(metric, step=2e-3)

    if "commutators" in sel:
        results += check_commutators(metric, grid, cfg, rng)
    if "degree_commutators" in sel:
        results += check_degree_commutators(metric, grid, cfg, rng)
    if "pestov" in sel:
        results += check_pestov(metric, grid, cfg, rng)
    if "pestov_ineq" in sel:
        if nonpos:
            results += check_pestov_inequality(metric, grid, cfg, rng)
        else:
            notes.append("pestov_ineq on the configured metric skipped: "
                         "sampled curvature is not nonpositive")
        results.append(_positive_curvature_control(cfg))
    if "santalo" in sel:
        results += check_santalo(metric, grid, cfg, rng)
    if "liouville" in sel:
        results += check_liouville(metric, grid, cfg, rng)
    if "friedrichs" in sel:
        results += check_friedrichs(metric, grid, cfg, rng, d=d)
    if "index_form" in sel:
        if nonpos:
            results += check_index_form(metric, grid, cfg, rng, d=d)
        else:
            notes.append("index_form skipped: sampled curvature is not nonpositive")
    shared_u = None
    if "l2_chain" in sel:
        chain, shared_u = check_l2_chain(metric, grid, cfg, rng, return_u=True)
        results += chain
    if "parity" in sel:
        results += check_parity(metric, grid, cfg, rng, u=shared_u)
        results += check_parity(metric, grid, cfg, rng, expected="fail",
                                label="/nonzero_transform_control")
    if "norm_identity" in sel:
        results += check_norm_identity(metric, grid, cfg, rng)
    if "constant_bound" in sel:
        results += check_constant_bound()
    if "xpm_bound" in sel:
        results += check_xpm_bound(metric, grid, cfg, rng)

    env = {"metric_id": metric.metric_id(), "backend": BACKEND,
           "version": _version, "seed": cfg.seed,
           "grids": {"n_r": cfg.n_r, "n_phi": cfg.n_phi, "n_alpha": cfg.n_alpha,
                     "n_boundary": cfg.n_boundary, "n_dir": cfg.n_dir},
           "step": cfg.step}
    return VerificationReport(results=results, environment=env, notes=notes)
