"""Scalar functions on the unit sphere bundle and sections of the
normal bundle, with the full first-order operator calculus.

The fiber over ``x`` is parametrized by the Euclidean angle ``alpha`` of
``w = g(x)^{1/2} v``; this makes the fiber g-arclength exactly ``alpha``
and the vertical Laplacian eigenfunctions exactly ``e^{i k alpha}``.  In
two dimensions the normal bundle is trivialized by the oriented g-unit
vector ``vperp``, which is parallel along the flow, so every section
operation reduces to a scalar operation on its frame coefficient.

Three function representations share the operator layer:

* symbolic -- sympy expressions in ``(x1, x2, alpha)``; derivatives are
  exact.  Available for the analytic (conformal) metric families.
* callable -- arbitrary ``(x, alpha) -> value`` closures; x- and
  alpha-derivatives by central differences of step 1e-5.  This is the
  cross-validation path and the only one for grid metrics.
* grid -- values on an ``SMGrid``; alpha- and theta-derivatives are
  spectral, radial derivatives use the Gauss-Legendre differentiation
  matrix.  Used for integral functions produced by the flow.
"""

from __future__ import annotations

import numpy as np
import sympy as sp

from .errors import GridMismatch, NotPureDegree, ResolutionTooLow
from .metrics import frame_coefficients, sqrt_spd_2x2
from .quadrature import DiskQuadrature

__all__ = [
    "ALPHA",
    "SMGrid",
    "SMFunction",
    "SymbolicSM",
    "CallableSM",
    "GridSM",
    "NSection",
    "basic_derivatives",
    "x_scalar",
    "x_section",
    "grad_v",
    "grad_h",
    "div_v",
    "div_h",
    "vertical_laplacian",
    "fiber_fourier",
    "fiber_synthesis",
    "degree_component",
    "x_plus_minus",
    "sm_inner",
    "n_inner",
    "random_sm_expr",
]

X1, X2 = sp.symbols("x1 x2", real=True)
ALPHA = sp.Symbol("alpha", real=True)

_FD_STEP = 1e-5


def _lagrange_diff_matrix(nodes):
    n = len(nodes)
    w = np.ones(n)
    for i in range(n):
        w[i] = 1.0 / np.prod(nodes[i] - np.delete(nodes, i))
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                d[i, j] = (w[j] / w[i]) / (nodes[i] - nodes[j])
        d[i, i] = -np.sum(d[i, np.arange(n) != i])
    return d


def _spectral_diff(values, axis):
    n = values.shape[axis]
    k = np.fft.fftfreq(n, d=1.0 / n) * 1j
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    return np.real(np.fft.ifft(np.fft.fft(values, axis=axis) * k.reshape(shape), axis=axis))


class SMGrid:
    """Product grid: Gauss-Legendre polar nodes times uniform fiber angles.

    ``n_alpha`` must be even; fiber degrees up to ``n_alpha // 4`` are
    resolved without aliasing in the operator tests.
    """

    def __init__(self, n_r=24, n_phi=48, n_alpha=64):
        if n_alpha % 2 != 0 or n_alpha < 4:
            raise ValueError("n_alpha must be even and >= 4")
        self.disk = DiskQuadrature(n_r, n_phi)
        self.n_r, self.n_phi, self.n_alpha = n_r, n_phi, n_alpha
        self.alpha = 2 * np.pi * np.arange(n_alpha) / n_alpha
        self.d_r = _lagrange_diff_matrix(self.disk.r)
        self._frames = {}

    @property
    def shape(self):
        return (self.n_r, self.n_phi, self.n_alpha)

    @property
    def max_degree(self):
        return self.n_alpha // 4

    def points(self):
        return self.disk.points  # (n_r, n_phi, 2)

    def mesh(self):
        """Broadcast spatial points and fiber angles to the full shape."""
        pts = self.disk.points[:, :, None, :]
        al = self.alpha[None, None, :]
        x = np.broadcast_to(pts, self.shape + (2,))
        a = np.broadcast_to(al, self.shape)
        return x, a

    def weights(self, metric):
        return self.disk.weights(metric)[:, :, None] * (2 * np.pi / self.n_alpha)

    def frame(self, metric):
        """Frame coefficient arrays on the full mesh, cached per metric."""
        key = id(metric)
        if key not in self._frames:
            x, a = self.mesh()
            self._frames[key] = frame_coefficients(metric, x, a)
        return self._frames[key]

    def dx_scalar(self, values):
        """Cartesian spatial derivatives of grid values (..., same shape)."""
        du_dr = np.einsum("ij,jkl->ikl", self.d_r, values)
        du_dth = _spectral_diff(values, axis=1)
        r = self.disk.r[:, None, None]
        th = self.disk.theta[None, :, None]
        ct, st = np.cos(th), np.sin(th)
        dx1 = ct * du_dr - st / r * du_dth
        dx2 = st * du_dr + ct / r * du_dth
        return dx1, dx2


class SMFunction:
    """Base class; concrete kinds are Symbolic/Callable/Grid."""

    kind = None

    def __init__(self, metric):
        self.metric = metric

    def on_grid(self, grid):
        raise NotImplementedError

    def values_on(self, grid):
        raise NotImplementedError


class SymbolicSM(SMFunction):
    def __init__(self, metric, expr):
        if metric.symbolic is None:
            raise ValueError("symbolic sphere-bundle functions need an analytic metric")
        super().__init__(metric)
        self.expr = sp.sympify(expr)
        self._fn = None

    kind = "symbolic"

    def _lambdified(self):
        if self._fn is None:
            self._fn = sp.lambdify((X1, X2, ALPHA), self.expr, "numpy")
        return self._fn

    def __call__(self, x, alpha):
        x = np.asarray(x, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        val = self._lambdified()(x[..., 0], x[..., 1], alpha)
        shape = np.broadcast_shapes(x.shape[:-1], alpha.shape)
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()

    def values_on(self, grid):
        x, a = grid.mesh()
        return self(x, a)

    def on_grid(self, grid):
        return GridSM(self.metric, grid, self.values_on(grid))

    def flow_integrand(self):
        """As a callable of raw phase-space coordinates ``(x, v)``."""
        def fn(x, v):
            sq = sqrt_spd_2x2(self.metric.g(x))
            w = np.einsum("...ij,...j->...i", sq, v)
            alpha = np.arctan2(w[..., 1], w[..., 0])
            return self(x, alpha)
        return fn


class CallableSM(SMFunction):
    def __init__(self, metric, fn, fd_step=_FD_STEP):
        super().__init__(metric)
        self.fn = fn
        self.fd_step = fd_step

    kind = "callable"

    def __call__(self, x, alpha):
        return np.asarray(self.fn(np.asarray(x, float), np.asarray(alpha, float)),
                          dtype=float)

    def values_on(self, grid):
        x, a = grid.mesh()
        return self(x, a)

    def on_grid(self, grid):
        return GridSM(self.metric, grid, self.values_on(grid))

    def partials(self, x, alpha):
        """(d_x1 u, d_x2 u, d_alpha u) by central differences."""
        h = self.fd_step
        e1 = np.zeros_like(x)
        e1[..., 0] = h
        e2 = np.zeros_like(x)
        e2[..., 1] = h
        dx1 = (self.fn(x + e1, alpha) - self.fn(x - e1, alpha)) / (2 * h)
        dx2 = (self.fn(x + e2, alpha) - self.fn(x - e2, alpha)) / (2 * h)
        da = (self.fn(x, alpha + h) - self.fn(x, alpha - h)) / (2 * h)
        return dx1, dx2, da


class GridSM(SMFunction):
    def __init__(self, metric, grid, values):
        super().__init__(metric)
        self.grid = grid
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != grid.shape:
            raise GridMismatch("values do not match the grid shape")

    kind = "grid"

    def values_on(self, grid):
        if grid is not self.grid:
            raise GridMismatch("grid functions are bound to their grid")
        return self.values

    def on_grid(self, grid):
        if grid is not self.grid:
            raise GridMismatch("grid functions are bound to their grid")
        return self

    def to_csv(self, path):
        """Dump as plot-ready rows ``x1, x2, alpha, value``."""
        x, a = self.grid.mesh()
        cols = np.stack([x[..., 0].ravel(), x[..., 1].ravel(),
                         a.ravel(), self.values.ravel()], axis=1)
        with open(path, "w") as fh:
            fh.write("x1,x2,alpha,value\n")
            for row in cols:
                fh.write(",".join(repr(float(c)) for c in row) + "\n")

    def spectral_tail(self):
        """Energy fraction in the two highest resolved fiber modes."""
        co = np.fft.fft(self.values, axis=2) / self.grid.n_alpha
        total = np.sum(np.abs(co) ** 2)
        n = self.grid.n_alpha
        top = [n // 2] if n % 2 == 0 else [n // 2, (n + 1) // 2]
        tail = sum(np.sum(np.abs(co[:, :, t]) ** 2) for t in set(top))
        return float(tail / max(total, 1e-300))


class NSection:
    """Section of the normal bundle, stored as its ``vperp`` coefficient."""

    def __init__(self, coeff):
        self.coeff = coeff

    @property
    def metric(self):
        return self.coeff.metric

    def values_on(self, grid):
        return self.coeff.values_on(grid)


# -- symbolic frame ---------------------------------------------------------


def _symbolic_frame(metric):
    model = metric.symbolic
    phi = model.phi.subs({model.x1: X1, model.x2: X2})
    p1, p2 = sp.diff(phi, X1), sp.diff(phi, X2)
    em = sp.exp(-phi)
    s_rot = -sp.sin(ALPHA) * p1 + sp.cos(ALPHA) * p2
    p_rot = sp.cos(ALPHA) * p1 + sp.sin(ALPHA) * p2
    return {"em": em, "S": s_rot, "P": p_rot}


def _sym_X(metric, expr):
    f = _symbolic_frame(metric)
    return f["em"] * (sp.cos(ALPHA) * sp.diff(expr, X1)
                      + sp.sin(ALPHA) * sp.diff(expr, X2)
                      + f["S"] * sp.diff(expr, ALPHA))


def _sym_Xperp(metric, expr):
    f = _symbolic_frame(metric)
    return f["em"] * (-sp.sin(ALPHA) * sp.diff(expr, X1)
                      + sp.cos(ALPHA) * sp.diff(expr, X2)
                      - f["P"] * sp.diff(expr, ALPHA))


# -- operator layer ---------------------------------------------------------


def _direction_scalar(u, which):
    """Apply X (``which='X'``) or the perpendicular horizontal derivative
    (``which='Xp'``) or the vertical derivative (``'V'``) to a scalar."""
    metric = u.metric
    if u.kind == "symbolic":
        if which == "X":
            return SymbolicSM(metric, _sym_X(metric, u.expr))
        if which == "Xp":
            return SymbolicSM(metric, _sym_Xperp(metric, u.expr))
        return SymbolicSM(metric, sp.diff(u.expr, ALPHA))

    if u.kind == "callable":
        parent = u

        def fn(x, alpha):
            dx1, dx2, da = parent.partials(x, alpha)
            if which == "V":
                return da
            fr = frame_coefficients(metric, x, alpha)
            if which == "X":
                return fr["v"][..., 0] * dx1 + fr["v"][..., 1] * dx2 + fr["A"] * da
            return (fr["vperp"][..., 0] * dx1 + fr["vperp"][..., 1] * dx2
                    + fr["B"] * da)

        return CallableSM(metric, fn, fd_step=u.fd_step)

    # grid kind
    grid = u.grid
    if which == "V":
        return GridSM(metric, grid, _spectral_diff(u.values, axis=2))
    fr = grid.frame(metric)
    dx1, dx2 = grid.dx_scalar(u.values)
    da = _spectral_diff(u.values, axis=2)
    if which == "X":
        vals = fr["v"][..., 0] * dx1 + fr["v"][..., 1] * dx2 + fr["A"] * da
    else:
        vals = fr["vperp"][..., 0] * dx1 + fr["vperp"][..., 1] * dx2 + fr["B"] * da
    return GridSM(metric, grid, vals)


def x_scalar(u):
    """Geodesic derivative of a scalar sphere-bundle function."""
    return _direction_scalar(u, "X")


def grad_v(u):
    """Vertical gradient, as a normal-bundle section."""
    return NSection(_direction_scalar(u, "V"))


def grad_h(u):
    """Horizontal gradient, as a normal-bundle section."""
    return NSection(_direction_scalar(u, "Xp"))


def vertical_laplacian(u):
    """Fiberwise Laplacian: ``-div_v grad_v``."""
    return _negate(_direction_scalar(_direction_scalar(u, "V"), "V"))


def _negate(u):
    if u.kind == "symbolic":
        return SymbolicSM(u.metric, -u.expr)
    if u.kind == "callable":
        parent = u
        return CallableSM(u.metric, lambda x, a: -parent.fn(x, a), fd_step=u.fd_step)
    return GridSM(u.metric, u.grid, -u.values)


def x_section(w):
    """Geodesic derivative of a section: the frame is parallel along the
    flow, so this is the scalar geodesic derivative of the coefficient."""
    return NSection(_direction_scalar(w.coeff, "X"))


def div_v(w):
    """Vertical divergence of a section."""
    return _direction_scalar(w.coeff, "V")


def div_h(w):
    """Horizontal divergence of a section.

    For conformal metrics this is exactly the perpendicular horizontal
    derivative of the coefficient; general metrics pick up a zeroth
    order frame term.
    """
    u = w.coeff
    metric = u.metric
    main = _direction_scalar(u, "Xp")
    if metric.is_conformal:
        return main
    if u.kind == "callable":
        parent = u

        def fn(x, alpha):
            fr = frame_coefficients(metric, x, alpha)
            return main.fn(x, alpha) + fr["c_h"] * parent.fn(x, alpha)

        return CallableSM(metric, fn, fd_step=u.fd_step)
    if u.kind == "grid":
        fr = u.grid.frame(metric)
        return GridSM(metric, u.grid, main.values + fr["c_h"] * u.values)
    raise ValueError("symbolic functions require an analytic metric")


def basic_derivatives(u, x=None, alpha=None, tail_tol=1e-8):
    """Horizontal and vertical basic derivatives at ``(x, alpha)``.

    Returns ``(delta, partial)`` with shapes ``(..., 2)``: the horizontal
    derivatives ``delta_j u`` and the vertical derivatives
    ``partial_k u`` of the 0-homogeneous extension.  Grid functions are
    differentiated spectrally on their own grid (pass ``x = None``) and
    must resolve their fiber content (``ResolutionTooLow`` otherwise).
    """
    metric = u.metric
    if u.kind == "grid":
        if u.spectral_tail() > tail_tol:
            raise ResolutionTooLow("fiber spectral tail above tolerance")
        if x is not None:
            raise ValueError("grid functions give derivatives on their own nodes")
        da = _spectral_diff(u.values, axis=2)
        dx1, dx2 = u.grid.dx_scalar(u.values)
        x_mesh, _ = u.grid.mesh()
        fr = u.grid.frame(metric)
        grad = np.stack([dx1, dx2], axis=-1)
        delta = grad + fr["C"] * da[..., None]
        g = metric.g(x_mesh)
        vplow = np.einsum("...ij,...j->...i", g, fr["vperp"])
        return delta, vplow * da[..., None]

    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if u.kind == "symbolic":
        dx1 = SymbolicSM(metric, sp.diff(u.expr, X1))(x, alpha)
        dx2 = SymbolicSM(metric, sp.diff(u.expr, X2))(x, alpha)
        da = SymbolicSM(metric, sp.diff(u.expr, ALPHA))(x, alpha)
    else:
        dx1, dx2, da = u.partials(x, alpha)

    fr = frame_coefficients(metric, x, alpha)
    grad = np.stack([dx1, dx2], axis=-1)
    delta = grad + fr["C"] * da[..., None]
    g = metric.g(x)
    vplow = np.einsum("...ij,...j->...i", g, fr["vperp"])
    partial = vplow * da[..., None]
    return delta, partial


# -- fiber Fourier ---------------------------------------------------------


def fiber_fourier(u):
    """Fiberwise Fourier coefficients ``c_k`` with ``u = sum c_k e^{i k a}``."""
    if u.kind != "grid":
        raise ValueError("fiber_fourier needs grid values")
    return np.fft.fft(u.values, axis=2) / u.grid.n_alpha


def fiber_synthesis(metric, grid, coeffs):
    vals = np.real(np.fft.ifft(coeffs * grid.n_alpha, axis=2))
    return GridSM(metric, grid, vals)


def degree_component(u, k):
    """Projection onto fiber degree ``k`` (modes ``+-k``)."""
    co = fiber_fourier(u)
    keep = np.zeros_like(co)
    n = u.grid.n_alpha
    keep[:, :, k % n] = co[:, :, k % n]
    if k != 0:
        keep[:, :, (-k) % n] = co[:, :, (-k) % n]
    return fiber_synthesis(u.metric, u.grid, keep)


def degree_norms(u, metric=None):
    """L^2 norms of every fiber-degree component (Parseval, exact)."""
    metric = metric or u.metric
    co = fiber_fourier(u)
    w = u.grid.disk.weights(metric) * (2 * np.pi)
    n = u.grid.n_alpha
    out = np.zeros(n // 2 + 1)
    for k in range(n // 2 + 1):
        e = np.abs(co[:, :, k % n]) ** 2
        if k != 0 and (-k) % n != k % n:
            e = e + np.abs(co[:, :, (-k) % n]) ** 2
        out[k] = np.sum(w * e)
    return np.sqrt(out)


def x_plus_minus(u, k, purity_tol=1e-8):
    """Split ``X u_k`` into its degree ``k+1`` and ``k-1`` parts.

    ``u`` must be a grid function of pure fiber degree ``k``; by the
    mapping property the geodesic derivative is supported on degrees
    ``k +- 1`` and the split is a spectral projection.  Degree-lowering
    output for ``k = 0`` is zero by convention.
    """
    if u.kind != "grid":
        raise ValueError("x_plus_minus needs grid values (project first)")
    co = fiber_fourier(u)
    n = u.grid.n_alpha
    energy = np.sum(np.abs(co) ** 2, axis=(0, 1))
    total = energy.sum()
    own = energy[k % n] + (energy[(-k) % n] if k != 0 else 0.0)
    if total > 0 and (total - own) / total > purity_tol:
        raise NotPureDegree(f"input has fiber energy off degree {k}")
    xu = x_scalar(u)
    up = degree_component(xu, k + 1)
    um = degree_component(xu, k - 1) if k >= 1 else GridSM(u.metric, u.grid,
                                                           np.zeros(u.grid.shape))
    return up, um


# -- inner products ----------------------------------------------------------


def sm_inner(u, w, grid=None):
    """L^2 inner product over the sphere bundle."""
    if isinstance(u, NSection) or isinstance(w, NSection):
        raise TypeError("use n_inner for sections")
    gu = u if u.kind == "grid" else u.on_grid(grid)
    gw = w if w.kind == "grid" else w.on_grid(grid)
    if gu.grid is not gw.grid:
        raise GridMismatch("operands live on different grids")
    wgt = gu.grid.weights(gu.metric)
    return float(np.sum(wgt * gu.values * gw.values))


def n_inner(w1, w2, grid=None):
    """L^2 inner product of sections (the frame is g-orthonormal)."""
    return sm_inner(w1.coeff, w2.coeff, grid)


def sm_norm(u, grid=None):
    return float(np.sqrt(max(sm_inner(u, u, grid), 0.0)))


# -- test-function generator -------------------------------------------------


def random_sm_expr(rng, max_xdeg=2, max_fiber=3, boundary_factor=True):
    """Seeded random trig-polynomial sphere-bundle function (sympy)."""
    from .tensors import random_poly_tensor

    expr = sp.Integer(0)
    for k in range(max_fiber + 1):
        pc = random_poly_tensor(0, max_xdeg, rng).comps[()].to_sympy()
        if k == 0:
            expr += pc
            continue
        ps = random_poly_tensor(0, max_xdeg, rng).comps[()].to_sympy()
        expr += pc * sp.cos(k * ALPHA) + ps * sp.sin(k * ALPHA)
    if boundary_factor:
        expr = (1 - X1**2 - X2**2) * expr
    return expr
