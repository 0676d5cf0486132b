"""Symmetric tensor fields on the disk and their covariant calculus.

Fields carry order ``m`` and one symmetric component per sorted index
tuple.  Three representations share one interface:

* ``PolyTensorField`` -- components are bivariate polynomials (the
  primary format; differentiation is exact),
* ``SympyTensorField`` -- components are sympy expressions (produced by
  covariant operations on analytic metrics),
* ``FuncTensorField`` -- components are plain callables, optionally with
  stored first derivatives (the sampled-data route).

``PotentialField`` fixes the boundary behaviour: every component is
``(1 - |x|^2) * q(x)`` with polynomial ``q`` and is evaluated in
factored form, so it vanishes on the unit circle exactly.
"""

from __future__ import annotations

import itertools
import json
import math

import numpy as np
import sympy as sp

from .errors import (MissingDerivatives, OrderMismatch, OrderTooLow,
                     UnsupportedOrder)

__all__ = [
    "Poly2D",
    "SymmetricTensorField",
    "PolyTensorField",
    "SympyTensorField",
    "FuncTensorField",
    "PotentialField",
    "sorted_indices",
    "multiplicity",
    "symmetrize",
    "sym_cov_derivative",
    "trace",
    "trace_free_decompose",
    "lambda_eval",
    "l2_inner_tensor",
    "random_poly_tensor",
    "random_potential",
    "field_to_json",
    "field_from_json",
]

X1, X2 = sp.symbols("x1 x2", real=True)


class Poly2D:
    """Polynomial in (x1, x2) stored as a dense coefficient matrix
    ``c[i, j] ~ x1^i x2^j``."""

    __slots__ = ("c", "_dcache")

    def __init__(self, c):
        c = np.atleast_2d(np.asarray(c, dtype=float))
        self.c = c
        self._dcache = {}

    @classmethod
    def zero(cls):
        return cls([[0.0]])

    @classmethod
    def const(cls, a):
        return cls([[float(a)]])

    @classmethod
    def from_terms(cls, terms):
        if not terms:
            return cls.zero()
        px = max(int(t[1]) for t in terms)
        py = max(int(t[2]) for t in terms)
        c = np.zeros((px + 1, py + 1))
        for coef, i, j in terms:
            c[int(i), int(j)] += float(coef)
        return cls(c)

    def terms(self):
        out = []
        for i in range(self.c.shape[0]):
            for j in range(self.c.shape[1]):
                if self.c[i, j] != 0.0:
                    out.append([float(self.c[i, j]), i, j])
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.polynomial.polynomial.polyval2d(x[..., 0], x[..., 1], self.c)

    def diff(self, axis):
        if axis not in self._dcache:
            c = np.polynomial.polynomial.polyder(self.c, 1, axis=axis)
            self._dcache[axis] = Poly2D(np.atleast_2d(c))
        return self._dcache[axis]

    def _binop(self, other, sign):
        oc = other.c if isinstance(other, Poly2D) else np.atleast_2d(float(other))
        n0 = max(self.c.shape[0], oc.shape[0])
        n1 = max(self.c.shape[1], oc.shape[1])
        out = np.zeros((n0, n1))
        out[: self.c.shape[0], : self.c.shape[1]] += self.c
        out[: oc.shape[0], : oc.shape[1]] += sign * oc
        return Poly2D(out)

    def __add__(self, other):
        return self._binop(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binop(other, -1.0)

    def __neg__(self):
        return Poly2D(-self.c)

    def __mul__(self, other):
        if not isinstance(other, Poly2D):
            return Poly2D(self.c * float(other))
        a, b = self.c, other.c
        out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                if a[i, j] != 0.0:
                    out[i: i + b.shape[0], j: j + b.shape[1]] += a[i, j] * b
        return Poly2D(out)

    __rmul__ = __mul__

    def to_sympy(self):
        expr = sp.Integer(0)
        for coef, i, j in self.terms():
            expr += coef * X1**i * X2**j
        return expr

    @property
    def degree(self):
        nz = np.nonzero(self.c)
        if len(nz[0]) == 0:
            return 0
        return int((nz[0] + nz[1]).max())


def sorted_indices(order):
    """Sorted index tuples labelling independent symmetric components."""
    return list(itertools.combinations_with_replacement(range(2), order))


def multiplicity(idx):
    """Number of orderings of a sorted index tuple."""
    m = len(idx)
    ones = sum(idx)
    return math.comb(m, ones)


class SymmetricTensorField:
    """Base interface; see module docstring for the representations."""

    order = 0

    def component(self, idx):
        raise NotImplementedError

    def comp_values(self, idx, x):
        raise NotImplementedError

    def dcomp_values(self, idx, k, x):
        raise NotImplementedError

    def component_expr(self, idx):
        return None

    def _canon(self, idx):
        idx = tuple(int(i) for i in idx)
        if len(idx) != self.order:
            raise ValueError(f"index tuple {idx} has wrong length for order {self.order}")
        return tuple(sorted(idx))

    def indices(self):
        return sorted_indices(self.order)

    def batch_comp_values(self, x):
        """All components at once; linear wrappers combine child batches."""
        return {idx: self.comp_values(idx, x) for idx in self.indices()}

    def lam(self, x, v):
        """Full contraction with copies of ``v`` (the sphere-bundle value)."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        comps = self.batch_comp_values(x)
        if self.order == 0:
            return comps[()]
        out = 0.0
        for idx, vals in comps.items():
            mono = np.ones(v.shape[:-1])
            for i in idx:
                mono = mono * v[..., i]
            out = out + multiplicity(idx) * vals * mono
        return out

    def lam_flow(self, x, v, ctx=None):
        """``lam`` for along-flow quadrature; ``ctx`` shares per-step
        metric data between fields evaluated at the same states."""
        return self.lam(x, v)

    def max_abs_lambda(self, metric, n=512, seed=0):
        """Sampled sup of |lambda f| over the sphere bundle."""
        rng = np.random.default_rng(seed)
        r = np.sqrt(rng.uniform(0, 1, n))
        th = rng.uniform(0, 2 * np.pi, n)
        x = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        from .metrics import frame_coefficients

        al = rng.uniform(0, 2 * np.pi, n)
        v = frame_coefficients(metric, x, al)["v"]
        return float(np.max(np.abs(self.lam(x, v))))


class PolyTensorField(SymmetricTensorField):
    def __init__(self, order, comps):
        self.order = order
        self.comps = {}
        for idx in sorted_indices(order):
            val = comps.get(idx, Poly2D.zero())
            self.comps[idx] = val if isinstance(val, Poly2D) else Poly2D.from_terms(val)

    def component(self, idx):
        return self.comps[self._canon(idx)]

    def comp_values(self, idx, x):
        return self.comps[self._canon(idx)](x)

    def dcomp_values(self, idx, k, x):
        return self.comps[self._canon(idx)].diff(k)(x)

    def component_expr(self, idx):
        return self.comps[self._canon(idx)].to_sympy()

    def scaled(self, a):
        return PolyTensorField(self.order, {i: p * a for i, p in self.comps.items()})

    def plus(self, other, b=1.0):
        if other.order != self.order:
            raise OrderMismatch("orders differ")
        return PolyTensorField(self.order, {
            i: self.comps[i] + other.comps[i] * b for i in self.comps})


class SympyTensorField(SymmetricTensorField):
    def __init__(self, order, exprs):
        self.order = order
        self.exprs = {idx: sp.sympify(exprs.get(idx, 0)) for idx in sorted_indices(order)}
        self._fns = {}

    def component(self, idx):
        return self.exprs[self._canon(idx)]

    def _fn(self, key, expr):
        if key not in self._fns:
            self._fns[key] = sp.lambdify((X1, X2), expr, "numpy")
        return self._fns[key]

    def _eval(self, key, expr, x):
        val = self._fn(key, expr)(x[..., 0], x[..., 1])
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape[:-1]).copy()

    def comp_values(self, idx, x):
        idx = self._canon(idx)
        return self._eval(("c", idx), self.exprs[idx], np.asarray(x, float))

    def dcomp_values(self, idx, k, x):
        idx = self._canon(idx)
        var = X1 if k == 0 else X2
        return self._eval(("d", idx, k), sp.diff(self.exprs[idx], var), np.asarray(x, float))

    def component_expr(self, idx):
        return self.exprs[self._canon(idx)]


class FuncTensorField(SymmetricTensorField):
    def __init__(self, order, comps, dcomps=None):
        self.order = order
        self.comps = dict(comps)
        self.dcomps = dict(dcomps or {})

    @classmethod
    def from_grid(cls, order, x1s, x2s, values, dvalues=None):
        """Sampled representation: component values (and, optionally,
        their first derivatives) tabulated on a uniform grid, evaluated
        by bilinear interpolation.  Fields loaded this way without
        derivative tables refuse covariant differentiation."""
        x1s = np.asarray(x1s, dtype=float)
        x2s = np.asarray(x2s, dtype=float)

        def interp(tab):
            tab = np.asarray(tab, dtype=float)

            def fn(x):
                t1 = np.clip((x[..., 0] - x1s[0]) / (x1s[1] - x1s[0]),
                             0, len(x1s) - 1 - 1e-12)
                t2 = np.clip((x[..., 1] - x2s[0]) / (x2s[1] - x2s[0]),
                             0, len(x2s) - 1 - 1e-12)
                i = t1.astype(int)
                j = t2.astype(int)
                s, t = t1 - i, t2 - j
                return ((1 - s) * (1 - t) * tab[i, j] + s * (1 - t) * tab[i + 1, j]
                        + (1 - s) * t * tab[i, j + 1] + s * t * tab[i + 1, j + 1])
            return fn

        comps = {idx: interp(tab) for idx, tab in values.items()}
        dcomps = None
        if dvalues is not None:
            dcomps = {key: interp(tab) for key, tab in dvalues.items()}
        return cls(order, comps, dcomps)

    def component(self, idx):
        return self.comps[self._canon(idx)]

    def comp_values(self, idx, x):
        x = np.asarray(x, dtype=float)
        val = np.asarray(self.comps[self._canon(idx)](x), dtype=float)
        return np.broadcast_to(val, x.shape[:-1]).copy()

    def dcomp_values(self, idx, k, x):
        key = (self._canon(idx), k)
        if key not in self.dcomps:
            raise MissingDerivatives(
                "sampled field has no stored derivative for component "
                f"{key[0]} along axis {k}")
        return np.asarray(self.dcomps[key](np.asarray(x, float)), dtype=float)


class PotentialField(PolyTensorField):
    """Field with components ``(1 - |x|^2) * q`` vanishing on the circle.

    Evaluation keeps the factored form, so boundary values are exactly
    zero; derivatives use the exact expanded polynomials.
    """

    def __init__(self, order, q_comps):
        self.q = {}
        for idx in sorted_indices(order):
            val = q_comps.get(idx, Poly2D.zero())
            self.q[idx] = val if isinstance(val, Poly2D) else Poly2D.from_terms(val)
        factor = Poly2D.from_terms([[1.0, 0, 0], [-1.0, 2, 0], [-1.0, 0, 2]])
        super().__init__(order, {i: factor * q for i, q in self.q.items()})

    def comp_values(self, idx, x):
        x = np.asarray(x, dtype=float)
        fac = 1.0 - x[..., 0] ** 2 - x[..., 1] ** 2
        return fac * self.q[self._canon(idx)](x)

    def component_expr(self, idx):
        return (1 - X1**2 - X2**2) * self.q[self._canon(idx)].to_sympy()


# -- operations ------------------------------------------------------------


def symmetrize(order, full_comps):
    """Average a (possibly non-symmetric) tensor over index permutations.

    ``full_comps`` maps full index tuples to Poly2D, sympy expressions
    or callables; missing entries count as zero.
    """
    perms = list(itertools.permutations(range(order)))
    kinds = set(type(v) for v in full_comps.values())
    sym = {}
    for idx in sorted_indices(order):
        parts = []
        for pi in perms:
            key = tuple(idx[pi[i]] for i in range(order))
            if key in full_comps:
                parts.append(full_comps[key])
        if not parts:
            continue
        if kinds <= {Poly2D}:
            total = parts[0]
            for p in parts[1:]:
                total = total + p
            sym[idx] = total * (1.0 / len(perms))
        elif all(isinstance(p, sp.Expr) for p in parts):
            sym[idx] = sp.Add(*parts) / len(perms)
        else:
            sym[idx] = _scaled_sum(parts, 1.0 / len(perms))
    if kinds <= {Poly2D}:
        return PolyTensorField(order, sym)
    if all(isinstance(v, sp.Expr) for v in sym.values()):
        return SympyTensorField(order, sym)
    return FuncTensorField(order, sym)


def _scaled_sum(fns, scale):
    def fn(x):
        total = np.asarray(fns[0](x), dtype=float).copy()
        for f in fns[1:]:
            total += f(x)
        return scale * total
    return fn


def _gamma_exprs(metric):
    """Christoffel symbols as sympy expressions (conformal families)."""
    model = metric.symbolic
    d = [sp.diff(model.phi, model.x1), sp.diff(model.phi, model.x2)]
    gam = {}
    for i in range(2):
        for j in range(2):
            for k in range(2):
                expr = sp.Integer(0)
                if i == j:
                    expr += d[k]
                if i == k:
                    expr += d[j]
                if j == k:
                    expr -= d[i]
                gam[(i, j, k)] = expr
    return gam


class CovDerivField(SymmetricTensorField):
    """Symmetrized covariant derivative of a field, evaluated on demand.

    All components (and the sphere-bundle contraction) are assembled
    from one shared Christoffel evaluation per point batch; symbolic
    component expressions are available lazily on analytic metrics.
    """

    def __init__(self, p, metric):
        self.order = p.order + 1
        self.p = p
        self.metric = metric
        self._exprs = None

    def batch_comp_values(self, x):
        x = np.asarray(x, dtype=float)
        m = self.order
        p = self.p
        gam = self.metric.christoffel(x)
        pv = {idx: p.comp_values(idx, x) for idx in sorted_indices(m - 1)}
        out = {}
        for big in sorted_indices(m):
            total = np.zeros(x.shape[:-1])
            for s in range(m):
                j = big[s]
                rest = big[:s] + big[s + 1:]
                term = p.dcomp_values(rest, j, x)
                for t in range(m - 1):
                    for l in range(2):
                        swapped = tuple(sorted(rest[:t] + (l,) + rest[t + 1:]))
                        term = term - gam[..., l, j, rest[t]] * pv[swapped]
                total += term
            out[big] = total / m
        return out

    def comp_values(self, idx, x):
        return self.batch_comp_values(np.asarray(x, dtype=float))[self._canon(idx)]

    def lam_flow(self, x, v, ctx=None):
        """Geodesic-derivative form: ``v . d_x(lam p) - Gamma(v,v) . d_v(lam p)``.

        Exactly equal to contracting the derivative components with
        ``v`` but needs only one Christoffel contraction per batch,
        shared through ``ctx``.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        key = "gamma_vv"
        if ctx is None:
            ctx = {}
        if key not in ctx:
            gam = self.metric.christoffel(x)
            ctx[key] = np.einsum("...ijk,...j,...k->...i", gam, v, v)
        gvv = ctx[key]
        p = self.p
        a = 0.0
        b = 0.0
        for kdx in sorted_indices(self.order - 1):
            mult = multiplicity(kdx)
            mono = np.ones(v.shape[:-1])
            for i in kdx:
                mono = mono * v[..., i]
            grad_along = (v[..., 0] * p.dcomp_values(kdx, 0, x)
                          + v[..., 1] * p.dcomp_values(kdx, 1, x))
            a = a + mult * grad_along * mono
            if len(kdx) > 0:
                vals = p.comp_values(kdx, x)
                for slot in range(len(kdx)):
                    rest = kdx[:slot] + kdx[slot + 1:]
                    mono_r = np.ones(v.shape[:-1])
                    for i in rest:
                        mono_r = mono_r * v[..., i]
                    b = b + mult * vals * gvv[..., kdx[slot]] * mono_r
        return a - b

    def component_expr(self, idx):
        if self.metric.symbolic is None:
            return None
        if self._exprs is None:
            self._exprs = _sym_cov_derivative_exprs(self.p, self.metric)
        return self._exprs[self._canon(idx)]

    def component(self, idx):
        idx = self._canon(idx)
        return lambda x: self.comp_values(idx, x)

    def dcomp_values(self, idx, k, x):
        expr = self.component_expr(idx)
        if expr is None:
            raise MissingDerivatives("covariant-derivative field on a grid metric "
                                     "has no stored derivatives")
        var = X1 if k == 0 else X2
        x = np.asarray(x, dtype=float)
        fn = sp.lambdify((X1, X2), sp.diff(expr, var), "numpy")
        return np.broadcast_to(np.asarray(fn(x[..., 0], x[..., 1]), dtype=float),
                               x.shape[:-1]).copy()


def _sym_cov_derivative_exprs(p, metric):
    gam = _gamma_exprs(metric)
    xs = [X1, X2]
    m = p.order + 1
    sym = {}
    for big in sorted_indices(m):
        total = sp.Integer(0)
        for s in range(m):
            j = big[s]
            rest = big[:s] + big[s + 1:]
            expr = sp.diff(p.component_expr(rest), xs[j])
            for t in range(m - 1):
                swapped_l0 = rest[:t] + (0,) + rest[t + 1:]
                swapped_l1 = rest[:t] + (1,) + rest[t + 1:]
                expr -= gam[(0, j, rest[t])] * p.component_expr(swapped_l0)
                expr -= gam[(1, j, rest[t])] * p.component_expr(swapped_l1)
            total += expr
        sym[big] = total / m
    return sym


def sym_cov_derivative(p, metric):
    """Symmetrized covariant derivative: order ``m-1`` in, ``m`` out.

    The input must expose first derivatives (``MissingDerivatives``
    otherwise); evaluation shares one Christoffel call across all
    output components.
    """
    probe = np.array([[0.137, 0.271]])  # interior, off any kink or pole
    for idx in p.indices():
        p.dcomp_values(idx, 0, probe)  # surfaces MissingDerivatives early
    return CovDerivField(p, metric)


class LinCombField(SymmetricTensorField):
    """Weighted sum of same-order fields; batches pass through children."""

    def __init__(self, fields, weights):
        orders = {f.order for f in fields}
        if len(orders) != 1:
            raise OrderMismatch("linear combination needs equal orders")
        self.order = orders.pop()
        self.fields = list(fields)
        self.weights = [float(w) for w in weights]

    def batch_comp_values(self, x):
        x = np.asarray(x, dtype=float)
        out = None
        for f, w in zip(self.fields, self.weights):
            batch = f.batch_comp_values(x)
            if out is None:
                out = {idx: w * vals for idx, vals in batch.items()}
            else:
                for idx, vals in batch.items():
                    out[idx] = out[idx] + w * vals
        return out

    def lam_flow(self, x, v, ctx=None):
        if ctx is None:
            ctx = {}
        total = 0.0
        for f, w in zip(self.fields, self.weights):
            key = ("lam_flow", id(f))  # ctx lives for one state batch only
            if key not in ctx:
                ctx[key] = f.lam_flow(x, v, ctx)
            total = total + w * ctx[key]
        return total

    def comp_values(self, idx, x):
        idx = self._canon(idx)
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for f, w in zip(self.fields, self.weights):
            total = total + w * f.comp_values(idx, x)
        return total

    def component_expr(self, idx):
        exprs = [f.component_expr(idx) for f in self.fields]
        if any(e is None for e in exprs):
            return None
        return sp.Add(*[w * e for w, e in zip(self.weights, exprs)])

    def component(self, idx):
        idx = self._canon(idx)
        return lambda x: self.comp_values(idx, x)

    def dcomp_values(self, idx, k, x):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for f, w in zip(self.fields, self.weights):
            total = total + w * f.dcomp_values(idx, k, x)
        return total


def cov_derivative_exprs(p, metric):
    """Full (unsymmetrized) covariant derivative as sympy expressions.

    Returns ``{(j, K): expr}`` with ``j`` the derivative slot and ``K``
    the sorted index tuple of the input component.  Analytic metrics
    only.
    """
    if metric.symbolic is None:
        raise MissingDerivatives("covariant derivative expressions need an analytic metric")
    gam = _gamma_exprs(metric)
    xs = [X1, X2]
    m = p.order
    out = {}
    for j in range(2):
        for key in sorted_indices(m):
            expr = sp.diff(p.component_expr(key), xs[j])
            for t in range(m):
                for l in range(2):
                    swapped = key[:t] + (l,) + key[t + 1:]
                    expr -= gam[(l, j, key[t])] * p.component_expr(swapped)
            out[(j, key)] = expr
    return out


def trace(f, metric):
    """Metric trace over the first two slots; order drops by two."""
    if f.order < 2:
        raise OrderTooLow("trace needs order >= 2")
    m = f.order

    if metric.symbolic is not None and all(
            f.component_expr(idx) is not None for idx in f.indices()):
        ig = sp.exp(-2 * metric.symbolic.phi)
        exprs = {}
        for rest in sorted_indices(m - 2):
            exprs[rest] = ig * (f.component_expr((0, 0) + rest)
                                + f.component_expr((1, 1) + rest))
        return SympyTensorField(m - 2, exprs)

    def make(rest):
        def fn(x):
            x = np.asarray(x, dtype=float)
            ginv = metric.inv_g(x)
            total = np.zeros(x.shape[:-1])
            for a in range(2):
                for b in range(2):
                    total += ginv[..., a, b] * f.comp_values(tuple(sorted((a, b) + rest)), x)
            return total
        return fn

    return FuncTensorField(m - 2, {rest: make(rest) for rest in sorted_indices(m - 2)})


def _sym_gpow_q_coeff(g, j, big):
    """Component of ``sigma(g^{tensor j} x q)`` at sorted tuple ``big`` as a
    linear form in the components of ``q`` (batched over points)."""
    m = len(big)
    perms = list(itertools.permutations(range(m)))
    out = {}
    for pi in perms:
        seq = tuple(big[p] for p in pi)
        gfac = np.ones(g.shape[:-2])
        for t in range(j):
            gfac = gfac * g[..., seq[2 * t], seq[2 * t + 1]]
        qi = tuple(sorted(seq[2 * j:]))
        out.setdefault(qi, 0.0)
        out[qi] = out[qi] + gfac
    for qi in out:
        out[qi] = out[qi] / len(perms)
    return out


def trace_free_decompose(f, metric):
    """Split ``f`` into trace-free parts: ``f = sum_j sigma(g^j x q_j)``.

    Returns the list ``[q_m, q_{m-2}, ...]`` as callable fields; each
    ``q`` is trace-free.  Implemented for orders up to 4 by a dense
    linear solve per evaluation point.
    """
    m = f.order
    if m > 4:
        raise UnsupportedOrder("trace-free decomposition implemented for order <= 4")
    orders = list(range(m, -1, -2))

    unknowns = []
    for j, k in enumerate(orders):
        for idx in sorted_indices(k):
            unknowns.append((j, idx))
    nunk = len(unknowns)

    def solve(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        g = metric.g(flat)
        ginv = metric.inv_g(flat)
        rows = []
        rhs = []
        # matching equations, one per component of f
        for big in sorted_indices(m):
            row = np.zeros((flat.shape[0], nunk))
            for j, k in enumerate(orders):
                lin = _sym_gpow_q_coeff(g, j, big)
                for qi, coeff in lin.items():
                    if len(qi) == k:
                        col = unknowns.index((j, qi))
                        row[:, col] += coeff
            rows.append(row)
            rhs.append(f.comp_values(big, flat))
        # trace-free constraints for every part of order >= 2
        for j, k in enumerate(orders):
            if k < 2:
                continue
            for rest in sorted_indices(k - 2):
                row = np.zeros((flat.shape[0], nunk))
                for a in range(2):
                    for b in range(2):
                        qi = tuple(sorted((a, b) + rest))
                        row[:, unknowns.index((j, qi))] += ginv[..., a, b]
                rows.append(row)
                rhs.append(np.zeros(flat.shape[0]))
        amat = np.stack(rows, axis=1)
        bvec = np.stack(rhs, axis=1)
        sol = np.linalg.solve(amat, bvec[..., None])[..., 0]
        return sol.reshape(x.shape[:-1] + (nunk,))

    fields = []
    for j, k in enumerate(orders):
        comps = {}
        for idx in sorted_indices(k):
            col = unknowns.index((j, idx))
            comps[idx] = (lambda c: lambda x: solve(x)[..., c])(col)
        fields.append(FuncTensorField(k, comps))
    return fields


def lambda_eval(f, z):
    """Evaluate the induced sphere-bundle function at ``z = (x, v)``."""
    x, v = z
    return f.lam(np.asarray(x, float), np.asarray(v, float))


def l2_inner_tensor(f, h, metric, quad):
    """L^2(M) inner product with all indices paired through ``g^{-1}``."""
    if f.order != h.order:
        raise OrderMismatch(f"orders {f.order} and {h.order} differ")
    m = f.order
    pts = quad.flat_points()
    w = quad.weights(metric).ravel()
    if m == 0:
        vals = f.comp_values((), pts) * h.comp_values((), pts)
        return float(np.sum(w * vals))
    ginv = metric.inv_g(pts)
    npts = pts.shape[0]
    full_f = np.zeros((npts, 2**m))
    full_h = np.zeros((npts, 2**m))
    bf = f.batch_comp_values(pts)
    bh = h.batch_comp_values(pts)
    for flat, idx in enumerate(itertools.product(range(2), repeat=m)):
        key = tuple(sorted(idx))
        full_f[:, flat] = bf[key]
        full_h[:, flat] = bh[key]
    pairing = ginv
    for _ in range(m - 1):
        k = pairing.shape[-1]
        pairing = np.einsum("pab,pcd->pacbd", pairing, ginv).reshape(npts, 2 * k, 2 * k)
    vals = np.einsum("pi,pij,pj->p", full_f, pairing, full_h)
    return float(np.sum(w * vals))


def random_poly_tensor(order, max_degree, rng, scale=1.0):
    """Random polynomial field with degree-damped coefficients."""
    comps = {}
    for idx in sorted_indices(order):
        c = np.zeros((max_degree + 1, max_degree + 1))
        for i in range(max_degree + 1):
            for j in range(max_degree + 1 - i):
                c[i, j] = rng.normal() * scale / (1.0 + (i + j) ** 2)
        comps[idx] = Poly2D(c)
    return PolyTensorField(order, comps)


def random_potential(order, max_degree, rng, scale=1.0):
    base = random_poly_tensor(order, max_degree, rng, scale)
    return PotentialField(order, base.comps)


def field_to_json(f):
    """Serialize a polynomial field (indices as 1-based digit strings)."""
    comps = {}
    for idx, poly in f.comps.items():
        key = "".join(str(i + 1) for i in idx) if idx else "scalar"
        comps[key] = poly.terms()
    return {"order": f.order, "components": comps}


def field_from_json(doc):
    order = int(doc["order"])
    comps = {}
    for key, terms in doc["components"].items():
        idx = () if key == "scalar" else tuple(int(ch) - 1 for ch in key)
        comps[tuple(sorted(idx))] = Poly2D.from_terms(terms)
    return PolyTensorField(order, comps)


def field_to_json_str(f):
    return json.dumps(field_to_json(f), sort_keys=True)
