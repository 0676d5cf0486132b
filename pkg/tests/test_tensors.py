import itertools
import json

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from geoxray.errors import (MissingDerivatives, OrderMismatch, OrderTooLow,
                            UnsupportedOrder)
from geoxray.flow import flow_map
from geoxray.metrics import frame_coefficients
from geoxray.quadrature import DiskQuadrature
from geoxray.tensors import (FuncTensorField, LinCombField, Poly2D,
                             PolyTensorField, PotentialField,
                             cov_derivative_exprs, field_from_json,
                             field_to_json, l2_inner_tensor, multiplicity,
                             random_poly_tensor, random_potential,
                             sorted_indices, sym_cov_derivative, symmetrize,
                             trace, trace_free_decompose, X1, X2)

from conftest import unit_state


# -- Poly2D -------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.integers(0, 3), st.integers(0, 3)),
                min_size=1, max_size=6))
def test_poly_terms_roundtrip_and_eval(terms):
    p = Poly2D.from_terms([list(t) for t in terms])
    q = Poly2D.from_terms(p.terms())
    x = np.array([[0.3, -0.7], [1.1, 0.4]])
    np.testing.assert_allclose(p(x), q(x), rtol=1e-14, atol=1e-14)


def test_poly_mul_matches_pointwise(rng):
    a = random_poly_tensor(0, 3, rng).comps[()]
    b = random_poly_tensor(0, 2, rng).comps[()]
    x = rng.uniform(-1, 1, (40, 2))
    np.testing.assert_allclose((a * b)(x), a(x) * b(x), atol=1e-12)
    np.testing.assert_allclose((a + b)(x), a(x) + b(x), atol=1e-12)
    np.testing.assert_allclose(a.diff(0)(x),
                               (a(x + [1e-7, 0]) - a(x - [1e-7, 0])) / 2e-7,
                               atol=1e-5)


# -- symmetrization -----------------------------------------------------------


def test_symmetrize_two_permutation_average():
    h = {(0, 1): Poly2D.const(1.0)}  # h_12 = 1, h_21 = 0
    s = symmetrize(2, h)
    x = np.zeros((1, 2))
    assert s.comp_values((0, 1), x)[0] == pytest.approx(0.5)


def test_symmetrize_idempotent_on_symmetric(rng):
    f = random_poly_tensor(2, 2, rng)
    full = {idx: f.comps[tuple(sorted(idx))]
            for idx in itertools.product(range(2), repeat=2)}
    s = symmetrize(2, full)
    x = rng.uniform(-1, 1, (10, 2))
    for idx in sorted_indices(2):
        np.testing.assert_allclose(s.comp_values(idx, x), f.comp_values(idx, x),
                                   atol=1e-14)


def test_symmetrize_matches_brute_force_order3(rng):
    full = {idx: random_poly_tensor(0, 2, rng).comps[()]
            for idx in itertools.product(range(2), repeat=3)}
    s = symmetrize(3, full)
    x = rng.uniform(-1, 1, (15, 2))
    for key in sorted_indices(3):
        perms = list(itertools.permutations(range(3)))
        brute = sum(full[tuple(key[p[i]] for i in range(3))](x)
                    for p in perms) / len(perms)
        np.testing.assert_allclose(s.comp_values(key, x), brute, atol=1e-13)


# -- covariant derivative -----------------------------------------------------


def test_sym_cov_derivative_flat_scalar(euclid):
    p = PotentialField(0, {(): Poly2D.const(1.0)})  # p = 1 - |x|^2
    f = sym_cov_derivative(p, euclid)
    x = np.array([[0.3, -0.4], [0.1, 0.2]])
    np.testing.assert_allclose(f.comp_values((0,), x), -2 * x[:, 0], atol=1e-13)
    np.testing.assert_allclose(f.comp_values((1,), x), -2 * x[:, 1], atol=1e-13)


def test_sym_cov_derivative_flat_one_form(euclid):
    p = PotentialField(1, {(0,): Poly2D.const(1.0)})  # p1 = 1-|x|^2, p2 = 0
    f = sym_cov_derivative(p, euclid)
    x = np.array([[0.2, 0.5], [-0.3, 0.1]])
    np.testing.assert_allclose(f.comp_values((0, 1), x), -x[:, 1], atol=1e-13)


def test_sym_cov_derivative_fd_oracle(hyp, rng):
    p = random_poly_tensor(1, 3, rng)
    f = sym_cov_derivative(p, hyp)
    x = rng.uniform(-0.6, 0.6, (25, 2))
    h = 1e-5
    gam = hyp.christoffel(x)
    for big in sorted_indices(2):
        total = np.zeros(len(x))
        for s in range(2):
            j = big[s]
            rest = big[:s] + big[s + 1:]
            dx = np.zeros_like(x)
            dx[:, j] = h
            term = (p.comp_values(rest, x + dx) - p.comp_values(rest, x - dx)) / (2 * h)
            for l in range(2):
                term -= gam[:, l, j, rest[0]] * p.comp_values((l,), x)
            total += term
        np.testing.assert_allclose(f.comp_values(big, x), total / 2, atol=1e-4)


def test_missing_derivatives_raises(hyp):
    f = FuncTensorField(1, {(0,): lambda x: x[..., 0], (1,): lambda x: x[..., 1]})
    with pytest.raises(MissingDerivatives):
        sym_cov_derivative(f, hyp)


def test_sampled_grid_field(hyp, rng):
    xs = np.linspace(-1.1, 1.1, 111)
    mesh = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1)
    truth = random_poly_tensor(1, 2, rng)
    vals = {idx: truth.comp_values(idx, mesh) for idx in sorted_indices(1)}
    dvals = {(idx, k): truth.dcomp_values(idx, k, mesh)
             for idx in sorted_indices(1) for k in range(2)}
    f = FuncTensorField.from_grid(1, xs, xs, vals, dvals)
    pts = rng.uniform(-0.7, 0.7, (20, 2))
    for idx in sorted_indices(1):
        np.testing.assert_allclose(f.comp_values(idx, pts),
                                   truth.comp_values(idx, pts), atol=2e-4)
    # with stored derivatives the covariant derivative is available
    sg = sym_cov_derivative(f, hyp)
    sg_truth = sym_cov_derivative(truth, hyp)
    for idx in sorted_indices(2):
        np.testing.assert_allclose(sg.comp_values(idx, pts),
                                   sg_truth.comp_values(idx, pts), atol=5e-4)
    # without them, differentiation refuses
    bare = FuncTensorField.from_grid(1, xs, xs, vals)
    with pytest.raises(MissingDerivatives):
        sym_cov_derivative(bare, hyp)


def test_transport_chain_identity(hyp, rng):
    """lam(sym-cov-deriv p) equals the flow derivative of lam p."""
    p = random_potential(1, 3, rng)
    f = sym_cov_derivative(p, hyp)
    r = np.sqrt(rng.uniform(0, 0.8, 30))
    th = rng.uniform(0, 2 * np.pi, 30)
    x = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    al = rng.uniform(0, 2 * np.pi, 30)
    v = frame_coefficients(hyp, x, al)["v"]
    z = np.concatenate([x, v], axis=1)
    h = 1e-4
    fwd = flow_map(hyp, z, np.full(30, h), step=h / 4)
    bwd = flow_map(hyp, z, np.full(30, -h), step=h / 4)
    quot = (p.lam(fwd[:, :2], fwd[:, 2:]) - p.lam(bwd[:, :2], bwd[:, 2:])) / (2 * h)
    np.testing.assert_allclose(f.lam(x, v), quot, atol=1e-4)


# -- trace and decomposition --------------------------------------------------


def test_trace_of_metric_is_dimension(hyp, rng):
    x = rng.uniform(-0.6, 0.6, (20, 2))
    g = hyp.g(x)
    f = FuncTensorField(2, {(0, 0): lambda x_: hyp.g(x_)[..., 0, 0],
                            (0, 1): lambda x_: hyp.g(x_)[..., 0, 1],
                            (1, 1): lambda x_: hyp.g(x_)[..., 1, 1]})
    tr = trace(f, hyp)
    np.testing.assert_allclose(tr.comp_values((), x), 2.0, atol=1e-12)


def test_trace_flat_tracefree(euclid, rng):
    f = PolyTensorField(2, {(0, 0): Poly2D.const(1.0), (1, 1): Poly2D.const(-1.0)})
    x = rng.uniform(-1, 1, (10, 2))
    np.testing.assert_allclose(trace(f, euclid).comp_values((), x), 0.0, atol=1e-14)
    with pytest.raises(OrderTooLow):
        trace(PolyTensorField(1, {}), euclid)


def test_trace_random_contraction_oracle(hyp, rng):
    f = random_poly_tensor(3, 2, rng)
    tr = trace(f, hyp)
    x = rng.uniform(-0.5, 0.5, (12, 2))
    ginv = hyp.inv_g(x)
    for rest in sorted_indices(1):
        expect = np.zeros(len(x))
        for a in range(2):
            for b in range(2):
                expect += ginv[:, a, b] * f.comp_values(tuple(sorted((a, b) + rest)), x)
        np.testing.assert_allclose(tr.comp_values(rest, x), expect, atol=1e-12)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_trace_free_decompose_recomposition(m, hyp, rng):
    f = random_poly_tensor(m, 2, rng)
    parts = trace_free_decompose(f, hyp)
    x = rng.uniform(-0.5, 0.5, (8, 2))
    # each part of order >= 2 is trace-free
    for q in parts:
        if q.order >= 2:
            tr = trace(q, hyp)
            for rest in sorted_indices(q.order - 2):
                np.testing.assert_allclose(tr.comp_values(rest, x), 0.0, atol=1e-12)
    # recomposition: contract sigma(g^j x q) back together
    g = hyp.g(x)
    for big in sorted_indices(m):
        total = np.zeros(len(x))
        for j, q in enumerate(parts):
            perms = list(itertools.permutations(range(m)))
            acc = np.zeros(len(x))
            for pi in perms:
                seq = tuple(big[p] for p in pi)
                gfac = np.ones(len(x))
                for t in range(j):
                    gfac = gfac * g[:, seq[2 * t], seq[2 * t + 1]]
                acc += gfac * q.comp_values(tuple(sorted(seq[2 * j:])), x)
            total += acc / len(perms)
        np.testing.assert_allclose(total, f.comp_values(big, x), atol=1e-10)


def test_trace_free_decompose_of_metric(hyp, rng):
    f = FuncTensorField(2, {(0, 0): lambda x_: hyp.g(x_)[..., 0, 0],
                            (0, 1): lambda x_: hyp.g(x_)[..., 0, 1],
                            (1, 1): lambda x_: hyp.g(x_)[..., 1, 1]})
    q2, q0 = trace_free_decompose(f, hyp)
    x = rng.uniform(-0.5, 0.5, (10, 2))
    for idx in sorted_indices(2):
        np.testing.assert_allclose(q2.comp_values(idx, x), 0.0, atol=1e-12)
    np.testing.assert_allclose(q0.comp_values((), x), 1.0, atol=1e-12)


def test_trace_free_unsupported_order(hyp, rng):
    with pytest.raises(UnsupportedOrder):
        trace_free_decompose(random_poly_tensor(5, 1, rng), hyp)


# -- sphere-bundle contraction ------------------------------------------------


def test_lambda_examples(euclid, rng):
    f0 = PolyTensorField(0, {(): Poly2D.from_terms([[2.0, 1, 0]])})  # 2 x1
    x = np.array([[0.3, 0.1]])
    for ang in (0.0, 1.1, 2.2):
        v = np.array([[np.cos(ang), np.sin(ang)]])
        assert f0.lam(x, v)[0] == pytest.approx(0.6)
    ident = PolyTensorField(2, {(0, 0): Poly2D.const(1.0), (1, 1): Poly2D.const(1.0)})
    th = rng.uniform(0, 2 * np.pi, 20)
    v = np.stack([np.cos(th), np.sin(th)], axis=-1)
    np.testing.assert_allclose(ident.lam(np.zeros((20, 2)), v), 1.0, atol=1e-14)
    proj = PolyTensorField(2, {(0, 0): Poly2D.const(1.0)})
    np.testing.assert_allclose(proj.lam(np.zeros((20, 2)), v), np.cos(th) ** 2,
                               atol=1e-14)


def test_lambda_linearity(hyp, rng):
    f = random_poly_tensor(2, 2, rng)
    h = random_poly_tensor(2, 2, rng)
    comb = LinCombField([f, h], [2.0, -3.0])
    x = rng.uniform(-0.5, 0.5, (15, 2))
    v = rng.normal(size=(15, 2))
    np.testing.assert_allclose(comb.lam(x, v), 2 * f.lam(x, v) - 3 * h.lam(x, v),
                               atol=1e-13)


# -- inner products -----------------------------------------------------------


def test_l2_inner_disk_area(euclid):
    one = PolyTensorField(0, {(): Poly2D.const(1.0)})
    quad = DiskQuadrature(24, 48)
    assert l2_inner_tensor(one, one, euclid, quad) == pytest.approx(np.pi, abs=1e-12)


def test_l2_inner_pointwise_orthogonal(euclid):
    a = PolyTensorField(2, {(0, 0): Poly2D.const(1.0), (1, 1): Poly2D.const(-1.0)})
    b = PolyTensorField(2, {(0, 0): Poly2D.const(1.0), (1, 1): Poly2D.const(1.0)})
    quad = DiskQuadrature(16, 32)
    assert abs(l2_inner_tensor(a, b, euclid, quad)) < 1e-13
    with pytest.raises(OrderMismatch):
        l2_inner_tensor(a, PolyTensorField(0, {}), euclid, quad)


def test_l2_inner_midpoint_refinement_oracle(hyp, rng):
    f = random_poly_tensor(2, 3, rng)
    h = random_poly_tensor(2, 3, rng)
    quad = DiskQuadrature(24, 48)
    val = l2_inner_tensor(f, h, hyp, quad)

    # dense polar midpoint rule as the independent oracle
    nr, nt = 1024, 1024
    r = (np.arange(nr) + 0.5) / nr
    t = 2 * np.pi * (np.arange(nt) + 0.5) / nt
    rr, tt = np.meshgrid(r, t, indexing="ij")
    pts = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=-1)
    w = (rr.ravel() / nr) * (2 * np.pi / nt) * hyp.sqrt_det_g(pts)
    ginv = hyp.inv_g(pts)
    acc = np.zeros(len(pts))
    for i1 in range(2):
        for j1 in range(2):
            for i2 in range(2):
                for j2 in range(2):
                    acc += (ginv[:, i1, j1] * ginv[:, i2, j2]
                            * f.comp_values(tuple(sorted((i1, i2))), pts)
                            * h.comp_values(tuple(sorted((j1, j2))), pts))
    oracle = np.sum(w * acc)
    assert abs(val - oracle) / max(abs(val), 1e-10) < 1e-6


def test_sym_cov_derivative_is_bounded_by_full_derivative(hyp, rng):
    """Symmetrization contracts the L^2 norm of the covariant derivative."""
    quad = DiskQuadrature(20, 40)
    pts = quad.flat_points()
    w = quad.weights(hyp).ravel()
    ginv = hyp.inv_g(pts)
    for _ in range(3):
        p = random_poly_tensor(1, 3, rng)
        sg = sym_cov_derivative(p, hyp)
        n_sym = l2_inner_tensor(sg, sg, hyp, quad)
        grad = cov_derivative_exprs(p, hyp)
        vals = {key: sp.lambdify((X1, X2), expr, "numpy")(pts[:, 0], pts[:, 1])
                * np.ones(len(pts)) for key, expr in grad.items()}
        n_full = 0.0
        for j1 in range(2):
            for j2 in range(2):
                for k1 in range(2):
                    for k2 in range(2):
                        n_full += np.sum(w * ginv[:, j1, j2] * ginv[:, k1, k2]
                                         * vals[(j1, (k1,))] * vals[(j2, (k2,))])
        assert n_sym <= n_full + 1e-10


# -- potentials and serialization ----------------------------------------------


def test_potential_vanishes_on_circle_exactly(rng):
    p = random_potential(1, 4, rng)
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    pts = np.stack([np.cos(th), np.sin(th)], axis=-1)
    for idx in sorted_indices(1):
        assert np.max(np.abs(p.comp_values(idx, pts))) < 1e-15
    axis_pts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    for idx in sorted_indices(1):
        assert np.all(p.comp_values(idx, axis_pts) == 0.0)


def test_field_json_roundtrip(rng, tmp_path):
    f = random_poly_tensor(2, 3, rng)
    doc = field_to_json(f)
    path = tmp_path / "field.json"
    with open(path, "w") as fh:
        json.dump(doc, fh)
    with open(path) as fh:
        g = field_from_json(json.load(fh))
    x = rng.uniform(-1, 1, (10, 2))
    for idx in sorted_indices(2):
        np.testing.assert_allclose(g.comp_values(idx, x), f.comp_values(idx, x),
                                   atol=1e-15)
    assert set(doc["components"]) == {"11", "12", "22"}


def test_multiplicity():
    assert multiplicity(()) == 1
    assert multiplicity((0, 1)) == 2
    assert multiplicity((0, 0, 1)) == 3
    assert multiplicity((0, 1, 1, 1)) == 4
