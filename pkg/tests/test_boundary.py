import numpy as np
import pytest

from geoxray.boundary import (BoundaryChart, PartitionOfUnity,
                              boundary_identity_report,
                              glue_boundary_potential,
                              local_boundary_potential,
                              tangential_vanishing_check)
from geoxray.errors import CoverGap
from geoxray.tensors import (PolyTensorField, Poly2D, random_poly_tensor,
                             random_potential, sorted_indices,
                             sym_cov_derivative)


def admissible_field(metric, rng, order=2):
    p = random_potential(order - 1, 2, rng)
    return sym_cov_derivative(p, metric)


def test_tangential_vanishing_admissible(all_metrics, rng):
    for metric in all_metrics:
        f = admissible_field(metric, rng)
        rep = tangential_vanishing_check(f, metric)
        assert rep["max_tangential"] < 1e-6


def test_tangential_vanishing_boundary_zero_field(hyp, rng):
    # all components carry the boundary factor: tangential values vanish
    from geoxray.tensors import PotentialField

    f = PotentialField(2, {idx: random_poly_tensor(0, 2, rng).comps[()]
                           for idx in sorted_indices(2)})
    rep = tangential_vanishing_check(f, hyp)
    assert rep["max_tangential"] < 1e-14


def test_tangential_vanishing_negative_control(hyp, rng):
    f = random_poly_tensor(2, 2, rng)
    rep = tangential_vanishing_check(f, hyp)
    assert rep["max_tangential"] > 1e-3


def test_local_potential_zero_field(hyp):
    zero = PolyTensorField(2, {})
    p = local_boundary_potential(zero, BoundaryChart())
    pts = np.array([[0.3, 0.4], [0.8, 0.0]])
    for idx in sorted_indices(1):
        assert np.max(np.abs(p.comp_values(idx, pts))) == 0.0


def test_local_potential_scalar_order():
    """Order 1: the potential is the normal coordinate times the boundary
    normal-normal component."""
    from geoxray.metrics import MetricField

    metric = MetricField.euclidean()
    f = PolyTensorField(1, {(0,): Poly2D.const(0.7), (1,): Poly2D.const(-0.3)})
    p = local_boundary_potential(f, BoundaryChart())
    th = np.linspace(0.1, 6.0, 9)
    for r in (0.85, 0.95):
        pts = r * np.stack([np.cos(th), np.sin(th)], axis=-1)
        # f_n(theta, 0) with N = (-cos, -sin): -0.7 cos + 0.3 sin
        fn = -0.7 * np.cos(th) + 0.3 * np.sin(th)
        np.testing.assert_allclose(p.comp_values((), pts), (1 - r) * fn,
                                   atol=1e-12)


def test_single_chart_glue_equals_cutoff_times_local(hyp, rng):
    f = admissible_field(hyp, rng)
    chart = BoundaryChart()
    pou = PartitionOfUnity([chart])
    glued = glue_boundary_potential(f, hyp, pou)
    local = local_boundary_potential(f, chart)
    import sympy as sp

    from geoxray.boundary import X1, X2

    zeta = sp.lambdify((X1, X2), pou.collar_cutoff_expr(), "numpy")
    pts = np.array([[0.9, 0.1], [0.0, -0.97], [0.5, 0.5]])
    for idx in sorted_indices(1):
        np.testing.assert_allclose(
            glued.comp_values(idx, pts),
            zeta(pts[:, 0], pts[:, 1]) * local.comp_values(idx, pts), atol=1e-12)


def test_boundary_identities_single_chart(all_metrics, rng):
    for metric in all_metrics:
        f = admissible_field(metric, rng)
        chart = BoundaryChart()
        p = glue_boundary_potential(f, metric, PartitionOfUnity([chart]))
        rep = boundary_identity_report(f, p, metric, chart, n_samples=48)
        scale = max(f.max_abs_lambda(metric), 1e-6)
        assert rep["sup_sigma_grad_minus_f"] <= 1e-3 * scale
        assert rep["normal_derivative_residual"] <= 1e-4
        assert rep["tangential_derivative_residual"] <= 1e-4
        # exact boundary vanishing of the glued potential
        th = np.linspace(0, 2 * np.pi, 33)
        pts = np.stack([np.cos(th), np.sin(th)], axis=-1)
        for idx in sorted_indices(1):
            assert np.max(np.abs(p.comp_values(idx, pts))) < 1e-12


def test_three_chart_glue(hyp, rng):
    f = admissible_field(hyp, rng)
    charts = [BoundaryChart(center=2 * np.pi * s / 3, half_width=1.35,
                            eta_sin=0.2 * (s == 1), eta_cos=0.15 * (s == 2))
              for s in range(3)]
    pou = PartitionOfUnity(charts)
    assert pou.check_partition() < 1e-12
    p = glue_boundary_potential(f, hyp, pou)
    rep = boundary_identity_report(f, p, hyp, charts[0], n_samples=32)
    assert rep["sup_sigma_grad_minus_f"] < 1e-10
    assert rep["normal_derivative_residual"] < 1e-10
    assert rep["tangential_derivative_residual"] < 1e-10


def test_scalar_potential_construction(hyp, rng):
    f = admissible_field(hyp, rng, order=1)
    chart = BoundaryChart()
    p = glue_boundary_potential(f, hyp, PartitionOfUnity([chart]))
    rep = boundary_identity_report(f, p, hyp, chart, n_samples=48)
    assert rep["sup_sigma_grad_minus_f"] < 1e-10
    assert rep["normal_derivative_residual"] < 1e-10


def test_cover_gap_raises():
    charts = [BoundaryChart(center=2 * np.pi * s / 3, half_width=0.8)
              for s in range(3)]
    with pytest.raises(CoverGap):
        PartitionOfUnity(charts)
