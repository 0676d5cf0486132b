"""Acceptance suite: every shipped guarantee at its stated tolerance.

One test per criterion; each prints a single PASS/FAIL line.  Default
discretization throughout: 24 x 48 x 64 bundle grid, 128-point boundary
fan, integrator step 1e-3.
"""

import time

import numpy as np
import pytest

from geoxray.boundary import (BoundaryChart, PartitionOfUnity,
                              boundary_identity_report,
                              glue_boundary_potential)
from geoxray.bundle import SMGrid, SymbolicSM, random_sm_expr, sm_inner
from geoxray.flow import diameter, flow_map, trace_to_boundary
from geoxray.metrics import MetricField
from geoxray.quadrature import DiskQuadrature
from geoxray.solver import PotentialBasis, kernel_test, solve_potential
from geoxray.tensors import random_potential, sym_cov_derivative
from geoxray.transform import BoundaryFan, santalo_integral_many, xray_transform_many
from geoxray.verify import (ToleranceConfig, check_commutators,
                            check_constant_bound, check_friedrichs,
                            check_index_form, check_l2_chain, check_liouville,
                            check_pestov, check_pestov_inequality,
                            _positive_curvature_control)

N_R, N_PHI, N_ALPHA = 24, 48, 64
N_BOUNDARY, N_DIR = 128, 32
STEP = 1e-3

METRICS = {
    "euclidean": MetricField.euclidean(),
    "hyperbolic_like": MetricField.hyperbolic_like(0.5),
    "conformal_c11": MetricField.conformal_c11(0.05),
}


@pytest.fixture(scope="module")
def grid():
    return SMGrid(N_R, N_PHI, N_ALPHA)


@pytest.fixture(scope="module")
def cfg():
    return ToleranceConfig(n_r=N_R, n_phi=N_PHI, n_alpha=N_ALPHA,
                           n_boundary=N_BOUNDARY, n_dir=N_DIR, step=STEP,
                           n_functions=5, seed=0)


@pytest.fixture(scope="module")
def diameters():
    return {name: diameter(m) for name, m in METRICS.items()}


def report(number, label, ok, detail=""):
    line = f"ACCEPTANCE {number:2d} [{label}]: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def test_criterion_01_gauge_vanishing(diameters):
    worst = 0.0
    for name, metric in METRICS.items():
        rng = np.random.default_rng(101)
        fields = []
        scales = []
        for order in (1, 2):
            for _ in range(5):
                p = random_potential(order - 1, 3, rng)
                f = sym_cov_derivative(p, metric)
                fields.append(f)
                scales.append(f.max_abs_lambda(metric))
        fan = BoundaryFan(metric, N_BOUNDARY, N_DIR)
        xds = xray_transform_many(fields, metric, fan, step=STEP)
        d = diameters[name]
        for xd, s in zip(xds, scales):
            worst = max(worst, xd.max_abs() / (s * d))
    report(1, "gauge vanishing", worst <= 1e-5,
           f"max |I(sigma-nabla p)| / (sup|lam| * diam) = {worst:.2e}")


def test_criterion_02_santalo(grid):
    worst = 0.0
    for name, metric in METRICS.items():
        rng = np.random.default_rng(202)
        funcs = [SymbolicSM(metric, random_sm_expr(rng, 2, 3))
                 for _ in range(5)]
        fan = BoundaryFan(metric, N_BOUNDARY, N_DIR)
        pairs = santalo_integral_many([u.flow_integrand() for u in funcs],
                                      metric, fan, step=STEP)
        one = SymbolicSM(metric, 1)
        for u, (fan_val, _) in zip(funcs, pairs):
            direct = sm_inner(u, one, grid)
            rel = abs(direct - fan_val) / max(abs(direct), abs(fan_val))
            worst = max(worst, rel)
    report(2, "volume-splitting formula", worst <= 1e-3,
           f"worst two-sided relative gap = {worst:.2e}")


def test_criterion_03_commutators(grid, cfg):
    worst = {"analytic": 0.0, "fd": 0.0}
    for metric in METRICS.values():
        rng = np.random.default_rng(cfg.seed)
        for r in check_commutators(metric, grid, cfg, rng):
            worst[r.extras["path"]] = max(worst[r.extras["path"]], r.residual)
    ok = worst["analytic"] <= 1e-6 and worst["fd"] <= 1e-4
    report(3, "commutator formulas", ok,
           f"analytic {worst['analytic']:.2e} (<=1e-6), fd {worst['fd']:.2e} (<=1e-4)")


def test_criterion_04_pestov(grid, cfg):
    worst_id = 0.0
    worst_ineq = -np.inf
    for metric in METRICS.values():
        rng = np.random.default_rng(cfg.seed)
        for r in check_pestov(metric, grid, cfg, rng):
            worst_id = max(worst_id, r.residual)
        rng = np.random.default_rng(cfg.seed)
        for r in check_pestov_inequality(metric, grid, cfg, rng):
            worst_ineq = max(worst_ineq, r.residual)
    control = _positive_curvature_control(cfg)
    ok = (worst_id <= 1e-3 and worst_ineq <= 1e-6
          and control.verdict == "fail" and control.expected == "fail")
    report(4, "transport energy identity", ok,
           f"identity {worst_id:.2e} (<=1e-3), pairing {worst_ineq:.2e} (<=1e-6), "
           f"positive-curvature control value {control.extras['value']:.3f} > 0")


def test_criterion_05_l2_chain(grid, cfg):
    worst = {}
    for name, metric in METRICS.items():
        rng = np.random.default_rng(cfg.seed)
        for r in check_l2_chain(metric, grid, cfg, rng):
            kind = r.name.split("/")[1].split("[")[0]
            worst[kind] = max(worst.get(kind, 0.0), r.residual)
    ok = (worst["equality"] <= 2e-3 and worst["C_inequality"] <= 1e-6
          and worst["B_inequality"] <= 1e-6 and worst["parity"] <= 1e-4)
    report(5, "degree-wise energy chain", ok,
           f"equality {worst['equality']:.2e} (<=2e-3), "
           f"slacks {max(worst['C_inequality'], worst['B_inequality']):.2e} (<=1e-6), "
           f"parity {worst['parity']:.2e} (<=1e-4)")


def test_criterion_06_constant_bound():
    t0 = time.perf_counter()
    (res,) = check_constant_bound(ns=(2, 3, 4), k_max=12, l_max=40)
    dt = time.perf_counter() - t0
    ok = res.verdict == "pass" and dt < 1.0
    report(6, "estimate-chain constant bound", ok,
           f"{res.extras['checked']} exact comparisons, 0 violations, {dt:.2f}s")


def test_criterion_07_friedrichs_index_form(grid, cfg, diameters):
    cfg10 = ToleranceConfig(**{**cfg.__dict__, "n_functions": 10})
    worst = 0.0
    for name, metric in METRICS.items():
        d = diameters[name]
        rng = np.random.default_rng(cfg.seed)
        for r in check_friedrichs(metric, grid, cfg10, rng, d=d):
            worst = max(worst, -r.extras["slack"])
        rng = np.random.default_rng(cfg.seed)
        for r in check_index_form(metric, grid, cfg10, rng, d=d):
            worst = max(worst, -r.extras["slack"])
    report(7, "flow-derivative coercivity", worst <= 1e-6,
           f"worst negative slack = {worst:.2e}")


def test_criterion_08_liouville(grid, cfg):
    rng = np.random.default_rng(cfg.seed)
    flat = max(r.residual for r in check_liouville(METRICS["euclidean"], grid, cfg, rng))
    rng = np.random.default_rng(cfg.seed)
    kink = max(r.residual
               for r in check_liouville(METRICS["conformal_c11"], grid, cfg, rng))
    ok = flat <= 1e-12 and kink <= 1e-3
    report(8, "volume-form invariance", ok,
           f"flat {flat:.2e} (<=1e-12), C11 {kink:.2e} (<=1e-3)")


def test_criterion_09_boundary_determination():
    worst_sup = 0.0
    worst_nd = 0.0
    worst_td = 0.0
    chart = BoundaryChart()
    pou = PartitionOfUnity([chart])
    for metric in METRICS.values():
        rng = np.random.default_rng(909)
        for i in range(5):
            order = 1 if i == 0 else 2
            pstar = random_potential(order - 1, 2, rng)
            f = sym_cov_derivative(pstar, metric)
            p = glue_boundary_potential(f, metric, pou)
            rep = boundary_identity_report(f, p, metric, chart, n_samples=64)
            scale = max(f.max_abs_lambda(metric), 1e-12)
            worst_sup = max(worst_sup, rep["sup_sigma_grad_minus_f"] / scale)
            worst_nd = max(worst_nd, rep["normal_derivative_residual"])
            worst_td = max(worst_td, rep["tangential_derivative_residual"])
    ok = worst_sup <= 1e-3 and worst_nd <= 1e-4 and worst_td <= 1e-4
    report(9, "boundary determination", ok,
           f"sup residual {worst_sup:.2e} (<=1e-3), normal {worst_nd:.2e}, "
           f"tangential {worst_td:.2e} (<=1e-4)")


def test_criterion_10_kernel_description():
    metric = METRICS["hyperbolic_like"]
    quad = DiskQuadrature(N_R, N_PHI)
    basis = PotentialBasis(order=1, degree=5)
    rng = np.random.default_rng(1010)
    c_true = rng.normal(size=basis.dim) / (1 + np.arange(basis.dim))
    f = sym_cov_derivative(basis.potential_from_coeffs(c_true), metric)
    dec = solve_potential(f, metric, basis, quad)
    coeff_err = float(np.max(np.abs(dec.coeffs - c_true)))

    fan = BoundaryFan(metric, N_BOUNDARY, 8)
    kt = kernel_test(metric, fan, basis, quad, trials=20, step=STEP, seed=7)
    ok = (coeff_err <= 1e-8 and dec.ortho_max <= 1e-8
          and abs(kt["intercept"]) <= 1e-3)
    report(10, "kernel description at desk scale", ok,
           f"coeff err {coeff_err:.2e} (<=1e-8), ortho {dec.ortho_max:.2e}, "
           f"intercept {kt['intercept']:.2e} (<=1e-3), "
           f"recovery {kt['max_recovery_rel']:.2e}")


def test_criterion_11_integrator_order():
    def ensemble_errors(metric, z, hs, ref_h):
        t_end = 0.9 * trace_to_boundary(metric, z, step=1e-3).tau
        ref = flow_map(metric, z, t_end, step=ref_h)
        return [float(np.mean(np.max(np.abs(flow_map(metric, z, t_end, step=h)
                                            - ref), axis=1)))
                for h in hs]

    hs = [8e-3, 4e-3, 2e-3, 1e-3]

    # flat metric: stepping is exact, errors sit at the bisection floor
    euclid = METRICS["euclidean"]
    z = np.array([[0.1, -0.2, 0.8, 0.6]])
    z[:, 2:] /= np.hypot(z[0, 2], z[0, 3])
    e_flat = ensemble_errors(euclid, z, hs, 1e-3 / 4)
    flat_ok = all(e2 <= max(e1 / 8, 1e-11) for e1, e2 in zip(e_flat, e_flat[1:]))

    # C^{1,1} metric: ensemble of rays crossing the kink line transversally;
    # a single ray's error oscillates with the crossing phase, the ensemble
    # mean shows the (degraded) order
    c11 = MetricField.conformal_c11(0.05)
    rng = np.random.default_rng(1)
    n = 40
    x = np.stack([rng.uniform(-0.75, -0.55, n), rng.uniform(-0.35, 0.35, n)],
                 axis=-1)
    ang = rng.uniform(-0.45, 0.45, n)
    v = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    g = c11.g(x)
    v /= np.sqrt(np.einsum("pi,pij,pj->p", v, g, v))[:, None]
    z2 = np.concatenate([x, v], axis=1)
    e_kink = ensemble_errors(c11, z2, hs, 1e-3 / 16)
    ratios = [e1 / max(e2, 1e-300) for e1, e2 in zip(e_kink, e_kink[1:])]
    kink_ok = all(r >= 3.0 or e <= 1e-11
                  for r, e in zip(ratios, e_kink[1:]))
    report(11, "integrator order study", flat_ok and kink_ok,
           f"flat errors {['%.1e' % e for e in e_flat]}, "
           f"C11 ensemble ratios {['%.1f' % min(r, 999) for r in ratios]} (>=3)")
