"""Throughput comparison of the flow kernels (compiled vs numpy).

Runs the same workloads through both backends and checks they agree to
roundoff:

* raw RK4 stepping of a large ray batch,
* a forward transform of a potential-generated field on a boundary fan.

Usage: python benchmarks/flow_benchmark.py [--rays 8192] [--steps 400]
"""

import argparse
import time

import numpy as np

from geoxray import backend
from geoxray.flow import trace_to_boundary
from geoxray.metrics import MetricField
from geoxray.tensors import random_potential, sym_cov_derivative
from geoxray.transform import BoundaryFan, xray_transform


def _ray_batch(metric, n, seed=0):
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(0, 0.9, n))
    th = rng.uniform(0, 2 * np.pi, n)
    x = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    ang = rng.uniform(0, 2 * np.pi, n)
    v = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    g = metric.g(x)
    norm = np.sqrt(np.einsum("pi,pij,pj->p", v, g, v))
    return np.concatenate([x, v / norm[:, None]], axis=1)


def bench_steps(metric, n_rays, n_steps):
    spec = backend.kernel_spec(metric)
    state0 = _ray_batch(metric, n_rays)
    dt = np.full(n_rays, 1e-3)
    out = {}
    for name in available():
        state = state0.copy()
        t0 = time.perf_counter()
        for _ in range(n_steps):
            state = backend.rk4_step_batch(spec, state, dt, backend=name)
        dt_s = time.perf_counter() - t0
        out[name] = (dt_s, state)
    return out


def bench_transform(metric, n_boundary, n_dir):
    rng = np.random.default_rng(1)
    f = sym_cov_derivative(random_potential(1, 3, rng), metric)
    fan = BoundaryFan(metric, n_boundary=n_boundary, n_dir=n_dir)
    out = {}
    for name in available():
        saved = backend.BACKEND
        backend.BACKEND = name
        try:
            t0 = time.perf_counter()
            xd = xray_transform(f, metric, fan, step=1e-3)
            out[name] = (time.perf_counter() - t0, xd.values)
        finally:
            backend.BACKEND = saved
    return out


def available():
    names = ["numpy"]
    if backend._HAVE_COMPILED:
        names.insert(0, "compiled")
    return names


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rays", type=int, default=8192)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--boundary", type=int, default=64)
    ap.add_argument("--dirs", type=int, default=16)
    args = ap.parse_args()

    print(f"backends available: {', '.join(available())}")
    for fam, metric in (("euclidean", MetricField.euclidean()),
                        ("hyperbolic_like", MetricField.hyperbolic_like(0.5)),
                        ("conformal_c11", MetricField.conformal_c11(0.05))):
        res = bench_steps(metric, args.rays, args.steps)
        line = f"rk4 {fam:16s} {args.rays} rays x {args.steps} steps:"
        base = None
        for name, (dt_s, state) in res.items():
            rate = args.rays * args.steps / dt_s / 1e6
            line += f"  {name} {dt_s:7.3f}s ({rate:6.2f} Mstep/s)"
            if base is None:
                base = state
            else:
                line += f"  max-diff {np.max(np.abs(state - base)):.2e}"
        print(line)

    metric = MetricField.hyperbolic_like(0.5)
    res = bench_transform(metric, args.boundary, args.dirs)
    line = f"transform hyperbolic {args.boundary}x{args.dirs} fan:"
    base = None
    for name, (dt_s, vals) in res.items():
        line += f"  {name} {dt_s:7.3f}s"
        if base is None:
            base = vals
        else:
            line += f"  max-diff {np.max(np.abs(vals - base)):.2e}"
    print(line)


if __name__ == "__main__":
    main()
