"""Geodesic flow on the unit disk: batched tracing, travel times, and
along-ray quadrature.

The drivers here are backend-agnostic: they call the selected step
kernel (compiled or numpy) once per step for the whole batch, locate
boundary exits by bisection on the Euclidean radius, and renormalize
the exit state to unit speed.  All batch reductions run in fixed array
order, so results are deterministic for a given platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernel_spec, rk4_step_batch
from .errors import NoExit, StepTooLarge

__all__ = [
    "FlowResult",
    "GeodesicPath",
    "SimplicityReport",
    "g_norm",
    "unit_vector",
    "trace_to_boundary",
    "flow_quadrature",
    "flow_map",
    "geodesic_integrate",
    "travel_time",
    "diameter",
    "simplicity_diagnostics",
]

STATUS_OK = 0
STATUS_NO_EXIT = 1

_BISECT_ITERS = 50
_UNIT_TOL = 1e-12


def g_norm(metric, x, v):
    g = metric.g(x)
    return np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))


def unit_vector(metric, x, v):
    """Rescale ``v`` to unit g-length at ``x``."""
    return v / g_norm(metric, x, v)[..., None]


def _inward_mu(metric, state):
    """mu = <nu, v>_g for states based on (or very near) the boundary."""
    x = state[..., 0:2]
    v = state[..., 2:4]
    ginv = metric.inv_g(x)
    nu = -np.einsum("...ij,...j->...i", ginv, x)
    nu = unit_vector(metric, x, nu)
    g = metric.g(x)
    return np.einsum("...i,...ij,...j->...", nu, g, v)


@dataclass
class FlowResult:
    tau: np.ndarray
    exit_state: np.ndarray
    status: np.ndarray
    drift: np.ndarray


@dataclass
class GeodesicPath:
    """A single integrated geodesic with stored samples."""

    z0: np.ndarray
    step: float
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    tau: float
    exit_state: np.ndarray
    drift: float

    @property
    def samples(self):
        return list(zip(self.times, self.points, self.velocities))


def trace_to_boundary(metric, z0, step=1e-3, t_cap=20.0, check_unit=True):
    """Trace a batch of rays to the boundary.

    ``z0`` is (B, 4) rows ``(x1, x2, v1, v2)`` on the sphere bundle.
    Returns travel times, exit states (renormalized to unit speed),
    per-ray status flags and unit-speed drifts.  Rays that start on the
    boundary pointing outward or tangentially get ``tau = 0``.
    """
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    nb = z0.shape[0]
    if check_unit:
        err = np.abs(g_norm(metric, z0[:, 0:2], z0[:, 2:4]) - 1.0)
        if np.any(err > _UNIT_TOL):
            raise ValueError(f"initial condition off the sphere bundle by {err.max():.2e}")

    spec = kernel_spec(metric)
    tau = np.zeros(nb)
    status = np.zeros(nb, dtype=int)
    exit_state = z0.copy()
    active = np.ones(nb, dtype=bool)

    r2 = z0[:, 0] ** 2 + z0[:, 1] ** 2
    on_bdry = r2 >= (1.0 - 1e-12) ** 2
    if np.any(on_bdry):
        mu = _inward_mu(metric, z0[on_bdry])
        stop = np.zeros(nb, dtype=bool)
        stop[on_bdry] = mu <= 1e-14
        active &= ~stop

    state = z0.copy()
    t = 0.0
    dt_full = np.full(nb, step)
    while np.any(active) and t < t_cap:
        all_active = bool(active.all())
        idx = None if all_active else np.nonzero(active)[0]
        prev = state if all_active else state[idx]
        new = rk4_step_batch(spec, prev, dt_full[: len(prev)])
        out = new[:, 0] ** 2 + new[:, 1] ** 2 > 1.0
        if np.any(out):
            sub = np.nonzero(out)[0] if all_active else idx[out]
            lo = prev[out].copy()
            t_lo = np.full(len(sub), t)
            w = step
            for _ in range(_BISECT_ITERS):
                w *= 0.5
                cand = rk4_step_batch(spec, lo, np.full(len(sub), w))
                inside = cand[:, 0] ** 2 + cand[:, 1] ** 2 <= 1.0
                lo[inside] = cand[inside]
                t_lo += w * inside
            tau[sub] = t_lo
            exit_state[sub] = lo
            active[sub] = False
        # states of exited rays are no longer read
        if all_active:
            state = new
        else:
            state[idx] = new
        t += step
    if np.any(active):
        status[active] = STATUS_NO_EXIT
        tau[active] = t
        exit_state[active] = state[active]

    drift = np.abs(g_norm(metric, exit_state[:, 0:2], exit_state[:, 2:4]) - 1.0)
    exit_state = exit_state.copy()
    exit_state[:, 2:4] = unit_vector(metric, exit_state[:, 0:2], exit_state[:, 2:4])
    return FlowResult(tau=tau, exit_state=exit_state, status=status, drift=drift)


def flow_quadrature(metric, z0, tau, step, integrand):
    """Composite-Simpson integrals of ``integrand(x, v)`` along each ray.

    Each ray is re-traced with an even number of uniform steps matching
    its travel time, so the Simpson weights apply cleanly.  The
    integrand may return one value per state, or a ``(B, K)`` array to
    integrate ``K`` fields along the same rays in one pass.
    """
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    tau = np.asarray(tau, dtype=float)
    nb = z0.shape[0]
    spec = kernel_spec(metric)

    m = np.zeros(nb, dtype=int)
    pos = tau > 0
    m[pos] = 2 * np.maximum(1, np.ceil(tau[pos] / (2 * step)).astype(int))
    h = np.where(pos, tau / np.maximum(m, 1), 0.0)
    total = None
    state = z0.copy()
    m_max = int(m.max()) if nb else 0
    for k in range(m_max + 1):
        live = m >= k
        if not np.any(live):
            break
        coeff = np.where((k == 0) | (k == m), 1.0, np.where(k % 2 == 1, 4.0, 2.0))
        vals = np.asarray(integrand(state[live, 0:2], state[live, 2:4]), dtype=float)
        if total is None:
            total = np.zeros((nb,) if vals.ndim == 1 else (nb, vals.shape[1]))
        w = (coeff * (h / 3.0))[live]
        if vals.ndim == 1:
            total[live] += w * vals
        else:
            total[live] += w[:, None] * vals
        stepping = m > k
        if np.any(stepping):
            if stepping.all():
                state = rk4_step_batch(spec, state, h)
            else:
                idx = np.nonzero(stepping)[0]
                state[idx] = rk4_step_batch(spec, state[idx], h[idx])
    if total is None:
        total = np.zeros(nb)
    return total


def flow_map(metric, z0, t, step=1e-3):
    """The geodesic flow ``phi_t`` applied to a batch of states.

    ``t`` may be negative; no boundary stopping is applied, so callers
    keep ``|t|`` small near the rim.
    """
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), z0.shape[:1]).copy()
    spec = kernel_spec(metric)
    m = np.maximum(1, np.ceil(np.abs(t) / step).astype(int))
    h = t / m
    state = z0.copy()
    for k in range(int(m.max())):
        live = m > k
        idx = np.nonzero(live)[0]
        state[idx] = rk4_step_batch(spec, state[idx], h[idx])
    return state


def geodesic_integrate(metric, z, step=1e-3, t_cap=20.0):
    """Integrate a single geodesic, storing samples at every step.

    Raises ``NoExit`` when the ray does not reach the boundary within
    the cap and ``StepTooLarge`` when unit-speed drift per unit length
    exceeds 1e-6.
    """
    z = np.asarray(z, dtype=float).reshape(4)
    res = trace_to_boundary(metric, z[None, :], step=step, t_cap=t_cap)
    if res.status[0] == STATUS_NO_EXIT:
        raise NoExit(f"no boundary exit within t_cap={t_cap}")
    tau = float(res.tau[0])
    if tau > 0 and res.drift[0] / max(tau, 1.0) > 1e-6:
        raise StepTooLarge(f"unit-speed drift {res.drift[0]:.2e} over length {tau:.3f}")

    # replay with stored samples (uniform steps + the boundary point)
    n = int(np.floor(tau / step + 1e-12))
    times = np.concatenate([np.arange(n + 1) * step, [tau]]) if tau > 0 else np.array([0.0])
    spec = kernel_spec(metric)
    states = [z.copy()]
    cur = z[None, :].copy()
    for _ in range(n):
        cur = rk4_step_batch(spec, cur, np.array([step]))
        states.append(cur[0].copy())
    states.append(res.exit_state[0].copy())
    if tau == 0.0:
        states = [z.copy()]
    arr = np.asarray(states)
    return GeodesicPath(z0=z, step=step, times=times, points=arr[:, 0:2],
                        velocities=arr[:, 2:4], tau=tau,
                        exit_state=res.exit_state[0], drift=float(res.drift[0]))


def travel_time(metric, z, step=1e-3, t_cap=20.0):
    """Exit time of the geodesic through ``z`` (0 for outward starts)."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        res = trace_to_boundary(metric, z[None, :], step=step, t_cap=t_cap)
        if res.status[0] == STATUS_NO_EXIT:
            raise NoExit(f"no boundary exit within t_cap={t_cap}")
        return float(res.tau[0])
    res = trace_to_boundary(metric, z, step=step, t_cap=t_cap)
    return res.tau


def diameter(metric, n_boundary=48, n_dir=25, step=2e-3):
    """Max geodesic length, by maximizing travel time over a boundary fan."""
    from .transform import BoundaryFan  # local import to avoid a cycle

    fan = BoundaryFan(metric, n_boundary=n_boundary, n_dir=n_dir)
    res = trace_to_boundary(metric, fan.states, step=step)
    return float(res.tau.max())


@dataclass
class SimplicityReport:
    min_jacobi: float
    jacobi_sign_changes: int
    tau2_lipschitz: float
    curvature_negative_fraction: float
    curvature_zero_fraction: float
    curvature_positive_fraction: float
    notes: dict = field(default_factory=dict)


def _jacobi_rhs(metric, state):
    out = np.empty_like(state)
    x = state[:, 0:2]
    v = state[:, 2:4]
    gam = metric.christoffel(x)
    out[:, 0:2] = v
    out[:, 2:4] = -np.einsum("pijk,pj,pk->pi", gam, v, v)
    out[:, 4] = state[:, 5]
    out[:, 5] = -metric.gauss_curvature(x) * state[:, 4]
    return out


def _jacobi_trace(metric, z0, tau, step):
    """Scalar Jacobi field j'' + K j = 0, j(0)=0, j'(0)=1, along rays."""
    nb = z0.shape[0]
    state = np.zeros((nb, 6))
    state[:, 0:4] = z0
    state[:, 5] = 1.0
    m = np.maximum(1, np.ceil(tau / step).astype(int))
    h = tau / m
    min_j = np.full(nb, np.inf)
    signchg = np.zeros(nb, dtype=int)
    prev_j = state[:, 4].copy()
    for k in range(int(m.max())):
        live = m > k
        idx = np.nonzero(live)[0]
        s = state[idx]
        dt = h[idx][:, None]
        k1 = _jacobi_rhs(metric, s)
        k2 = _jacobi_rhs(metric, s + 0.5 * dt * k1)
        k3 = _jacobi_rhs(metric, s + 0.5 * dt * k2)
        k4 = _jacobi_rhs(metric, s + dt * k3)
        state[idx] = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        j = state[idx, 4]
        min_j[idx] = np.minimum(min_j[idx], j)
        signchg[idx] += (np.sign(j) != np.sign(np.maximum(prev_j[idx], 1e-300))) & (j <= 0)
        prev_j[idx] = j
    return min_j, signchg


def simplicity_diagnostics(metric, n_geodesics=48, n_curvature=2048,
                           n_pairs=256, step=2e-3, seed=0):
    """Sampled diagnostics for the three simplicity axioms.

    Reports (i) the minimum of the scalar Jacobi field along sampled
    geodesics (values staying positive indicate no conjugate points),
    (ii) a sampled Lipschitz constant of the squared travel time over
    nearby boundary-fan parameter pairs, and (iii) the sign histogram
    of curvature samples.  Purely diagnostic: thresholds are reported,
    not enforced.
    """
    from .transform import BoundaryFan

    rng = np.random.default_rng(seed)
    fan = BoundaryFan(metric, n_boundary=max(8, n_geodesics // 4), n_dir=5)
    pick = rng.choice(fan.states.shape[0], size=min(n_geodesics, fan.states.shape[0]),
                      replace=False)
    z0 = fan.states[pick]
    res = trace_to_boundary(metric, z0, step=step)
    min_j, signchg = _jacobi_trace(metric, z0, res.tau, step)

    # local Lipschitz constant of tau^2 in fan parameters (phi, sigma)
    phi = rng.uniform(0, 2 * np.pi, n_pairs)
    sig = rng.uniform(-1.35, 1.35, n_pairs)
    dphi = rng.normal(scale=1e-3, size=n_pairs)
    dsig = rng.normal(scale=1e-3, size=n_pairs)
    za = _fan_states(metric, phi, sig)
    zb = _fan_states(metric, phi + dphi, sig + dsig)
    ta = trace_to_boundary(metric, za, step=step).tau
    tb = trace_to_boundary(metric, zb, step=step).tau
    dist = np.hypot(dphi, dsig)
    lip = np.max(np.abs(ta**2 - tb**2) / np.maximum(dist, 1e-12))

    xs = rng.uniform(-1, 1, (4 * n_curvature, 2))
    xs = xs[xs[:, 0] ** 2 + xs[:, 1] ** 2 < 0.995][:n_curvature]
    k = metric.gauss_curvature(xs)
    tol = 1e-10
    return SimplicityReport(
        min_jacobi=float(min_j.min()),
        jacobi_sign_changes=int(signchg.sum()),
        tau2_lipschitz=float(lip),
        curvature_negative_fraction=float(np.mean(k < -tol)),
        curvature_zero_fraction=float(np.mean(np.abs(k) <= tol)),
        curvature_positive_fraction=float(np.mean(k > tol)),
        notes={"n_geodesics": int(len(z0)), "n_curvature": int(len(k)),
               "n_pairs": int(n_pairs), "step": step},
    )


def _fan_states(metric, phi, sigma):
    """Boundary states at angle ``phi`` with inward angle ``sigma``."""
    from .metrics import sqrt_spd_2x2

    x = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    g = metric.g(x)
    sq = sqrt_spd_2x2(g)
    det = sq[..., 0, 0] * sq[..., 1, 1] - sq[..., 0, 1] ** 2
    isq = np.empty_like(sq)
    isq[..., 0, 0] = sq[..., 1, 1] / det
    isq[..., 1, 1] = sq[..., 0, 0] / det
    isq[..., 0, 1] = isq[..., 1, 0] = -sq[..., 0, 1] / det
    ginv = metric.inv_g(x)
    nu = -np.einsum("...ij,...j->...i", ginv, x)
    nu = unit_vector(metric, x, nu)
    w_nu = np.einsum("...ij,...j->...i", sq, nu)
    alpha_nu = np.arctan2(w_nu[..., 1], w_nu[..., 0])
    ang = alpha_nu + sigma
    e = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    v = np.einsum("...ij,...j->...i", isq, e)
    return np.concatenate([x, v], axis=-1)
