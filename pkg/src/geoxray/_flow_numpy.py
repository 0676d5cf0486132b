"""Pure-numpy flow kernel: one batched RK4 step of the geodesic system.

This is the fallback used when the compiled extension is unavailable.
Both kernels implement the same contract, see ``backend.rk4_step_batch``.
"""

import numpy as np


def _gamma_vv(spec, x, v):
    """Contraction Gamma^i_{jk} v^j v^k per metric family, batched."""
    family, params, tables = spec
    if family == 0:  # euclidean
        return np.zeros_like(x)
    if family in (1, 2):  # conformal: Gamma(v,v) = 2 (dphi.v) v - |v|^2 dphi
        if family == 1:
            rho = params[0]
            c = 1.0 - rho**2 * (x[:, 0] ** 2 + x[:, 1] ** 2)
            dphi = (2.0 * rho**2 / c)[:, None] * x
        else:
            eps = params[0]
            dphi = np.zeros_like(x)
            dphi[:, 0] = 2.0 * eps * np.maximum(x[:, 0], 0.0)
        dv = dphi[:, 0] * v[:, 0] + dphi[:, 1] * v[:, 1]
        vv = v[:, 0] ** 2 + v[:, 1] ** 2
        return 2.0 * dv[:, None] * v - vv[:, None] * dphi
    # grid_sampled: full Levi-Civita contraction from interpolated tables
    pts = x
    g = tables.interp_g(pts)
    dg = tables.interp_dg(pts)
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    ginv = np.empty_like(g)
    ginv[:, 0, 0] = g[:, 1, 1] / det
    ginv[:, 1, 1] = g[:, 0, 0] / det
    ginv[:, 0, 1] = ginv[:, 1, 0] = -g[:, 0, 1] / det
    bracket = (np.einsum("pjlk->pljk", dg) + np.einsum("pklj->pljk", dg) - dg)
    gam = 0.5 * np.einsum("pil,pljk->pijk", ginv, bracket)
    return np.einsum("pijk,pj,pk->pi", gam, v, v)


def _rhs(spec, state):
    out = np.empty_like(state)
    out[:, 0:2] = state[:, 2:4]
    out[:, 2:4] = -_gamma_vv(spec, state[:, 0:2], state[:, 2:4])
    return out


def rk4_step_batch(spec, state, dt):
    """Advance ``state`` (B, 4) by one classical RK4 step of size ``dt`` (B,)."""
    dt = dt[:, None]
    k1 = _rhs(spec, state)
    k2 = _rhs(spec, state + 0.5 * dt * k1)
    k3 = _rhs(spec, state + 0.5 * dt * k2)
    k4 = _rhs(spec, state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
