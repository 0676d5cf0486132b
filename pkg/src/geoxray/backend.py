"""Flow-kernel backend selection.

The geodesic RK4 stepping is the hot loop of the whole toolkit.  At
import we pick the compiled Cython kernel when available, otherwise the
vectorized numpy fallback.  ``GEOXRAY_BACKEND=numpy|compiled`` forces a
choice (forcing ``compiled`` raises if the extension is missing).
Both kernels are bitwise-deterministic and agree to roundoff; see
``benchmarks/flow_benchmark.py`` for a throughput comparison.
"""

from __future__ import annotations

import os

import numpy as np

from . import _flow_numpy

try:
    from . import _flowcore

    _HAVE_COMPILED = True
except ImportError:
    _flowcore = None
    _HAVE_COMPILED = False

_FORCED = os.environ.get("GEOXRAY_BACKEND", "").strip().lower()
if _FORCED == "numpy":
    BACKEND = "numpy"
elif _FORCED == "compiled":
    if not _HAVE_COMPILED:
        raise ImportError("GEOXRAY_BACKEND=compiled but geoxray._flowcore is not built")
    BACKEND = "compiled"
else:
    BACKEND = "compiled" if _HAVE_COMPILED else "numpy"

_EMPTY = np.zeros((1, 1))


def kernel_spec(metric):
    """Precompute the per-metric dispatch data for the step kernels."""
    family, params, tables = metric.kernel_spec()
    if tables is None:
        return {"family": family, "params": params, "tables": None,
                "flat": (_EMPTY, _EMPTY, 1, 1, 0.0, 0.0, 1.0, 1.0)}
    return {"family": family, "params": params, "tables": tables,
            "flat": tables.flat_arrays()}


def rk4_step_batch(spec, state, dt, backend=None):
    """One classical RK4 step of ``(x, v) -> (v, -Gamma(v, v))``.

    ``state`` is (B, 4) rows ``(x1, x2, v1, v2)``; ``dt`` is (B,).
    """
    use = backend or BACKEND
    if use == "compiled":
        out = np.empty_like(state)
        gflat, dgflat, nx, ny, ox, oy, hx, hy = spec["flat"]
        _flowcore.rk4_step_batch(spec["family"], spec["params"], gflat, dgflat,
                                 nx, ny, ox, oy, hx, hy, state, dt, out)
        return out
    return _flow_numpy.rk4_step_batch(
        (spec["family"], spec["params"], spec["tables"]), state, dt)
