import numpy as np
import pytest

from geoxray.bundle import SMGrid
from geoxray.metrics import MetricField
from geoxray.quadrature import DiskQuadrature


@pytest.fixture(scope="session")
def euclid():
    return MetricField.euclidean()


@pytest.fixture(scope="session")
def hyp():
    return MetricField.hyperbolic_like(0.5)


@pytest.fixture(scope="session")
def c11():
    return MetricField.conformal_c11(0.05)


@pytest.fixture(scope="session")
def all_metrics(euclid, hyp, c11):
    return [euclid, hyp, c11]


@pytest.fixture(scope="session")
def small_grid():
    return SMGrid(16, 32, 32)


@pytest.fixture(scope="session")
def small_quad():
    return DiskQuadrature(16, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_state(metric, x, v):
    """Helper: lift (x, v-direction) to the sphere bundle."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    g = metric.g(x)
    n = np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))
    return np.concatenate([x, v / n[..., None]], axis=-1)
