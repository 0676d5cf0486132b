"""Geodesic X-ray transform toolkit on the unit disk.

Forward transform of symmetric tensor fields for C^{1,1} metrics,
sphere-bundle operator calculus, numerical verification of the energy
and volume identities behind solenoidal injectivity, and least-squares
solenoidal decompositions.
"""

from .backend import BACKEND
from .metrics import DomainSpec, MetricField
from .quadrature import DiskQuadrature

__version__ = "0.1.0"

__all__ = ["BACKEND", "DomainSpec", "MetricField", "DiskQuadrature", "__version__"]
