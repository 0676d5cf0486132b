"""Exception types shared across the toolkit."""


class GeoxrayError(Exception):
    """Base class for toolkit errors."""


class SingularMetric(GeoxrayError):
    """Metric is not positive definite at the requested point."""


class StepTooLarge(GeoxrayError):
    """Unit-speed drift of an integrated geodesic exceeded tolerance."""


class NoExit(GeoxrayError):
    """Geodesic did not reach the boundary within the time cap."""


class MissingDerivatives(GeoxrayError):
    """Field has no derivative data but a derivative was requested."""


class OrderTooLow(GeoxrayError):
    """Tensor order too low for the requested contraction."""


class UnsupportedOrder(GeoxrayError):
    """Tensor order outside the implemented range."""


class OrderMismatch(GeoxrayError):
    """Tensor orders of the two operands differ."""


class NotPureDegree(GeoxrayError):
    """Input is not concentrated on a single fiber degree."""


class GridMismatch(GeoxrayError):
    """Sphere-bundle grids of the two operands differ."""


class ResolutionTooLow(GeoxrayError):
    """Spectral tail of a sphere-bundle function exceeds tolerance."""


class NotOnBoundary(GeoxrayError):
    """Base point is not on the unit circle."""


class CoverGap(GeoxrayError):
    """Partition of unity does not cover the boundary annulus."""


class RankDeficient(GeoxrayError):
    """Basis Gram matrix is singular after rank filtering."""


class NoConvergence(GeoxrayError):
    """Iterative solver hit its iteration cap."""


class ConfigError(GeoxrayError):
    """Run configuration is missing or invalid."""
