"""Quadrature rules on the disk and on the unit sphere bundle.

Spatial nodes are a Gauss-Legendre grid in the radius times a uniform
(half-offset) grid in the polar angle; the half offset keeps nodes off
the line ``x1 = 0`` where the C^{1,1} family is non-smooth.  The fiber
is sampled at ``alpha_j = 2 pi j / n_alpha`` so fiberwise FFTs are
available.
"""

from __future__ import annotations

import numpy as np

__all__ = ["DiskQuadrature", "gauss_legendre_01"]


def gauss_legendre_01(n):
    """Gauss-Legendre nodes and weights on (0, 1)."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


class DiskQuadrature:
    """Polar-grid quadrature ``int_M f dV_g ~ sum w * sqrt(det g) * f``."""

    def __init__(self, n_r=24, n_phi=48):
        self.n_r = n_r
        self.n_phi = n_phi
        self.r, self.w_r = gauss_legendre_01(n_r)
        self.theta = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        self.points = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)
        # Lebesgue weights r dr dtheta; metric volume applied per metric
        self.w_flat = (self.w_r[:, None] * rr) * (2 * np.pi / n_phi)

    @property
    def shape(self):
        return (self.n_r, self.n_phi)

    def flat_points(self):
        return self.points.reshape(-1, 2)

    def weights(self, metric=None):
        if metric is None:
            return self.w_flat
        return self.w_flat * metric.sqrt_det_g(self.points)

    def integrate(self, values, metric=None):
        """Integrate grid values of shape (n_r, n_phi, ...) over the disk."""
        w = self.weights(metric)
        values = np.asarray(values)
        if values.shape[:2] != self.shape:
            raise ValueError("values are not on this disk grid")
        return np.tensordot(w, values, axes=([0, 1], [0, 1]))
