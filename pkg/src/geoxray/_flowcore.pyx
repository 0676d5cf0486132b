# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled flow kernel: batched RK4 steps of the geodesic system.

Mirrors ``_flow_numpy.rk4_step_batch``; selected at import by ``backend``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fmax


cdef inline void _gamma_vv(int family, double p0,
                           double[:, ::1] gtab, double[:, ::1] dgtab,
                           int nx, int ny, double ox, double oy,
                           double hx, double hy,
                           double x0, double x1, double v0, double v1,
                           double* o0, double* o1) noexcept nogil:
    cdef double c, d0, d1, dv, vv
    cdef double g11, g12, g22, det, i11, i12, i22
    cdef double dg[6]
    cdef double gm[8]
    cdef double t1, t2, s, t
    cdef int i, j, k
    cdef Py_ssize_t base
    if family == 0:
        o0[0] = 0.0
        o1[0] = 0.0
        return
    if family == 1 or family == 2:
        if family == 1:
            c = 1.0 - p0 * p0 * (x0 * x0 + x1 * x1)
            d0 = 2.0 * p0 * p0 * x0 / c
            d1 = 2.0 * p0 * p0 * x1 / c
        else:
            d0 = 2.0 * p0 * fmax(x0, 0.0)
            d1 = 0.0
        dv = d0 * v0 + d1 * v1
        vv = v0 * v0 + v1 * v1
        o0[0] = 2.0 * dv * v0 - vv * d0
        o1[0] = 2.0 * dv * v1 - vv * d1
        return
    # grid_sampled: bilinear tables, then the Levi-Civita contraction
    t1 = (x0 - ox) / hx
    t2 = (x1 - oy) / hy
    if t1 < 0.0:
        t1 = 0.0
    if t1 > nx - 1 - 1e-12:
        t1 = nx - 1 - 1e-12
    if t2 < 0.0:
        t2 = 0.0
    if t2 > ny - 1 - 1e-12:
        t2 = ny - 1 - 1e-12
    i = <int> t1
    j = <int> t2
    s = t1 - i
    t = t2 - j
    base = i * ny + j
    g11 = ((1 - s) * (1 - t) * gtab[base, 0] + s * (1 - t) * gtab[base + ny, 0]
           + (1 - s) * t * gtab[base + 1, 0] + s * t * gtab[base + ny + 1, 0])
    g12 = ((1 - s) * (1 - t) * gtab[base, 1] + s * (1 - t) * gtab[base + ny, 1]
           + (1 - s) * t * gtab[base + 1, 1] + s * t * gtab[base + ny + 1, 1])
    g22 = ((1 - s) * (1 - t) * gtab[base, 2] + s * (1 - t) * gtab[base + ny, 2]
           + (1 - s) * t * gtab[base + 1, 2] + s * t * gtab[base + ny + 1, 2])
    for k in range(6):
        dg[k] = ((1 - s) * (1 - t) * dgtab[base, k] + s * (1 - t) * dgtab[base + ny, k]
                 + (1 - s) * t * dgtab[base + 1, k] + s * t * dgtab[base + ny + 1, k])
    det = g11 * g22 - g12 * g12
    i11 = g22 / det
    i12 = -g12 / det
    i22 = g11 / det
    # dg layout: dg11_1, dg11_2, dg12_1, dg12_2, dg22_1, dg22_2
    # Gamma_{l,jk} (lowered) = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
    # enumerate (l, j, k) with j <= k; gm index = l*4 + j*2 + k
    gm[0] = 0.5 * dg[0]                        # l=0 j=0 k=0
    gm[1] = 0.5 * dg[1]                        # l=0 j=0 k=1: (d0 g01 + d1 g00 - d0 g01)
    gm[2] = gm[1]
    gm[3] = dg[3] - 0.5 * dg[4]                # l=0 j=1 k=1: d1 g01 - 1/2 d0 g11
    gm[4] = dg[2] - 0.5 * dg[1]                # l=1 j=0 k=0: d0 g01 - 1/2 d1 g00
    gm[5] = 0.5 * dg[4]                        # l=1 j=0 k=1
    gm[6] = gm[5]
    gm[7] = 0.5 * dg[5]                        # l=1 j=1 k=1
    # contract with v^j v^k, then raise with g^{il}
    t1 = gm[0] * v0 * v0 + 2.0 * gm[1] * v0 * v1 + gm[3] * v1 * v1
    t2 = gm[4] * v0 * v0 + 2.0 * gm[5] * v0 * v1 + gm[7] * v1 * v1
    o0[0] = i11 * t1 + i12 * t2
    o1[0] = i12 * t1 + i22 * t2


def rk4_step_batch(int family, double[::1] params,
                   double[:, ::1] gtab, double[:, ::1] dgtab,
                   int nx, int ny, double ox, double oy, double hx, double hy,
                   double[:, ::1] state, double[::1] dt, double[:, ::1] out):
    cdef Py_ssize_t b, nb = state.shape[0]
    cdef double p0 = params[0]
    cdef double h, x0, x1, v0, v1
    cdef double a0, a1
    cdef double k1x0, k1x1, k1v0, k1v1
    cdef double k2x0, k2x1, k2v0, k2v1
    cdef double k3x0, k3x1, k3v0, k3v1
    cdef double k4x0, k4x1, k4v0, k4v1
    with nogil:
        for b in range(nb):
            h = dt[b]
            x0 = state[b, 0]
            x1 = state[b, 1]
            v0 = state[b, 2]
            v1 = state[b, 3]
            _gamma_vv(family, p0, gtab, dgtab, nx, ny, ox, oy, hx, hy,
                      x0, x1, v0, v1, &a0, &a1)
            k1x0 = v0; k1x1 = v1; k1v0 = -a0; k1v1 = -a1
            _gamma_vv(family, p0, gtab, dgtab, nx, ny, ox, oy, hx, hy,
                      x0 + 0.5 * h * k1x0, x1 + 0.5 * h * k1x1,
                      v0 + 0.5 * h * k1v0, v1 + 0.5 * h * k1v1, &a0, &a1)
            k2x0 = v0 + 0.5 * h * k1v0; k2x1 = v1 + 0.5 * h * k1v1
            k2v0 = -a0; k2v1 = -a1
            _gamma_vv(family, p0, gtab, dgtab, nx, ny, ox, oy, hx, hy,
                      x0 + 0.5 * h * k2x0, x1 + 0.5 * h * k2x1,
                      v0 + 0.5 * h * k2v0, v1 + 0.5 * h * k2v1, &a0, &a1)
            k3x0 = v0 + 0.5 * h * k2v0; k3x1 = v1 + 0.5 * h * k2v1
            k3v0 = -a0; k3v1 = -a1
            _gamma_vv(family, p0, gtab, dgtab, nx, ny, ox, oy, hx, hy,
                      x0 + h * k3x0, x1 + h * k3x1,
                      v0 + h * k3v0, v1 + h * k3v1, &a0, &a1)
            k4x0 = v0 + h * k3v0; k4x1 = v1 + h * k3v1
            k4v0 = -a0; k4v1 = -a1
            out[b, 0] = x0 + (h / 6.0) * (k1x0 + 2.0 * k2x0 + 2.0 * k3x0 + k4x0)
            out[b, 1] = x1 + (h / 6.0) * (k1x1 + 2.0 * k2x1 + 2.0 * k3x1 + k4x1)
            out[b, 2] = v0 + (h / 6.0) * (k1v0 + 2.0 * k2v0 + 2.0 * k3v0 + k4v0)
            out[b, 3] = v1 + (h / 6.0) * (k1v1 + 2.0 * k2v1 + 2.0 * k3v1 + k4v1)
