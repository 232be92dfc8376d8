# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled render kernels.

Same contract as ``spectrack._fallback``; each primitive only visits the
pixels inside the bounding box of its cutoff ellipse.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, floor, ceil

cnp.import_array()


cdef inline void _box(double mu, double var, double cutoff, int n,
                      int* lo, int* hi) noexcept nogil:
    # index range whose pixel centers may fall inside |x - mu| <= cutoff * sqrt(var)
    cdef double ext, a, b
    if cutoff <= 0.0:
        lo[0] = 0
        hi[0] = n
        return
    ext = cutoff * sqrt(var)
    a = floor((mu - ext + 1.0) * n * 0.5 - 0.5) - 1.0
    b = ceil((mu + ext + 1.0) * n * 0.5 - 0.5) + 2.0
    if a < 0.0:
        a = 0.0
    if a > n:
        a = n
    if b > n:
        b = n
    if b < a:
        b = a
    lo[0] = <int>a
    hi[0] = <int>b


def render_forward(int width, int height,
                   const double[:, ::1] means, const double[:, ::1] icovs,
                   const double[:, ::1] amps, const double[::1] opac,
                   double cutoff, const double[:, ::1] covs=None):
    cdef Py_ssize_t n = means.shape[0]
    cdef Py_ssize_t channels = amps.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] intensity = np.zeros((width * height, channels))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] density = np.zeros(width * height)
    cdef double[:, ::1] inten_v = intensity
    cdef double[::1] dens_v = density
    cdef Py_ssize_t i, ch, p
    cdef int xi, yj, x0, x1, y0, y1
    cdef double a, b, c, mx, my, dx, dy, q, g, ag, c2, x, y
    c2 = cutoff * cutoff
    with nogil:
        for i in range(n):
            a = icovs[i, 0]
            b = icovs[i, 1]
            c = icovs[i, 2]
            mx = means[i, 0]
            my = means[i, 1]
            if covs is not None:
                _box(mx, covs[i, 0], cutoff, width, &x0, &x1)
                _box(my, covs[i, 2], cutoff, height, &y0, &y1)
            else:
                x0 = 0; x1 = width; y0 = 0; y1 = height
            for yj in range(y0, y1):
                y = 2.0 * (yj + 0.5) / height - 1.0
                dy = y - my
                for xi in range(x0, x1):
                    x = 2.0 * (xi + 0.5) / width - 1.0
                    dx = x - mx
                    q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
                    if cutoff > 0.0 and q > c2:
                        continue
                    g = exp(-0.5 * q)
                    ag = opac[i] * g
                    p = yj * width + xi
                    dens_v[p] += ag
                    for ch in range(channels):
                        inten_v[p, ch] += ag * amps[i, ch]
    return intensity, density


def render_backward(int width, int height,
                    const double[:, ::1] means, const double[:, ::1] icovs,
                    const double[:, ::1] amps, const double[::1] opac,
                    double cutoff,
                    const double[:, ::1] adj_int, const double[::1] adj_dens,
                    const double[:, ::1] covs=None):
    cdef Py_ssize_t n = means.shape[0]
    cdef Py_ssize_t channels = amps.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_mean = np.zeros((n, 2))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_amp = np.zeros((n, channels))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d_opac = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_cov = np.zeros((n, 3))
    cdef double[:, ::1] dm = d_mean
    cdef double[:, ::1] da = d_amp
    cdef double[::1] do = d_opac
    cdef double[:, ::1] dc = d_cov
    cdef Py_ssize_t i, ch, p
    cdef int xi, yj, x0, x1, y0, y1
    cdef double a, b, c, mx, my, dx, dy, q, g, c2, x, y
    cdef double w_int, coef, ux, uy
    cdef double s_mx, s_my, s_o, s_cxx, s_cxy, s_cyy
    c2 = cutoff * cutoff
    with nogil:
        for i in range(n):
            a = icovs[i, 0]
            b = icovs[i, 1]
            c = icovs[i, 2]
            mx = means[i, 0]
            my = means[i, 1]
            if covs is not None:
                _box(mx, covs[i, 0], cutoff, width, &x0, &x1)
                _box(my, covs[i, 2], cutoff, height, &y0, &y1)
            else:
                x0 = 0; x1 = width; y0 = 0; y1 = height
            s_mx = 0.0; s_my = 0.0; s_o = 0.0
            s_cxx = 0.0; s_cxy = 0.0; s_cyy = 0.0
            for yj in range(y0, y1):
                y = 2.0 * (yj + 0.5) / height - 1.0
                dy = y - my
                for xi in range(x0, x1):
                    x = 2.0 * (xi + 0.5) / width - 1.0
                    dx = x - mx
                    q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
                    if cutoff > 0.0 and q > c2:
                        continue
                    g = exp(-0.5 * q)
                    p = yj * width + xi
                    w_int = 0.0
                    for ch in range(channels):
                        w_int = w_int + adj_int[p, ch] * amps[i, ch]
                        da[i, ch] += opac[i] * g * adj_int[p, ch]
                    s_o += g * (w_int + adj_dens[p])
                    coef = opac[i] * (w_int + adj_dens[p]) * g
                    ux = a * dx + b * dy
                    uy = b * dx + c * dy
                    s_mx += coef * ux
                    s_my += coef * uy
                    s_cxx += coef * ux * ux
                    s_cxy += coef * ux * uy
                    s_cyy += coef * uy * uy
            dm[i, 0] = s_mx
            dm[i, 1] = s_my
            do[i] = s_o
            dc[i, 0] = 0.5 * s_cxx
            dc[i, 1] = 0.5 * s_cxy
            dc[i, 2] = 0.5 * s_cyy
    return d_mean, d_amp, d_opac, d_cov
