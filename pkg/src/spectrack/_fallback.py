"""Pure numpy render kernels, used when the compiled extension is unavailable.

Both kernels work on flattened row-major pixel arrays of length ``W * H``.
Inverse covariances are packed as ``(a, b, c)`` for ``[[a, b], [b, c]]``.
A non-positive ``cutoff`` disables truncation.
"""

import numpy as np


def _pixel_xy(width, height):
    xs = 2.0 * (np.arange(width, dtype=np.float64) + 0.5) / width - 1.0
    ys = 2.0 * (np.arange(height, dtype=np.float64) + 0.5) / height - 1.0
    return np.tile(xs, height), np.repeat(ys, width)


def _kernel(px, py, mean, icov, cutoff):
    dx = px - mean[0]
    dy = py - mean[1]
    q = icov[0] * dx * dx + 2.0 * icov[1] * dx * dy + icov[2] * dy * dy
    g = np.exp(-0.5 * q)
    if cutoff > 0.0:
        g[q > cutoff * cutoff] = 0.0
    return dx, dy, g


def render_forward(width, height, means, icovs, amps, opac, cutoff, covs=None):
    px, py = _pixel_xy(width, height)
    n_pix = width * height
    channels = amps.shape[1]
    intensity = np.zeros((n_pix, channels))
    density = np.zeros(n_pix)
    for i in range(means.shape[0]):
        _, _, g = _kernel(px, py, means[i], icovs[i], cutoff)
        ag = opac[i] * g
        density += ag
        intensity += ag[:, None] * amps[i][None, :]
    return intensity, density


def render_backward(width, height, means, icovs, amps, opac, cutoff, adj_int, adj_dens, covs=None):
    px, py = _pixel_xy(width, height)
    n = means.shape[0]
    channels = amps.shape[1]
    d_mean = np.zeros((n, 2))
    d_amp = np.zeros((n, channels))
    d_opac = np.zeros(n)
    d_cov = np.zeros((n, 3))
    for i in range(n):
        dx, dy, g = _kernel(px, py, means[i], icovs[i], cutoff)
        a, b, c = icovs[i]
        w_int = adj_int @ amps[i]
        d_amp[i] = opac[i] * (g @ adj_int)
        d_opac[i] = g @ (w_int + adj_dens)
        coef = opac[i] * (w_int + adj_dens) * g
        ux = a * dx + b * dy
        uy = b * dx + c * dy
        d_mean[i, 0] = coef @ ux
        d_mean[i, 1] = coef @ uy
        d_cov[i, 0] = 0.5 * (coef @ (ux * ux))
        d_cov[i, 1] = 0.5 * (coef @ (ux * uy))
        d_cov[i, 2] = 0.5 * (coef @ (uy * uy))
    return d_mean, d_amp, d_opac, d_cov
