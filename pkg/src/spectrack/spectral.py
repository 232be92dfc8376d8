"""Spectral moments of images over an indexed frequency grid.

A moment is the pixel-mean projection onto a complex sinusoid,

    M(omega; I) = (1/P) * sum_p I(p) * exp(-j omega . p),

with ``p`` the normalized pixel-center coordinates and
``omega = phase_scale * (kx, ky)``. Real images have conjugate-symmetric
moments, so grids store one representative per ``+-(kx, ky)`` pair.

Evaluation is separable: ``exp(-j(wx x + wy y))`` factors into per-column and
per-row phasors, so a grid of F entries costs ``O(H W Ux + H F)`` rather than
``O(H W F)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .grid import CoordinateField, Image, ShapeError, axis_centers, make_coordinate_field

DEFAULT_PHASE_SCALE = 0.5 * math.pi
LINEAR = "linear-frequency"
LOG = "log-index"
_MODES = (LINEAR, LOG)


class ConfigurationError(ValueError):
    pass


def band_of(kx: int, ky: int, mode: str = LINEAR) -> int:
    r = max(abs(kx), abs(ky))
    if mode == LINEAR:
        return max(r - 1, 0)
    if mode == LOG:
        return 0 if r <= 1 else int(math.ceil(math.log2(r)))
    raise ConfigurationError(f"unknown banding mode {mode!r}")


@dataclass(frozen=True)
class FrequencyGrid:
    kx: np.ndarray
    ky: np.ndarray
    band: np.ndarray
    num_bands: int
    phase_scale: float = DEFAULT_PHASE_SCALE
    banding_mode: str = LINEAR

    @property
    def omega(self) -> np.ndarray:
        return self.phase_scale * np.column_stack([self.kx, self.ky]).astype(np.float64)

    @property
    def omega_norm(self) -> np.ndarray:
        return np.linalg.norm(self.omega, axis=1)

    def __len__(self) -> int:
        return len(self.kx)

    @property
    def entries(self):
        om = self.omega
        return [(int(a), int(b), tuple(om[i]), int(c))
                for i, (a, b, c) in enumerate(zip(self.kx, self.ky, self.band))]

    def index_of(self, kx: int, ky: int) -> int:
        hits = np.flatnonzero((self.kx == kx) & (self.ky == ky))
        if len(hits) == 0:
            raise KeyError((kx, ky))
        return int(hits[0])

    @classmethod
    def from_indices(cls, pairs: Sequence[Tuple[int, int]], phase_scale: float = DEFAULT_PHASE_SCALE,
                     bands: Optional[Sequence[int]] = None, banding_mode: str = LINEAR) -> "FrequencyGrid":
        """Grid over an explicit list of integer index pairs (no conjugate reduction)."""
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        band = np.zeros(len(arr), dtype=np.int64) if bands is None else np.asarray(bands, dtype=np.int64)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), band,
                   int(band.max()) + 1 if len(band) else 1, float(phase_scale), banding_mode)


def build_frequency_grid(num_bands: int, max_index: Optional[int] = None,
                         phase_scale: float = DEFAULT_PHASE_SCALE, banding_mode: str = LINEAR,
                         dims: int = 2) -> FrequencyGrid:
    """Enumerate conjugate-reduced indices with ``max(|kx|, |ky|) <= max_index``.

    Entries whose band is ``>= num_bands`` are dropped. ``dims=1`` restricts
    the grid to ``ky = 0`` for single-row images.
    """
    if num_bands < 1:
        raise ConfigurationError("num_bands must be >= 1")
    if banding_mode not in _MODES:
        raise ConfigurationError(f"unknown banding mode {banding_mode!r}")
    if max_index is None:
        max_index = num_bands if banding_mode == LINEAR else 2 ** (num_bands - 1)
    rows = []
    for kx in range(0, max_index + 1):
        ky_range = [0] if dims == 1 else range(-max_index, max_index + 1)
        for ky in ky_range:
            if kx == 0 and ky < 0:
                continue
            b = band_of(kx, ky, banding_mode)
            if b < num_bands:
                rows.append((b, max(abs(kx), abs(ky)), kx, ky))
    rows.sort()
    band = np.array([r[0] for r in rows], dtype=np.int64)
    for b in range(num_bands):
        if not np.any(band == b):
            raise ConfigurationError(f"band {b} is empty; increase max_index (currently {max_index})")
    kx = np.array([r[2] for r in rows], dtype=np.int64)
    ky = np.array([r[3] for r in rows], dtype=np.int64)
    return FrequencyGrid(kx, ky, band, num_bands, float(phase_scale), banding_mode)


def dft_grid(width: int, height: int) -> FrequencyGrid:
    """Complete discrete Fourier basis of a ``width x height`` image in normalized coordinates.

    Index ``m`` along an axis corresponds to ``omega = pi * m``, which equals
    the DFT kernel ``exp(-2 pi j m i / n)`` up to a constant unit phase.
    """
    mx, my = np.meshgrid(np.arange(width), np.arange(height))
    pairs = np.column_stack([mx.ravel(), my.ravel()])
    return FrequencyGrid.from_indices(pairs, phase_scale=math.pi)


@dataclass(frozen=True)
class SpectralMomentSet:
    grid: FrequencyGrid
    values: np.ndarray  # (F,) or (F, C) complex

    def __post_init__(self):
        if self.values.shape[0] != len(self.grid):
            raise ShapeError("moment count does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("moments must be finite")

    def to_csv(self, path: Union[str, Path]) -> None:
        vals = self.values if self.values.ndim == 1 else self.values[:, 0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kx", "ky", "band", "re", "im"])
            for kx, ky, b, v in zip(self.grid.kx, self.grid.ky, self.grid.band, vals):
                w.writerow([int(kx), int(ky), int(b), f"{v.real:.17g}", f"{v.imag:.17g}"])


class SpectralBasis:
    """Cached separable phasors for one (grid, field) pair."""

    def __init__(self, grid: FrequencyGrid, field: CoordinateField):
        self.grid = grid
        self.width, self.height = field.width, field.height
        self.num_pixels = field.num_pixels
        ux, self.ix = np.unique(grid.kx, return_inverse=True)
        uy, self.iy = np.unique(grid.ky, return_inverse=True)
        s = grid.phase_scale
        self.ex = np.exp(-1j * s * np.outer(axis_centers(field.width), ux))    # (W, Ux)
        self.ey = np.exp(-1j * s * np.outer(axis_centers(field.height), uy))   # (H, Uy)
        self.ey_sel = self.ey[:, self.iy]                                      # (H, F)
        scatter = np.zeros((len(grid), len(ux)))
        scatter[np.arange(len(grid)), self.ix] = 1.0
        self.scatter = scatter

    def project(self, values: np.ndarray) -> np.ndarray:
        """Moments of an ``(H, W)`` or ``(H, W, C)`` array."""
        if values.shape[:2] != (self.height, self.width):
            raise ShapeError(f"array shape {values.shape} does not match grid {self.height}x{self.width}")
        rows = np.einsum("yx...,xu->yu...", values, self.ex)                  # (H, Ux[, C])
        picked = rows[:, self.ix]                                               # (H, F[, C])
        if values.ndim == 2:
            out = np.einsum("yf,yf->f", self.ey_sel, picked)
        else:
            out = np.einsum("yf,yfc->fc", self.ey_sel, picked)
        return out / self.num_pixels

    def adjoint(self, weights: np.ndarray) -> np.ndarray:
        """``Re[sum_f w_f exp(-j omega_f . p)] / P`` as an ``(H, W[, C])`` array."""
        weights = np.asarray(weights)
        if weights.shape[0] != len(self.grid):
            raise ShapeError(f"expected {len(self.grid)} weights, got {weights.shape[0]}")
        if weights.ndim == 1:
            rows = (self.ey_sel * weights[None, :]) @ self.scatter              # (H, Ux)
            out = (rows @ self.ex.T).real
        else:
            rows = np.einsum("yf,fc,fu->yuc", self.ey_sel, weights, self.scatter)
            out = np.einsum("yuc,xu->yxc", rows, self.ex).real
        return out / self.num_pixels


def _values(image) -> np.ndarray:
    return image.intensity if isinstance(image, Image) else np.asarray(image, dtype=np.float64)


def compute_moments(image, grid: FrequencyGrid, field: CoordinateField,
                    basis: Optional[SpectralBasis] = None) -> SpectralMomentSet:
    basis = basis or SpectralBasis(grid, field)
    return SpectralMomentSet(grid, basis.project(_values(image)))


def moments_adjoint(grid: FrequencyGrid, field: CoordinateField, residual_weights,
                    basis: Optional[SpectralBasis] = None) -> np.ndarray:
    """Exact transpose of ``compute_moments``: ``<adjoint(w), J> = Re sum_f w_f M_f(J)``."""
    basis = basis or SpectralBasis(grid, field)
    return basis.adjoint(np.asarray(residual_weights, dtype=np.complex128))


# --- closed forms for a rigidly shifted image -------------------------------

def closed_form_shift_loss(moment_magnitude: float, omega, d) -> float:
    """``|M|^2 (1 - cos(omega . d))``: half the squared moment error under a pure shift ``d``."""
    phase = float(np.dot(omega, d))
    return moment_magnitude ** 2 * (1.0 - math.cos(phase))


def closed_form_shift_gradient(moment_magnitude: float, omega, d) -> np.ndarray:
    phase = float(np.dot(omega, d))
    return moment_magnitude ** 2 * math.sin(phase) * np.asarray(omega, dtype=np.float64)


# --- full-basis bridges ------------------------------------------------------

def spatial_l2_via_spectrum(a, b) -> float:
    """Sum of squared pixel differences, computed from the complete Fourier basis."""
    da, db = _values(a), _values(b)
    if da.shape != db.shape:
        raise ShapeError(f"image shapes differ: {da.shape} vs {db.shape}")
    h, w = da.shape[:2]
    m = SpectralBasis(dft_grid(w, h), make_coordinate_field(w, h)).project(da - db)
    return float(np.sum(np.abs(m) ** 2) * (w * h))


def circular_shift_theorem_check(image, shift) -> float:
    """Max deviation between moments of a circularly shifted image and phase-shifted moments.

    ``shift = (sx, sy)`` in whole pixels; the equivalent normalized displacement
    is ``(2 sx / W, 2 sy / H)``.
    """
    vals = _values(image)
    h, w = vals.shape[:2]
    sx, sy = int(shift[0]), int(shift[1])
    shifted = np.roll(vals, (sy, sx), axis=(0, 1))
    grid = dft_grid(w, h)
    basis = SpectralBasis(grid, make_coordinate_field(w, h))
    d = np.array([2.0 * sx / w, 2.0 * sy / h])
    phase = np.exp(-1j * (grid.omega @ d))
    if vals.ndim == 3:
        phase = phase[:, None]
    return float(np.max(np.abs(basis.project(shifted) - basis.project(vals) * phase)))


def max_active_omega_norm(grid: FrequencyGrid, band_weights) -> float:
    """Largest ``||omega||`` among entries whose band weight is positive (0 if none)."""
    w = np.asarray(band_weights, dtype=np.float64)
    active = w[grid.band] > 0.0
    if not np.any(active):
        return 0.0
    return float(grid.omega_norm[active].max())
