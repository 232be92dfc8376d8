"""Training objectives for the spectral and pixel phases.

Every loss returns its value together with adjoint images (the gradient of
the loss w.r.t. the rendered intensity and opacity maps), which
``total_loss`` pushes back through the renderer and the deformation model.
Pixel terms are means over pixels; spectral terms sum over grid entries of
pixel-mean moments.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from .anneal import AnnealConfig, alpha_at, band_weights
from .deform import MorphField, Params, apply_deformation, arap_energy, deformation_backward
from .grid import CoordinateField, Image, ShapeError
from .spectral import FrequencyGrid, SpectralBasis
from .splat import DEFAULT_CUTOFF, Scene, render_backward, render_with_density

BCE_EPS = 1e-6
SPECTRAL = "spectral"
PIXEL = "pixel"
METRICS = ("l1", "squared")


@dataclass(frozen=True)
class LossWeights:
    lambda_image: float = 5000.0
    lambda_arap: float = 1.0
    lambda_spec_mask: float = 0.3
    lambda_bce: float = 0.1
    add_pixel_loss: int = 7000
    arap_start_iter: int = 1000
    spectral_metric: str = "l1"

    def __post_init__(self):
        for name in ("lambda_image", "lambda_arap", "lambda_spec_mask", "lambda_bce"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.spectral_metric not in METRICS:
            raise ValueError(f"spectral_metric must be one of {METRICS}")


class ImageLoss(NamedTuple):
    value: float
    d_intensity: np.ndarray
    d_opacity: np.ndarray
    parts: Dict[str, object]


@dataclass
class LossReport:
    total: float
    image_term: float
    arap_term: float
    phase: str
    alpha: float = float("nan")
    per_band_contribution: Optional[np.ndarray] = None
    parts: Dict[str, object] = dc_field(default_factory=dict)


def _check_pair(rend: Image, gt: Image) -> None:
    if rend.intensity.shape != gt.intensity.shape:
        raise ShapeError(f"rendered {rend.intensity.shape} vs target {gt.intensity.shape}")


def _moment_residual(delta: np.ndarray, entry_w: np.ndarray, metric: str):
    """Per-entry loss and the conjugated gradient weights fed to the moment adjoint."""
    w = entry_w if delta.ndim == 1 else entry_w[:, None]
    if metric == "l1":
        per_entry = w * (np.abs(delta.real) + np.abs(delta.imag))
        grad = w * (np.sign(delta.real) + 1j * np.sign(delta.imag))
    else:
        per_entry = w * (delta.real ** 2 + delta.imag ** 2)
        grad = 2.0 * w * delta
    if per_entry.ndim == 2:
        per_entry = per_entry.sum(axis=1)
    return per_entry, np.conj(grad)


def spectral_image_loss(rend: Image, gt: Image, grid: FrequencyGrid, field: CoordinateField,
                        weights, lambda_spec_mask: float = 0.0, metric: str = "l1",
                        basis: Optional[SpectralBasis] = None,
                        gt_moments: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> ImageLoss:
    """Band-weighted moment discrepancy of intensity plus ``lambda_spec_mask`` times that of opacity.

    Args:
        weights: per-band weights ``w_k``, length ``grid.num_bands``.
        metric: ``"l1"`` sums ``|Re d| + |Im d|`` per entry, ``"squared"`` sums ``|d|^2``.
        gt_moments: precomputed ``(intensity, opacity)`` target moments.
    """
    _check_pair(rend, gt)
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (grid.num_bands,):
        raise ShapeError(f"expected {grid.num_bands} band weights, got {weights.shape}")
    entry_w = weights[grid.band]
    d_int = np.zeros_like(rend.intensity)
    d_op = np.zeros(rend.intensity.shape[:2])
    per_band = np.zeros(grid.num_bands)
    if not np.any(entry_w > 0.0):
        return ImageLoss(0.0, d_int, d_op, {"per_band": per_band, "intensity": 0.0, "mask": 0.0})

    basis = basis or SpectralBasis(grid, field)
    if gt_moments is None:
        gt_int = basis.project(gt.intensity)
        gt_op = basis.project(gt.opacity) if gt.opacity is not None else None
    else:
        gt_int, gt_op = gt_moments

    per_entry, gw = _moment_residual(basis.project(rend.intensity) - gt_int, entry_w, metric)
    d_int = basis.adjoint(gw)
    value_int = float(per_entry.sum())
    np.add.at(per_band, grid.band, per_entry)

    value_mask = 0.0
    if lambda_spec_mask > 0.0:
        if rend.opacity is None or gt_op is None:
            raise ShapeError("spectral mask term needs opacity maps on both images")
        per_entry_m, gw_m = _moment_residual(basis.project(rend.opacity) - gt_op, entry_w, metric)
        d_op = lambda_spec_mask * basis.adjoint(gw_m)
        value_mask = float(per_entry_m.sum())
        np.add.at(per_band, grid.band, lambda_spec_mask * per_entry_m)

    value = value_int + lambda_spec_mask * value_mask
    return ImageLoss(value, d_int, d_op, {"per_band": per_band, "intensity": value_int, "mask": value_mask})


def pixel_image_loss(rend: Image, gt: Image, lambda_bce: float = 0.0) -> ImageLoss:
    """``mean (I_r - I_g)^2 + mean (I_r O_r - I_g O_g)^2 + lambda_bce * mean BCE(O_r, O_g)``."""
    _check_pair(rend, gt)
    if rend.opacity is None or gt.opacity is None:
        raise ShapeError("pixel loss needs opacity maps on both images")
    ir, ig = rend.intensity, gt.intensity
    o_r, o_g = rend.opacity, gt.opacity
    if ir.ndim == 3:
        o_r_b, o_g_b = o_r[..., None], o_g[..., None]
    else:
        o_r_b, o_g_b = o_r, o_g
    n = ir.size
    diff = ir - ig
    masked = ir * o_r_b - ig * o_g_b
    mse_term = float(np.sum(diff * diff) / n)
    masked_term = float(np.sum(masked * masked) / n)

    d_int = (2.0 / n) * (diff + masked * o_r_b)
    d_op = (2.0 / n) * (masked * ir)
    if d_op.ndim == 3:
        d_op = d_op.sum(axis=2)

    bce_term = 0.0
    if lambda_bce > 0.0:
        npix = o_r.size
        oc = np.clip(o_r, BCE_EPS, 1.0 - BCE_EPS)
        bce = -(o_g * np.log(oc) + (1.0 - o_g) * np.log1p(-oc))
        bce_term = float(np.sum(bce) / npix)
        inside = (o_r > BCE_EPS) & (o_r < 1.0 - BCE_EPS)
        d_bce = np.where(inside, (-o_g / oc + (1.0 - o_g) / (1.0 - oc)) / npix, 0.0)
        d_op = d_op + lambda_bce * d_bce

    value = mse_term + masked_term + lambda_bce * bce_term
    return ImageLoss(value, d_int, d_op, {"mse": mse_term, "masked_mse": masked_term, "bce": bce_term})


def binary_entropy(p: np.ndarray) -> float:
    """Mean BCE(p, p), the floor the BCE term reaches when rendered and target opacity agree."""
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(np.mean(-(p * np.log(pc) + (1.0 - p) * np.log1p(-pc))))


@dataclass
class TrackingProblem:
    """A canonical scene, a target image, and the loss machinery that links them.

    ``static_band_weights`` replaces the annealing schedule with fixed weights.
    ``true_params`` (when the target is synthetic) enables error tracking.
    """

    scene: Scene
    target: Image
    field: CoordinateField
    grid: FrequencyGrid
    anneal: AnnealConfig
    weights: LossWeights
    cutoff: Optional[float] = DEFAULT_CUTOFF
    static_band_weights: Optional[np.ndarray] = None
    true_params: Optional[Params] = None

    def __post_init__(self):
        if self.grid.num_bands != self.anneal.num_bands and self.static_band_weights is None:
            raise ValueError("grid and anneal config disagree on num_bands")
        self.basis = SpectralBasis(self.grid, self.field)
        gt_op = self.basis.project(self.target.opacity) if self.target.opacity is not None else None
        self.gt_moments = (self.basis.project(self.target.intensity), gt_op)
        self._true_means = None
        if self.true_params is not None:
            self._true_means = apply_deformation(self.true_params, self.scene).means

    def band_weights_at(self, t: int):
        if self.static_band_weights is not None:
            return float("nan"), np.asarray(self.static_band_weights, dtype=np.float64)
        a = alpha_at(self.anneal, t)
        return a, band_weights(a, self.anneal.num_bands)

    def displacement_error(self, params: Params) -> float:
        """RMS distance between deformed and true Gaussian means (nan without ``true_params``)."""
        if self._true_means is None:
            return float("nan")
        means = apply_deformation(params, self.scene).means
        return float(np.sqrt(np.mean(np.sum((means - self._true_means) ** 2, axis=1))))

    def max_displacement(self, params: Params) -> float:
        if self._true_means is None:
            return float("nan")
        means = apply_deformation(params, self.scene).means
        return float(np.max(np.linalg.norm(means - self._true_means, axis=1)))


def total_loss(t: int, params: Params, problem: TrackingProblem):
    """Composite loss at iteration ``t`` and its exact gradient w.r.t. the flat parameter vector."""
    if t < 0:
        raise ValueError("iteration index must be non-negative")
    lw = problem.weights
    deformed = apply_deformation(params, problem.scene)
    rend, density = render_with_density(deformed, problem.field, problem.cutoff)

    per_band = None
    if t < lw.add_pixel_loss:
        phase = SPECTRAL
        alpha, bw = problem.band_weights_at(t)
        img = spectral_image_loss(rend, problem.target, problem.grid, problem.field, bw,
                                  lw.lambda_spec_mask, lw.spectral_metric,
                                  basis=problem.basis, gt_moments=problem.gt_moments)
        per_band = img.parts["per_band"]
    else:
        phase = PIXEL
        alpha = float(problem.anneal.num_bands) if problem.static_band_weights is None else float("nan")
        img = pixel_image_loss(rend, problem.target, lw.lambda_bce)

    sg = render_backward(deformed, problem.field, lw.lambda_image * img.d_intensity,
                         lw.lambda_image * img.d_opacity, problem.cutoff, density=density)
    grad = deformation_backward(params, problem.scene, sg.mean, sg.covariance)

    arap = 0.0
    if isinstance(params, MorphField) and t >= lw.arap_start_iter and lw.lambda_arap > 0.0:
        arap, g_off = arap_energy(params)
        table = grad.reshape(-1, 3)
        table[:, :2] += lw.lambda_arap * g_off
        grad = table.reshape(-1)

    total = lw.lambda_image * img.value + lw.lambda_arap * arap
    report = LossReport(total, img.value, arap, phase, alpha, per_band, dict(img.parts))
    return report, grad
