"""Synthetic scenes and problem builders for the desk experiments."""

from __future__ import annotations

import math

import numpy as np

from ..anneal import AnnealConfig
from ..deform import MorphField, RigidParams, apply_deformation, rotation_matrix
from ..grid import make_coordinate_field
from ..objective import LossWeights, TrackingProblem
from ..spectral import FrequencyGrid, build_frequency_grid
from ..splat import Scene, load_scene, render

# strokes of an "F" with a detached tail, so no rotation maps the pattern onto itself
_STROKES = [
    ((-0.20, -0.28), (-0.20, 0.28)),
    ((-0.06, -0.28), (0.22, -0.28)),
    ((-0.06, 0.00), (0.08, 0.00)),
    ((0.05, 0.20), (0.20, 0.22)),
]


def _stroke_points(n: int) -> np.ndarray:
    lengths = [math.dist(a, b) for a, b in _STROKES]
    total = sum(lengths)
    # at least one point per stroke, the rest split by length
    counts = [1] * len(_STROKES)
    extra = n - len(_STROKES)
    shares = [extra * length / total for length in lengths]
    for i, s in enumerate(shares):
        counts[i] += int(s)
    order = np.argsort([-(s - int(s)) for s in shares], kind="stable")
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    pts = []
    for (a, b), c in zip(_STROKES, counts):
        for u in np.linspace(0.0, 1.0, c) if c > 1 else [0.5]:
            pts.append((a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])))
    return np.array(pts)


def desk_scene(num_gaussians: int = 12, scale: float = 1.0, seed: int = 7) -> Scene:
    """Asymmetric pattern of anisotropic Gaussians centered on the origin."""
    if num_gaussians < len(_STROKES):
        raise ValueError(f"desk scene needs at least {len(_STROKES)} Gaussians")
    rng = np.random.default_rng(seed)
    pts = _stroke_points(num_gaussians)
    pts = (pts - pts.mean(axis=0)) * scale
    n = len(pts)
    spacing = 0.04 * math.sqrt(12.0 / n) if n > 12 else 0.04
    covs = np.empty((n, 2, 2))
    for i in range(n):
        s1, s2 = rng.uniform(0.75, 1.25, 2) * spacing * scale
        rot = rotation_matrix(rng.uniform(0.0, math.pi))
        c = rot @ np.diag([s1 * s1, s2 * s2]) @ rot.T
        covs[i] = 0.5 * (c + c.T)
    amps = rng.uniform(0.6, 1.0, n)
    return Scene(pts, covs, amps, np.full(n, 0.9))


def scene_from_config(cfg) -> Scene:
    if cfg.scene_file:
        return load_scene(cfg.scene_file)
    return desk_scene(cfg.num_gaussians, cfg.scene_scale)


def make_grid(cfg, dims: int = 2) -> FrequencyGrid:
    return build_frequency_grid(cfg.num_bands, None, cfg.phase_scale, cfg.banding_mode, dims=dims)


def loss_weights(cfg, add_pixel_loss=None, **overrides) -> LossWeights:
    kw = dict(
        lambda_image=cfg.lambda_image,
        lambda_arap=cfg.lambda_arap,
        lambda_spec_mask=cfg.lambda_spec_mask,
        lambda_bce=cfg.lambda_bce,
        add_pixel_loss=cfg.add_pixel_loss if add_pixel_loss is None else add_pixel_loss,
        arap_start_iter=cfg.arap_start_iter,
        spectral_metric=cfg.spectral_metric,
    )
    kw.update(overrides)
    return LossWeights(**kw)


def anneal_config(cfg, num_bands=None) -> AnnealConfig:
    return AnnealConfig(cfg.num_bands if num_bands is None else num_bands,
                        max(1, cfg.add_pixel_loss), cfg.warmup, cfg.banding_mode)


# --- 1D pulse benchmark ------------------------------------------------------

class Pulse1D:
    """One Gaussian pulse on a single-row image.

    Positions are reported in "theta" units: the image spans
    ``[-half_width, half_width]`` theta, i.e. ``theta = half_width * x``.
    """

    def __init__(self, cfg):
        self.half_width = cfg.domain_half_width
        self.field = make_coordinate_field(cfg.width_1d, 1)
        sigma = cfg.pulse_sigma / self.half_width
        self.scene = Scene([[0.0, 0.0]], [[[sigma * sigma, 0.0], [0.0, 1.0]]], [1.0], [1.0])
        self.true_params = RigidParams.identity()
        self.target = render(self.scene, self.field, cfg.cutoff)
        self.theta0 = cfg.theta0
        self.cutoff = cfg.cutoff

    def params(self, theta: float) -> RigidParams:
        return RigidParams([theta / self.half_width, 0.0], 0.0)

    def theta_of(self, params: RigidParams) -> float:
        return float(params.translation[0] * self.half_width)

    def problem(self, grid, anneal, weights, static_band_weights=None) -> TrackingProblem:
        return TrackingProblem(self.scene, self.target, self.field, grid, anneal, weights,
                               self.cutoff, static_band_weights, self.true_params)


def rigid_target(scene: Scene, field, true_params: RigidParams, cutoff):
    return render(apply_deformation(true_params, scene), field, cutoff)


def morph_for(scene: Scene, cfg) -> MorphField:
    count = min(cfg.num_control_points, len(scene))
    return MorphField.create(scene, count, seed=cfg.shift_seed)
