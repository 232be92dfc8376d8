"""Finite-difference batteries for every analytic gradient in the pipeline.

Each battery draws random instances, compares the analytic gradient with
central differences, and reports the worst relative error. The kernel
cutoff is disabled so every function is smooth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..anneal import AnnealConfig
from ..deform import MorphField, RigidParams, apply_deformation, deformation_backward, rotation_matrix
from ..grid import Image, make_coordinate_field
from ..objective import LossWeights, TrackingProblem, pixel_image_loss, spectral_image_loss, total_loss
from ..spectral import SpectralBasis, build_frequency_grid
from ..splat import Scene, render, render_backward
from .config import ExperimentConfig
from .experiments import write_csv

Battery = Callable[[np.random.Generator, ExperimentConfig, float], float]


def relative_error(analytic, numeric) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish or the vectors are empty."""
    a = np.atleast_1d(np.asarray(analytic, dtype=np.float64))
    n = np.atleast_1d(np.asarray(numeric, dtype=np.float64))
    if a.size == 0:
        return 0.0
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-300:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def central_difference(f: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def random_scene(rng: np.random.Generator, n: int, channels: int = 1) -> Scene:
    means = rng.uniform(-0.6, 0.6, (n, 2))
    covs = np.empty((n, 2, 2))
    for i in range(n):
        s = rng.uniform(0.12, 0.35, 2)
        r = rotation_matrix(rng.uniform(0.0, np.pi))
        c = r @ np.diag(s * s) @ r.T
        covs[i] = 0.5 * (c + c.T)
    return Scene(means, covs, rng.uniform(0.2, 1.0, (n, channels)), rng.uniform(0.2, 0.95, n))


# scene <-> flat vector: means, amplitudes, opacities, (cxx, cxy, cyy)

def _scene_vector(s: Scene) -> np.ndarray:
    c = s.covariances
    return np.concatenate([s.means.ravel(), s.amplitudes.ravel(), s.opacities,
                           np.column_stack([c[:, 0, 0], c[:, 0, 1], c[:, 1, 1]]).ravel()])


def _scene_from_vector(s: Scene, v: np.ndarray) -> Scene:
    n, ch = len(s), s.channels
    o = 0
    means = v[o:o + 2 * n].reshape(n, 2); o += 2 * n
    amps = v[o:o + n * ch].reshape(n, ch); o += n * ch
    opac = v[o:o + n]; o += n
    p = v[o:o + 3 * n].reshape(n, 3)
    covs = np.stack([np.column_stack([p[:, 0], p[:, 1]]), np.column_stack([p[:, 1], p[:, 2]])], axis=1)
    return Scene(means, covs, amps, opac, validate=False)


def check_splat(rng, cfg, corrupt=0.0) -> float:
    n = int(rng.integers(1, 5))
    ch = 3 if rng.random() < 0.3 else 1
    scene = random_scene(rng, n, ch)
    size = cfg.gradcheck_size
    fld = make_coordinate_field(size, size - 2)
    shape = (fld.height, fld.width) + ((ch,) if ch > 1 else ())
    a_int = rng.normal(size=shape)
    a_op = rng.normal(size=(fld.height, fld.width))

    def f(v):
        img = render(_scene_from_vector(scene, v), fld, None)
        return float(np.sum(a_int * img.intensity) + np.sum(a_op * img.opacity))

    g = render_backward(scene, fld, a_int, a_op, None)
    c = g.covariance
    # symmetric off-diagonal perturbation moves both entries
    analytic = np.concatenate([g.mean.ravel(), g.amplitude.ravel(), g.opacity,
                               np.column_stack([c[:, 0, 0], c[:, 0, 1] + c[:, 1, 0], c[:, 1, 1]]).ravel()])
    analytic = analytic * (1.0 + corrupt)
    return relative_error(analytic, central_difference(f, _scene_vector(scene)))


def random_params(rng, scene: Scene, morph: bool):
    if not morph:
        return RigidParams(rng.uniform(-0.3, 0.3, 2), rng.uniform(-0.8, 0.8))
    m = int(rng.integers(2, min(4, len(scene)) + 1))
    fieldp = MorphField.create(scene, m, seed=int(rng.integers(1 << 30)))
    return fieldp.with_vector(rng.uniform(-0.2, 0.2, 3 * m))


def check_deform(rng, cfg, corrupt=0.0) -> float:
    scene = random_scene(rng, int(rng.integers(3, 9)))
    params = random_params(rng, scene, bool(rng.integers(2)))
    g_mean = rng.normal(size=(len(scene), 2))
    h = rng.normal(size=(len(scene), 2, 2))
    g_cov = 0.5 * (h + h.transpose(0, 2, 1))

    def f(v):
        d = apply_deformation(params.with_vector(v), scene)
        return float(np.sum(g_mean * d.means) + np.sum(g_cov * d.covariances))

    analytic = deformation_backward(params, scene, g_mean, g_cov) * (1.0 + corrupt)
    return relative_error(analytic, central_difference(f, params.to_vector()))


def _random_image(rng, fld, ch=1) -> Image:
    shape = (fld.height, fld.width) + ((ch,) if ch > 1 else ())
    return Image(rng.uniform(0.0, 1.0, shape), rng.uniform(0.05, 0.95, (fld.height, fld.width)))


def _directional(loss, rend: Image, rng, h: float):
    """Analytic and numeric derivatives of ``loss`` along a random image direction."""
    res = loss(rend)
    j_int = rng.normal(size=rend.intensity.shape)
    j_op = rng.normal(size=rend.opacity.shape) * 0.01
    analytic = float(np.sum(res.d_intensity * j_int) + np.sum(res.d_opacity * j_op))
    plus = loss(Image(rend.intensity + h * j_int, rend.opacity + h * j_op)).value
    minus = loss(Image(rend.intensity - h * j_int, rend.opacity - h * j_op)).value
    return analytic, (plus - minus) / (2.0 * h)


def check_spectral(rng, cfg, corrupt=0.0) -> float:
    size = cfg.gradcheck_size
    fld = make_coordinate_field(size, size + 1)
    grid = build_frequency_grid(3, None, cfg.phase_scale, cfg.banding_mode)
    basis = SpectralBasis(grid, fld)
    rend, gt = _random_image(rng, fld), _random_image(rng, fld)
    weights = rng.uniform(0.0, 1.0, grid.num_bands)
    metric = "l1" if rng.random() < 0.5 else "squared"

    def loss(img):
        return spectral_image_loss(img, gt, grid, fld, weights, 0.3, metric, basis=basis)

    # the l1 metric is piecewise linear, so a tiny step avoids crossing a kink
    a, n = _directional(loss, rend, rng, 1e-7 if metric == "l1" else 1e-4)
    a *= 1.0 + corrupt
    # moment adjoint is the exact transpose of projection
    w = rng.normal(size=len(grid)) + 1j * rng.normal(size=len(grid))
    j = rng.normal(size=(fld.height, fld.width))
    lhs = float(np.sum(basis.adjoint(w) * j))
    rhs = float(np.real(np.sum(w * basis.project(j))))
    return max(relative_error(a, n), relative_error(lhs, rhs))


def check_pixel(rng, cfg, corrupt=0.0) -> float:
    size = cfg.gradcheck_size
    fld = make_coordinate_field(size, size)
    ch = 3 if rng.random() < 0.3 else 1
    rend, gt = _random_image(rng, fld, ch), _random_image(rng, fld, ch)
    lam = float(rng.uniform(0.0, 0.5))
    a, n = _directional(lambda img: pixel_image_loss(img, gt, lam), rend, rng, 1e-6)
    return relative_error(a * (1.0 + corrupt), n)


def check_objective(rng, cfg, corrupt=0.0) -> float:
    size = cfg.gradcheck_size + 4
    fld = make_coordinate_field(size, size)
    scene = random_scene(rng, int(rng.integers(2, 6)))
    morph = bool(rng.integers(2))
    true = random_params(rng, scene, morph)
    params = true.with_vector(true.to_vector() + rng.uniform(-0.1, 0.1, true.to_vector().size))
    target = render(apply_deformation(true, scene), fld, None)
    grid = build_frequency_grid(4, None, cfg.phase_scale, cfg.banding_mode)
    weights = LossWeights(cfg.lambda_image, cfg.lambda_arap, cfg.lambda_spec_mask, cfg.lambda_bce,
                          add_pixel_loss=10, arap_start_iter=0, spectral_metric="squared")
    problem = TrackingProblem(scene, target, fld, grid, AnnealConfig(4, 10, 0.25), weights, None)
    t = int(rng.choice([0, 6, 10]))
    _, g = total_loss(t, params, problem)

    def f(v):
        return total_loss(t, params.with_vector(v), problem)[0].total

    return relative_error(g * (1.0 + corrupt), central_difference(f, params.to_vector()))


BATTERIES: Dict[str, Tuple[Battery, float]] = {
    "splat": (check_splat, 1e-5),
    "deform": (check_deform, 1e-6),
    "spectral": (check_spectral, 1e-6),
    "pixel": (check_pixel, 1e-6),
    "objective": (check_objective, 1e-4),
}


@dataclass
class GradCheckReport:
    errors: Dict[str, float] = field(default_factory=dict)
    tolerances: Dict[str, float] = field(default_factory=dict)
    instances: int = 0

    @property
    def failures(self) -> List[str]:
        return [k for k, e in self.errors.items() if not e < self.tolerances[k]]

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_csv(self, path) -> None:
        write_csv(path, ["component", "max_relative_error", "tolerance", "instances", "status"],
                  [[k, self.errors[k], self.tolerances[k], self.instances,
                    "pass" if k not in self.failures else "fail"] for k in self.errors])


def grad_check(cfg: ExperimentConfig, components: Optional[Iterable[str]] = None,
               corrupt: Optional[Dict[str, float]] = None, out=None) -> GradCheckReport:
    """Run the batteries; ``corrupt`` scales chosen analytic gradients by ``1 + eps`` (negative control)."""
    names = list(BATTERIES) if components is None else list(components)
    corrupt = corrupt or {}
    report = GradCheckReport(instances=cfg.gradcheck_instances)
    for name in names:
        if name not in BATTERIES:
            raise ValueError(f"unknown gradient battery {name!r}")
        fn, tol = BATTERIES[name]
        rng = np.random.default_rng([cfg.shift_seed, list(BATTERIES).index(name)])
        worst = 0.0
        for _ in range(cfg.gradcheck_instances):
            worst = max(worst, fn(rng, cfg, corrupt.get(name, 0.0)))
        report.errors[name] = worst
        report.tolerances[name] = tol
    if out is not None:
        report.to_csv(out)
    return report
