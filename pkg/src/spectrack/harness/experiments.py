"""Experiment recipes: 1D pulse alignment, 2D rigid demo, landscapes, shift sweeps."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from ..anneal import AnnealConfig, write_schedule_csv, state_at
from ..deform import MorphField, RigidParams, apply_deformation, save_morph_table
from ..grid import Image, make_coordinate_field, mse, psnr, write_pnm
from ..objective import SPECTRAL, LossWeights, TrackingProblem, spectral_image_loss, total_loss
from ..optim import OptimConfig, Trajectory, run_tracking
from ..spectral import FrequencyGrid, build_frequency_grid, max_active_omega_norm
from ..splat import render, save_scene
from .config import ExperimentConfig
from .scenes import Pulse1D, anneal_config, desk_scene, loss_weights, morph_for, scene_from_config
from .svg import emit_svg_plot

PathLike = Union[str, Path]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: PathLike, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _outdir(out: Optional[PathLike]) -> Optional[Path]:
    if out is None:
        return None
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def optim_config(cfg: ExperimentConfig, iterations: Optional[int] = None) -> OptimConfig:
    return OptimConfig(cfg.optimizer, cfg.deform_lr_init, cfg.deform_lr_final,
                       cfg.iterations if iterations is None else iterations, seed=cfg.shift_seed)


def phase_wrap_products(traj: Trajectory, problem: TrackingProblem) -> np.ndarray:
    """``max ||omega_active|| * ||d_t||`` for every spectral-phase record."""
    out = []
    for r in traj.records:
        if r.phase != SPECTRAL:
            continue
        _, bw = problem.band_weights_at(r.t)
        out.append(max_active_omega_norm(problem.grid, bw) * r.param_error_norm)
    return np.array(out)


# --- loss landscapes ---------------------------------------------------------

def landscape_1d(loss: Callable[[float], float], theta_range, samples: int):
    """Evaluate ``loss`` at ``samples`` uniformly spaced values covering ``theta_range``.

    Returns:
        ``(thetas, values)`` arrays.
    """
    lo, hi = float(theta_range[0]), float(theta_range[1])
    if not hi > lo:
        raise ValueError(f"empty theta range [{lo}, {hi}]")
    if samples < 2:
        raise ValueError("need at least 2 samples")
    thetas = np.linspace(lo, hi, samples)
    return thetas, np.array([float(loss(float(t))) for t in thetas])


def write_landscape_csv(path: PathLike, thetas, values) -> None:
    write_csv(path, ["theta", "loss"], zip(thetas, values))


def local_minima(values: np.ndarray) -> np.ndarray:
    """Indices of interior samples strictly below both neighbors."""
    v = np.asarray(values)
    return np.flatnonzero((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])) + 1


# --- 1D pulse ------------------------------------------------------------------

def _pulse_runs(cfg: ExperimentConfig, pulse: Pulse1D):
    """The four configurations as (name, problem) pairs."""
    T = cfg.iterations
    k = cfg.num_bands
    grid = build_frequency_grid(k, None, cfg.phase_scale, cfg.banding_mode, dims=1)
    static = FrequencyGrid.from_indices([(cfg.static_index, 0)], cfg.phase_scale)
    full = AnnealConfig(k, T, cfg.warmup, cfg.banding_mode)
    return [
        ("spatial_l2", pulse.problem(grid, anneal_config(cfg), loss_weights(cfg, 0, lambda_bce=0.0))),
        ("static_high", pulse.problem(static, AnnealConfig(1, T, 0.0), loss_weights(cfg, T),
                                      static_band_weights=np.ones(1))),
        ("annealed", pulse.problem(grid, full, loss_weights(cfg, T))),
        ("annealed_pixel", pulse.problem(grid, anneal_config(cfg), loss_weights(cfg))),
    ]


def pulse_landscapes(cfg: ExperimentConfig, pulse: Optional[Pulse1D] = None) -> Dict[str, tuple]:
    """Sampled losses over theta for the four qualitative regimes."""
    pulse = pulse or Pulse1D(cfg)
    runs = dict(_pulse_runs(cfg, pulse))
    rng_ = (cfg.landscape_min, cfg.landscape_max)

    def rendered(theta):
        return render(apply_deformation(pulse.params(theta), pulse.scene), pulse.field, pulse.cutoff)

    def spectral(problem, bw):
        def f(theta):
            return spectral_image_loss(rendered(theta), pulse.target, problem.grid, pulse.field, bw,
                                       problem.weights.lambda_spec_mask, problem.weights.spectral_metric,
                                       basis=problem.basis, gt_moments=problem.gt_moments).value
        return f

    ann = runs["annealed"]
    k = ann.anneal.num_bands
    return {
        "spatial_l2": landscape_1d(lambda th: mse(rendered(th), pulse.target), rng_, cfg.landscape_samples),
        "static_high": landscape_1d(spectral(runs["static_high"], np.ones(1)), rng_, cfg.landscape_samples),
        "annealed_start": landscape_1d(spectral(ann, state_at(ann.anneal, 0).band_weights), rng_,
                                       cfg.landscape_samples),
        "annealed_end": landscape_1d(spectral(ann, np.ones(k)), rng_, cfg.landscape_samples),
    }


def run_landscapes(cfg: ExperimentConfig, out: Optional[PathLike] = None) -> Dict[str, tuple]:
    out = _outdir(out)
    scapes = pulse_landscapes(cfg)
    if out is not None:
        for name, (th, v) in scapes.items():
            write_landscape_csv(out / f"landscape_{name}.csv", th, v)
        emit_svg_plot({n: (th, v / v.max() if v.max() > 0 else v) for n, (th, v) in scapes.items()},
                      "theta", "loss / max", out / "landscapes.svg", title="1D loss landscapes",
                      vlines=[0.0, cfg.theta0])
    return scapes


def demo_1d(cfg: ExperimentConfig, out: Optional[PathLike] = None) -> Dict[str, dict]:
    """Align a displaced 1D pulse under four loss configurations.

    Returns:
        Per-configuration summary: initial gradient norm, final theta and
        error, final gradient norm, max phase-wrap product, trajectory.
    """
    out = _outdir(out)
    pulse = Pulse1D(cfg)
    init = pulse.params(cfg.theta0)
    optim = optim_config(cfg)
    summary: Dict[str, dict] = {}
    for name, problem in _pulse_runs(cfg, pulse):
        start = time.perf_counter()
        _, g0 = total_loss(0, init, problem)
        traj = run_tracking(problem, init, optim)
        elapsed = time.perf_counter() - start
        _, g_end = total_loss(cfg.iterations - 1, traj.final_params, problem)
        theta = pulse.theta_of(traj.final_params)
        products = phase_wrap_products(traj, problem) if problem.static_band_weights is None else np.array([])
        summary[name] = dict(
            initial_grad_norm=float(np.linalg.norm(g0)),
            final_theta=theta,
            final_error=abs(theta - pulse.theta_of(pulse.true_params)),
            final_grad_norm=float(np.linalg.norm(g_end)),
            max_phase_product=float(products.max()) if products.size else float("nan"),
            trajectory=traj,
            runtime_s=elapsed,   # wall time; kept out of the CSVs so outputs stay byte-identical
        )
        if out is not None:
            traj.to_csv(out / f"trajectory_{name}.csv")

    scapes = pulse_landscapes(cfg, pulse)
    if out is not None:
        write_csv(out / "demo1d_summary.csv",
                  ["config", "initial_grad_norm", "final_theta", "final_error", "final_grad_norm",
                   "max_phase_product"],
                  [[n, s["initial_grad_norm"], s["final_theta"], s["final_error"], s["final_grad_norm"],
                    s["max_phase_product"]] for n, s in summary.items()])
        for name, (th, v) in scapes.items():
            write_landscape_csv(out / f"landscape_{name}.csv", th, v)
        series = {}
        for name, s in summary.items():
            tr = s["trajectory"]
            series[name] = (tr.column("t"), tr.column("param_error_norm") * pulse.half_width)
        emit_svg_plot(series, "iteration", "|theta - theta*|", out / "demo1d_convergence.svg",
                      title="1D pulse alignment", logy=True)
        emit_svg_plot({n: (th, v / v.max() if v.max() > 0 else v) for n, (th, v) in scapes.items()},
                      "theta", "loss / max", out / "demo1d_landscapes.svg", title="1D loss landscapes",
                      vlines=[0.0, cfg.theta0])
    return summary


# --- 2D rigid demo -------------------------------------------------------------

def overlap_pixels(a: Image, b: Image) -> int:
    """Pixels where both opacity maps are nonzero."""
    return int(np.count_nonzero((a.opacity > 0.0) & (b.opacity > 0.0)))


def rigid_errors(params: RigidParams, true: RigidParams, width: int):
    """Translation error in pixels and wrapped rotation error in degrees."""
    t_err = float(np.linalg.norm(params.translation - true.translation)) * width / 2.0
    dr = (params.rotation - true.rotation + math.pi) % (2.0 * math.pi) - math.pi
    return t_err, abs(math.degrees(dr))


def _composite(rend: Image, target: Image) -> np.ndarray:
    a = rend.intensity if rend.intensity.ndim == 2 else rend.intensity.mean(axis=2)
    b = target.intensity if target.intensity.ndim == 2 else target.intensity.mean(axis=2)
    return np.stack([a, b, np.zeros_like(a)], axis=2)


def schedule_plot(cfg: ExperimentConfig, out: Optional[PathLike] = None):
    """Band weights ``w_k(t)`` over the spectral phase."""
    out = _outdir(out)
    anneal = anneal_config(cfg)
    grid = build_frequency_grid(cfg.num_bands, None, cfg.phase_scale, cfg.banding_mode)
    n = max(2, cfg.schedule_samples)
    ts = np.linspace(0.0, anneal.total_spectral_iters, n)
    weights = np.array([state_at(anneal, t).band_weights for t in ts])
    if out is not None:
        write_schedule_csv(anneal, grid, anneal.total_spectral_iters, out / "schedule.csv")
        emit_svg_plot({f"w_{k}": (ts, weights[:, k]) for k in range(cfg.num_bands)},
                      "iteration", "band weight", out / "schedule.svg",
                      title="frequency annealing schedule", vlines=[anneal.warmup_end])
    return ts, weights


def demo_2d(cfg: ExperimentConfig, out: Optional[PathLike] = None, init: Optional[RigidParams] = None):
    """Recover a translated and rotated pattern with pixel and spectral supervision."""
    out = _outdir(out)
    scene = scene_from_config(cfg)
    field = make_coordinate_field(cfg.grid_size, cfg.grid_size)
    true = RigidParams([cfg.true_translation_x, cfg.true_translation_y], math.radians(cfg.true_rotation_deg))
    target = render(apply_deformation(true, scene), field, cfg.cutoff)
    if init is None:
        init = RigidParams([cfg.init_translation_x, cfg.init_translation_y], 0.0)
    grid = build_frequency_grid(cfg.num_bands, None, cfg.phase_scale, cfg.banding_mode)
    optim = optim_config(cfg)
    init_render = render(apply_deformation(init, scene), field, cfg.cutoff)
    t0_err, r0_err = rigid_errors(init, true, cfg.grid_size)
    steps = set(cfg.frame_steps)
    if out is not None:
        (out / "frames").mkdir(exist_ok=True)
        save_scene(scene, out / "scene.txt")

    summary = {}
    for method, add_pixel in (("pixel", 0), ("spectral", cfg.add_pixel_loss)):
        problem = TrackingProblem(scene, target, field, grid, anneal_config(cfg),
                                  loss_weights(cfg, add_pixel), cfg.cutoff, true_params=true)

        def dump(t, params, method=method):
            if out is not None and t in steps:
                rend = render(apply_deformation(params, scene), field, cfg.cutoff)
                write_pnm(out / "frames" / f"{method}_t{t:05d}.ppm", _composite(rend, target))

        start = time.perf_counter()
        traj = run_tracking(problem, init, optim, callback=dump)
        elapsed = time.perf_counter() - start
        t_err, r_err = rigid_errors(traj.final_params, true, cfg.grid_size)
        per_step = [rigid_errors(RigidParams(r.params[:2], r.params[2]), true, cfg.grid_size)[0]
                    for r in traj.records]
        summary[method] = dict(initial_translation_error_px=t0_err, initial_rotation_error_deg=r0_err,
                               final_translation_error_px=t_err, final_rotation_error_deg=r_err,
                               translation_error_px=np.array(per_step), trajectory=traj, runtime_s=elapsed)
        if out is not None:
            traj.to_csv(out / f"trajectory_{method}.csv")
    summary["initial_overlap_pixels"] = overlap_pixels(init_render, target)

    if out is not None:
        write_csv(out / "demo2d_summary.csv",
                  ["method", "initial_translation_error_px", "initial_rotation_error_deg",
                   "final_translation_error_px", "final_rotation_error_deg", "initial_overlap_pixels"],
                  [[m, summary[m]["initial_translation_error_px"], summary[m]["initial_rotation_error_deg"],
                    summary[m]["final_translation_error_px"], summary[m]["final_rotation_error_deg"],
                    summary["initial_overlap_pixels"]] for m in ("pixel", "spectral")])
        emit_svg_plot({m: (np.arange(len(summary[m]["translation_error_px"])),
                           summary[m]["translation_error_px"]) for m in ("pixel", "spectral")},
                      "iteration", "translation error (px)", out / "demo2d_convergence.svg",
                      title="2D rigid tracking", vlines=[cfg.add_pixel_loss])
        schedule_plot(cfg, out)
    return summary


# --- shift sweep -------------------------------------------------------------

def sweep_directions(radii: Sequence[float], seed: int) -> np.ndarray:
    """One seeded uniform unit vector per radius, drawn in radius order."""
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0.0, 2.0 * math.pi, len(radii))
    return np.column_stack([np.cos(ang), np.sin(ang)])


def _sweep_cell(args):
    cfg, radius, direction, method, out = args
    scene = scene_from_config(cfg)
    field = make_coordinate_field(cfg.grid_size, cfg.grid_size)
    target = render(scene, field, cfg.cutoff)
    d = radius * np.asarray(direction)
    if cfg.parameterization == "rigid":
        true = RigidParams.identity()
        init = RigidParams(d, 0.0)
    else:
        true = morph_for(scene, cfg)
        m = true.num_control_points
        init = true.with_vector(np.column_stack([np.tile(d, (m, 1)), np.zeros(m)]).reshape(-1))
    add_pixel = 0 if method == "pixel" else cfg.add_pixel_loss
    grid = build_frequency_grid(cfg.num_bands, None, cfg.phase_scale, cfg.banding_mode)
    problem = TrackingProblem(scene, target, field, grid, anneal_config(cfg),
                              loss_weights(cfg, add_pixel), cfg.cutoff, true_params=true)
    overlap = overlap_pixels(render(apply_deformation(init, scene), field, cfg.cutoff), target)
    traj = run_tracking(problem, init, optim_config(cfg))
    final = render(apply_deformation(traj.final_params, scene), field, cfg.cutoff)
    if out is not None and isinstance(traj.final_params, MorphField):
        save_morph_table(traj.final_params, Path(out) / f"morph_r{radius:.3f}_{method}.txt")
    return dict(radius=float(radius), method=method, final_psnr=psnr(final, target),
                final_param_error=traj.final_error, initial_param_error=problem.displacement_error(init),
                initial_overlap=overlap, seed=cfg.shift_seed)


def sweep_shift(cfg: ExperimentConfig, radii: Optional[Sequence[float]] = None,
                out: Optional[PathLike] = None, threads: int = 1) -> List[dict]:
    """Track from seeded random-direction shifts of increasing radius with both methods."""
    radii = list(cfg.radii if radii is None else radii)
    if any(r < 0 for r in radii):
        raise ValueError("radii must be non-negative")
    out = _outdir(out)
    dirs = sweep_directions(radii, cfg.shift_seed)
    cells = [(cfg, r, dirs[i], m, out) for i, r in enumerate(radii) for m in ("pixel", "ours")]
    if threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    if out is not None:
        write_csv(out / "sweep.csv", ["radius", "method", "final_psnr", "final_param_error", "seed"],
                  [[r["radius"], r["method"], r["final_psnr"], r["final_param_error"], r["seed"]]
                   for r in rows])
        series = {}
        for m in ("pixel", "ours"):
            sel = [r for r in rows if r["method"] == m]
            series[m] = ([r["radius"] for r in sel], [r["final_param_error"] for r in sel])
        emit_svg_plot(series, "shift radius", "final parameter error", out / "sweep.svg",
                      title=f"shift sweep (seed {cfg.shift_seed})")
    return rows


# --- geometric decay in the quadratic regime -----------------------------------

def geometric_decay_run(cfg: ExperimentConfig, d0: float = 0.02, lr: float = 2e-3, steps: int = 20):
    """Plain GD on a pure shift supervised by the single lowest nonzero frequency.

    The squared moment loss is ``lambda |M|^2 * 2 (1 - cos(omega d))``, so near
    alignment the error contracts by ``gamma = 1 - 2 lr lambda |M|^2 omega^2``.

    Returns:
        dict with per-step errors, observed ratios and the predicted gamma.
    """
    pulse = Pulse1D(cfg)
    grid = FrequencyGrid.from_indices([(1, 0)], cfg.phase_scale)
    weights = LossWeights(lambda_image=cfg.lambda_image, lambda_spec_mask=0.0, add_pixel_loss=steps + 1,
                          spectral_metric="squared")
    problem = pulse.problem(grid, AnnealConfig(1, steps + 1, 0.0), weights, static_band_weights=np.ones(1))
    traj = run_tracking(problem, RigidParams([d0, 0.0], 0.0),
                        OptimConfig("gd", lr, lr, steps + 1))
    errors = traj.column("param_error_norm")
    m2 = float(np.abs(problem.gt_moments[0][0]) ** 2)
    omega2 = float(grid.omega_norm[0] ** 2)
    gamma = 1.0 - 2.0 * lr * cfg.lambda_image * m2 * omega2
    return dict(errors=errors, ratios=errors[1:] / errors[:-1], gamma=gamma)
