"""Experiment configuration: line-based ``key = value`` files with ``#`` comments.

Hyperparameter keys reuse the usual tracking vocabulary (``add_pixel_loss``,
``num_bands``, ``warmup``, ``lambda_*``, ``deform_lr_*``); the rest are
artifact-specific. Every key has a default, and unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, Union


class ConfigError(ValueError):
    pass


EXPERIMENTS = ("demo1d", "demo2d", "landscape", "sweep", "gradcheck", "schedule-plot")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "demo2d"
    preset: str = "desk"
    # scene
    grid_size: int = 64
    num_gaussians: int = 12
    scene_scale: float = 1.0
    scene_file: str = ""
    cutoff: float = 4.0
    # schedule and losses
    iterations: int = 1500
    add_pixel_loss: int = 1050
    num_bands: int = 8
    warmup: float = 0.25
    banding_mode: str = "linear-frequency"
    phase_scale: float = 0.5 * math.pi
    spectral_metric: str = "squared"
    lambda_image: float = 5000.0
    lambda_arap: float = 1.0
    lambda_spec_mask: float = 0.3
    lambda_bce: float = 0.1
    arap_start_iter: int = 150
    # optimizer
    optimizer: str = "adam"
    deform_lr_init: float = 5e-3
    deform_lr_final: float = 5e-4
    # deformation
    parameterization: str = "rigid"
    num_control_points: int = 16
    # 2D demo
    init_translation_x: float = 0.5
    init_translation_y: float = 0.5
    true_translation_x: float = -0.45
    true_translation_y: float = -0.45
    true_rotation_deg: float = 45.0
    frame_steps: Tuple[int, ...] = (0, 250, 500, 1000, 1499)
    # sweep
    shift_radius: float = 0.0
    shift_seed: int = 0
    radii: Tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8)
    # 1D pulse
    width_1d: int = 320
    domain_half_width: float = 10.0
    pulse_sigma: float = 0.5
    theta0: float = 6.0
    static_index: int = 32
    landscape_samples: int = 601
    landscape_min: float = -8.0
    landscape_max: float = 8.0
    # gradient check
    gradcheck_instances: int = 100
    gradcheck_size: int = 12
    # schedule plot
    schedule_samples: int = 200

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.grid_size < 1 or self.width_1d < 1:
            raise ConfigError("grid sizes must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0 <= self.add_pixel_loss <= self.iterations:
            raise ConfigError("add_pixel_loss must lie in [0, iterations]")
        if self.shift_radius < 0 or any(r < 0 for r in self.radii):
            raise ConfigError("radii must be non-negative")
        if self.parameterization not in ("rigid", "morph"):
            raise ConfigError(f"unknown parameterization {self.parameterization!r}")
        if self.landscape_samples < 2:
            raise ConfigError("landscape_samples must be >= 2")


# per-experiment overrides of the base defaults
EXPERIMENT_DEFAULTS: Dict[str, Dict[str, object]] = {
    "demo1d": dict(deform_lr_init=1e-3, deform_lr_final=5e-4, add_pixel_loss=1050),
    "sweep": dict(parameterization="morph", num_gaussians=24, scene_scale=0.6, arap_start_iter=0),
}

PRESETS: Dict[str, Dict[str, object]] = {
    "desk": {},
    "paper": dict(iterations=10000, add_pixel_loss=7000, arap_start_iter=1000,
                  num_control_points=800, num_gaussians=1024,
                  deform_lr_init=1e-3, deform_lr_final=5e-4),
}

_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s for s in raw.replace(",", " ").split() if s]
            cast = type(default[0]) if default else float
            return tuple(cast(s) for s in items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse ``key = value`` lines into typed values; does not apply defaults."""
    base = ExperimentConfig()
    out: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _convert(key, raw, getattr(base, key))
    return out


def make_config(experiment: str, overrides: Optional[Dict[str, object]] = None,
                path: Union[str, Path, None] = None, seed: Optional[int] = None) -> ExperimentConfig:
    """Resolve defaults, preset, experiment defaults, file values and the seed, in that order."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    values: Dict[str, object] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    if overrides:
        for k in overrides:
            if k not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {k!r}")
        values.update(overrides)
    preset = str(values.get("preset", "desk"))
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    merged: Dict[str, object] = {}
    merged.update(EXPERIMENT_DEFAULTS.get(experiment, {}))
    merged.update(PRESETS[preset])
    merged.update(values)
    merged["experiment"] = experiment
    if seed is not None:
        merged["shift_seed"] = int(seed)
    return replace(ExperimentConfig(), **merged)


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        elif isinstance(v, float):
            v = f"{v:.17g}"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
