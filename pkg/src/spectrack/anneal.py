"""Frequency annealing schedule.

The bandwidth ``alpha(t)`` is held at 1 during warm-up (only band 0 active),
then ramps linearly to ``K`` at the end of the spectral phase. Band ``k``
fades in with the raised-cosine weight ``(1 - cos(pi * clamp(alpha - k, 0, 1))) / 2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .spectral import LINEAR, LOG, FrequencyGrid, max_active_omega_norm


@dataclass(frozen=True)
class AnnealConfig:
    num_bands: int = 8
    total_spectral_iters: int = 7000
    warmup_frac: float = 0.25
    mode: str = LINEAR

    def __post_init__(self):
        if self.num_bands < 1:
            raise ValueError("num_bands must be >= 1")
        if self.total_spectral_iters < 1:
            raise ValueError("total_spectral_iters must be >= 1")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError("warmup_frac must lie in [0, 1)")
        if self.mode not in (LINEAR, LOG):
            raise ValueError(f"unknown banding mode {self.mode!r}")

    @property
    def warmup_end(self) -> float:
        return self.warmup_frac * self.total_spectral_iters


@dataclass(frozen=True)
class AnnealState:
    alpha: float
    band_weights: np.ndarray


def alpha_at(config: AnnealConfig, t: float) -> float:
    if t < 0:
        raise ValueError("iteration index must be non-negative")
    k = float(config.num_bands)
    start, end = config.warmup_end, float(config.total_spectral_iters)
    if t < start:
        return 1.0
    if t >= end:
        return k
    return 1.0 + (k - 1.0) * (t - start) / (end - start)


def band_weight(alpha: float, k: int) -> float:
    x = min(max(alpha - k, 0.0), 1.0)
    return (1.0 - math.cos(math.pi * x)) / 2.0


def band_weights(alpha: float, num_bands: int) -> np.ndarray:
    return np.array([band_weight(alpha, k) for k in range(num_bands)])


def state_at(config: AnnealConfig, t: float) -> AnnealState:
    a = alpha_at(config, t)
    return AnnealState(a, band_weights(a, config.num_bands))


def max_safe_frequency(displacement_norm: float) -> float:
    """Largest ``||omega||`` that keeps the phase ``omega . d`` below pi; inf when aligned."""
    if displacement_norm < 0:
        raise ValueError("displacement norm must be non-negative")
    if displacement_norm == 0.0:
        return math.inf
    return math.pi / displacement_norm


def predicted_index_schedule(gamma: float, t: float) -> float:
    """Frequency index reachable at step ``t`` when the error contracts by ``gamma`` per step."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    return t * math.log(1.0 / gamma) / math.log(2.0)


def write_schedule_csv(config: AnnealConfig, grid: FrequencyGrid, iters: int,
                       path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "alpha"] + [f"w_{k}" for k in range(config.num_bands)] + ["max_active_omega_norm"])
        for t in range(iters):
            st = state_at(config, t)
            w.writerow([t, f"{st.alpha:.17g}"] + [f"{v:.17g}" for v in st.band_weights]
                       + [f"{max_active_omega_norm(grid, st.band_weights):.17g}"])
