"""First-order optimizers and the two-phase tracking loop."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .deform import Params
from .grid import ShapeError
from .objective import TrackingProblem, total_loss



class TrackingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimConfig:
    method: str = "adam"
    lr_init: float = 1e-3
    lr_final: float = 5e-4
    total_iters: int = 1500
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.method!r}")
        if not (0 < self.lr_final <= self.lr_init):
            raise ValueError("need 0 < lr_final <= lr_init")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.total_iters < 1:
            raise ValueError("total_iters must be >= 1")


def lr_at(config: OptimConfig, t: int) -> float:
    """Log-linear interpolation from ``lr_init`` at t=0 to ``lr_final`` at t=T-1."""
    last = config.total_iters - 1
    if t <= 0 or last <= 0:
        return config.lr_init
    if t >= last:
        return config.lr_final
    s = t / last
    return math.exp((1.0 - s) * math.log(config.lr_init) + s * math.log(config.lr_final))


def gd_step(params, grad, lr: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ShapeError(f"params {params.shape} and grad {grad.shape} differ")
    return params - lr * grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grad, state: AdamState, config: OptimConfig, lr: Optional[float] = None):
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or state.m.shape != params.shape or state.v.shape != params.shape:
        raise ShapeError("Adam state, params and grad must share one shape")
    lr = config.lr_init if lr is None else lr
    step = state.step + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = m / (1.0 - config.beta1 ** step)
    v_hat = v / (1.0 - config.beta2 ** step)
    new = params - lr * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return new, AdamState(m, v, step)


@dataclass
class Record:
    t: int
    phase: str
    total: float
    image_term: float
    arap_term: float
    param_error_norm: float
    alpha: float
    params: np.ndarray


@dataclass
class Trajectory:
    records: List[Record] = field(default_factory=list)
    final_params: Optional[Params] = None
    final_error: float = float("nan")

    CSV_HEADER = ["t", "phase", "total", "image_term", "arap_term", "param_error_norm", "alpha"]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_HEADER)
            for r in self.records:
                w.writerow([r.t, r.phase] + [f"{v:.17g}" for v in
                           (r.total, r.image_term, r.arap_term, r.param_error_norm, r.alpha)])


def run_tracking(problem: TrackingProblem, init_params: Params, optim: OptimConfig,
                 callback=None) -> Trajectory:
    """Iterate ``total_loss`` plus one optimizer step for ``optim.total_iters`` iterations.

    ``callback(t, params)`` is invoked before each step (used for frame dumps).
    """
    if problem.weights.add_pixel_loss > optim.total_iters:
        raise ValueError("add_pixel_loss must not exceed total_iters")
    params = init_params
    vec = params.to_vector()
    state = AdamState.zeros(vec.size)
    traj = Trajectory()
    for t in range(optim.total_iters):
        if callback is not None:
            callback(t, params)
        report, grad = total_loss(t, params, problem)
        if not np.isfinite(report.total):
            term = "image_term" if not np.isfinite(report.image_term) else "arap_term"
            raise TrackingDivergedError(f"non-finite loss at iteration {t} ({term})")
        if not np.all(np.isfinite(grad)):
            raise TrackingDivergedError(f"non-finite gradient at iteration {t}")
        traj.records.append(Record(t, report.phase, report.total, report.image_term,
                                   report.arap_term, problem.displacement_error(params),
                                   report.alpha, vec.copy()))
        lr = lr_at(optim, t)
        if optim.method == "gd":
            vec = gd_step(vec, grad, lr)
        else:
            vec, state = adam_step(vec, grad, state, optim, lr)
        params = params.with_vector(vec)
    traj.final_params = params
    traj.final_error = problem.displacement_error(params)
    return traj


def save_checkpoint(path: Union[str, Path], params, state: Optional[AdamState] = None) -> None:
    params = np.asarray(params, dtype=np.float64)
    state = state or AdamState.zeros(params.size)
    lines = [f"# step {state.step}", "# param m v"]
    for p, m, v in zip(params, state.m, state.v):
        lines.append(f"{p:.17g} {m:.17g} {v:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: Union[str, Path]):
    step = 0
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# step"):
            step = int(line.split()[2])
        elif line.strip() and not line.startswith("#"):
            rows.append([float(v) for v in line.split()])
    arr = np.array(rows).reshape(-1, 3)
    return arr[:, 0].copy(), AdamState(arr[:, 1].copy(), arr[:, 2].copy(), step)
