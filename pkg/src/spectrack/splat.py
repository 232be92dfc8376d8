"""Differentiable additive renderer for 2D Gaussian splats.

Intensity is ``sum_i amplitude_i * opacity_i * g_i(p)`` and the opacity map
is ``1 - exp(-sum_i opacity_i * g_i(p))``. Kernels are truncated at a
Mahalanobis radius (4.0 by default), which gives primitives compact support
and therefore exactly zero gradients when they are disjoint from the
supervision.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from . import backend
from .grid import CoordinateField, Image, ShapeError

DEFAULT_CUTOFF = 4.0


class InvalidPrimitiveError(ValueError):
    pass


def _check_cov(cov: np.ndarray) -> None:
    if cov.shape != (2, 2) or not np.all(np.isfinite(cov)):
        raise InvalidPrimitiveError(f"covariance must be a finite 2x2 matrix, got {cov!r}")
    if cov[0, 1] != cov[1, 0]:
        raise InvalidPrimitiveError("covariance must be symmetric")
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if not (det > 0.0 and cov[0, 0] + cov[1, 1] > 0.0):
        raise InvalidPrimitiveError("covariance must be positive definite")


@dataclass(frozen=True)
class Gaussian2D:
    mean: np.ndarray
    covariance: np.ndarray
    amplitude: Union[float, np.ndarray] = 1.0
    opacity: float = 1.0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        cov = np.asarray(self.covariance, dtype=np.float64)
        _check_cov(cov)
        if not 0.0 < self.opacity <= 1.0:
            raise InvalidPrimitiveError(f"opacity must lie in (0, 1], got {self.opacity}")
        amp = np.asarray(self.amplitude, dtype=np.float64)
        if np.any(amp < 0):
            raise InvalidPrimitiveError("amplitude must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "amplitude", float(amp) if amp.ndim == 0 else amp)
        object.__setattr__(self, "opacity", float(self.opacity))


class Scene:
    """Ordered collection of Gaussians, stored as parallel arrays.

    ``amplitudes`` has shape ``(N, C)`` with C = 1 (grayscale) or 3 (RGB).
    """

    def __init__(self, means, covariances, amplitudes, opacities, validate: bool = True):
        self.means = np.asarray(means, dtype=np.float64).reshape(-1, 2)
        n = self.means.shape[0]
        self.covariances = np.asarray(covariances, dtype=np.float64).reshape(n, 2, 2)
        amps = np.asarray(amplitudes, dtype=np.float64)
        self.amplitudes = amps.reshape(n, 1) if amps.ndim == 1 else amps.reshape(n, amps.shape[-1])
        self.opacities = np.asarray(opacities, dtype=np.float64).reshape(n)
        if validate:
            for cov in self.covariances:
                _check_cov(cov)
            if np.any(self.opacities <= 0.0) or np.any(self.opacities > 1.0):
                raise InvalidPrimitiveError("opacities must lie in (0, 1]")
            if np.any(self.amplitudes < 0.0):
                raise InvalidPrimitiveError("amplitudes must be non-negative")

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[Gaussian2D]) -> "Scene":
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty()
        return cls(
            [g.mean for g in gaussians],
            [g.covariance for g in gaussians],
            [np.atleast_1d(g.amplitude) for g in gaussians],
            [g.opacity for g in gaussians],
        )

    @classmethod
    def empty(cls, channels: int = 1) -> "Scene":
        return cls(np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros((0, channels)), np.zeros(0))

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def channels(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def gaussians(self) -> List[Gaussian2D]:
        return [
            Gaussian2D(self.means[i], self.covariances[i],
                       self.amplitudes[i, 0] if self.channels == 1 else self.amplitudes[i],
                       self.opacities[i])
            for i in range(len(self))
        ]

    def replace(self, means=None, covariances=None, amplitudes=None, opacities=None) -> "Scene":
        return Scene(
            self.means if means is None else means,
            self.covariances if covariances is None else covariances,
            self.amplitudes if amplitudes is None else amplitudes,
            self.opacities if opacities is None else opacities,
            validate=False,
        )

    def equals(self, other: "Scene") -> bool:
        """Bitwise equality of all primitive arrays."""
        return (
            len(self) == len(other)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.covariances, other.covariances)
            and np.array_equal(self.amplitudes, other.amplitudes)
            and np.array_equal(self.opacities, other.opacities)
        )

    def packed_inverse(self):
        """Return ``(icov, cov)`` packed as ``(a, b, c)`` rows for ``[[a, b], [b, c]]``."""
        sxx = self.covariances[:, 0, 0]
        sxy = self.covariances[:, 0, 1]
        syy = self.covariances[:, 1, 1]
        det = sxx * syy - sxy * sxy
        icov = np.ascontiguousarray(np.stack([syy / det, -sxy / det, sxx / det], axis=1))
        cov = np.ascontiguousarray(np.stack([sxx, sxy, syy], axis=1))
        return icov, cov


@dataclass
class SceneGradients:
    mean: np.ndarray        # (N, 2)
    amplitude: np.ndarray   # (N, C)
    opacity: np.ndarray     # (N,)
    covariance: np.ndarray  # (N, 2, 2), gradient w.r.t. the full symmetric matrix


def eval_kernel(g: Gaussian2D, p, cutoff: Optional[float] = DEFAULT_CUTOFF) -> float:
    """Evaluate ``exp(-q/2)`` with ``q`` the squared Mahalanobis distance of ``p`` from the mean.

    Returns exactly 0 when ``sqrt(q) > cutoff``; ``cutoff=None`` disables truncation.
    """
    _check_cov(g.covariance)
    r = np.asarray(p, dtype=np.float64) - g.mean
    q = float(r @ np.linalg.solve(g.covariance, r))
    if cutoff is not None and q > cutoff * cutoff:
        return 0.0
    return float(np.exp(-0.5 * q))


def _cutoff_arg(cutoff: Optional[float]) -> float:
    if cutoff is None:
        return 0.0
    if cutoff <= 0:
        raise ValueError("cutoff must be positive or None")
    return float(cutoff)


def render_arrays(scene: Scene, field: CoordinateField, cutoff=DEFAULT_CUTOFF, kernels=None):
    """Return flat ``(intensity (P, C), density (P,))`` where opacity = 1 - exp(-density)."""
    k = kernels or backend.kernels
    icov, cov = scene.packed_inverse()
    return k.render_forward(
        field.width, field.height,
        np.ascontiguousarray(scene.means), icov,
        np.ascontiguousarray(scene.amplitudes), np.ascontiguousarray(scene.opacities),
        _cutoff_arg(cutoff), covs=cov,
    )


def _to_image(intensity: np.ndarray, density: np.ndarray, field: CoordinateField) -> Image:
    h, w = field.height, field.width
    if intensity.shape[1] == 1:
        inten = intensity.reshape(h, w)
    else:
        inten = intensity.reshape(h, w, intensity.shape[1])
    opacity = -np.expm1(-density).reshape(h, w)
    return Image(inten, opacity)


def render(scene: Scene, field: CoordinateField, cutoff=DEFAULT_CUTOFF, kernels=None) -> Image:
    intensity, density = render_arrays(scene, field, cutoff, kernels)
    return _to_image(intensity, density, field)


def render_with_density(scene: Scene, field: CoordinateField, cutoff=DEFAULT_CUTOFF, kernels=None):
    intensity, density = render_arrays(scene, field, cutoff, kernels)
    return _to_image(intensity, density, field), density


def _as_adjoint(adj, field: CoordinateField, name: str) -> np.ndarray:
    if isinstance(adj, Image):
        adj = adj.intensity
    arr = np.asarray(adj, dtype=np.float64)
    if arr.shape[:2] != (field.height, field.width):
        raise ShapeError(f"{name} shape {arr.shape} does not match field {field.height}x{field.width}")
    return np.ascontiguousarray(arr.reshape(field.num_pixels, -1))


def render_backward(scene: Scene, field: CoordinateField, adjoint_intensity, adjoint_opacity,
                    cutoff=DEFAULT_CUTOFF, density: Optional[np.ndarray] = None,
                    kernels=None) -> SceneGradients:
    """Gradients of ``<A_I, intensity> + <A_O, opacity>`` w.r.t. every primitive parameter.

    Args:
        adjoint_intensity: ``(H, W)`` or ``(H, W, C)`` array (or Image).
        adjoint_opacity: ``(H, W)`` array (or Image), may be None.
        density: forward density from ``render_with_density``; recomputed if omitted.
    """
    k = kernels or backend.kernels
    n, channels = len(scene), scene.channels
    adj_i = _as_adjoint(adjoint_intensity, field, "adjoint_intensity")
    if adj_i.shape[1] != channels:
        raise ShapeError(f"adjoint_intensity has {adj_i.shape[1]} channels, scene has {channels}")
    if adjoint_opacity is None:
        adj_d = np.zeros(field.num_pixels)
    else:
        adj_o = _as_adjoint(adjoint_opacity, field, "adjoint_opacity")[:, 0]
        if density is None:
            _, density = render_arrays(scene, field, cutoff, kernels)
        # d opacity / d density = exp(-density)
        adj_d = np.ascontiguousarray(adj_o * np.exp(-density.reshape(-1)))
    icov, cov = scene.packed_inverse()
    d_mean, d_amp, d_opac, d_cov = k.render_backward(
        field.width, field.height,
        np.ascontiguousarray(scene.means), icov,
        np.ascontiguousarray(scene.amplitudes), np.ascontiguousarray(scene.opacities),
        _cutoff_arg(cutoff), adj_i, adj_d, covs=cov,
    )
    # kernels return (1/2) sum coef * u u^T with u = Sigma^-1 r, i.e. dL/dSigma
    g_cov = np.empty((n, 2, 2))
    g_cov[:, 0, 0] = d_cov[:, 0]
    g_cov[:, 0, 1] = d_cov[:, 1]
    g_cov[:, 1, 0] = d_cov[:, 1]
    g_cov[:, 1, 1] = d_cov[:, 2]
    return SceneGradients(d_mean, d_amp, d_opac, g_cov)


# --- text serialization ------------------------------------------------------

def save_scene(scene: Scene, path: Union[str, Path]) -> None:
    lines = ["# mean_x mean_y cov_xx cov_xy cov_yy amplitude opacity"]
    for i in range(len(scene)):
        vals = [scene.means[i, 0], scene.means[i, 1], scene.covariances[i, 0, 0],
                scene.covariances[i, 0, 1], scene.covariances[i, 1, 1],
                *scene.amplitudes[i], scene.opacities[i]]
        lines.append(" ".join(f"{v:.17g}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_scene(path: Union[str, Path]) -> Scene:
    gaussians = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vals = [float(v) for v in line.split()]
        if len(vals) not in (7, 9):
            raise ValueError(f"{path}:{lineno}: expected 7 (or 9 for RGB) fields, got {len(vals)}")
        cov = np.array([[vals[2], vals[3]], [vals[3], vals[4]]])
        amp = vals[5] if len(vals) == 7 else np.array(vals[5:8])
        gaussians.append(Gaussian2D(vals[0:2], cov, amp, vals[-1]))
    return Scene.from_gaussians(gaussians)
