"""Deformation models acting on a canonical scene, and their adjoints.

Two parameterizations are supported:

* ``RigidParams``: one SE(2) motion about the origin, flattened as ``(tx, ty, theta)``.
* ``MorphField``: per-control-point offsets and rotations blended onto the
  Gaussian means by sparse skinning weights, flattened as
  ``(ox_0, oy_0, theta_0, ox_1, ...)`` in control-point order.

Covariances follow the motion: rigid covariances are rotated by the global
angle, morph covariances by the skin-weighted average angle.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .grid import ShapeError
from .splat import Scene


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _rotation_stack(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(theta.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _rotation_stack_derivative(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(theta.shape + (2, 2))
    out[..., 0, 0] = -s
    out[..., 0, 1] = -c
    out[..., 1, 0] = c
    out[..., 1, 1] = -s
    return out


@dataclass(frozen=True)
class RigidParams:
    translation: np.ndarray
    rotation: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(2)
        if not (np.all(np.isfinite(t)) and np.isfinite(self.rotation)):
            raise ValueError("rigid parameters must be finite")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", float(self.rotation))

    @classmethod
    def identity(cls) -> "RigidParams":
        return cls(np.zeros(2), 0.0)

    def to_vector(self) -> np.ndarray:
        return np.array([self.translation[0], self.translation[1], self.rotation])

    def with_vector(self, vec) -> "RigidParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (3,):
            raise ShapeError(f"rigid parameter vector must have length 3, got {vec.shape}")
        return RigidParams(vec[:2], vec[2])


@dataclass(frozen=True)
class SkinWeights:
    indices: np.ndarray  # (N, k) control-point indices per Gaussian
    weights: np.ndarray  # (N, k) non-negative, rows sum to 1

    def __len__(self) -> int:
        return self.indices.shape[0]

    def dense(self, num_control_points: int) -> np.ndarray:
        out = np.zeros((len(self), num_control_points))
        np.add.at(out, (np.arange(len(self))[:, None], self.indices), self.weights)
        return out


@dataclass(frozen=True)
class MorphField:
    control_points_rest: np.ndarray     # (M, 2)
    offsets: np.ndarray                 # (M, 2)
    rotations: np.ndarray               # (M,)
    skin: SkinWeights
    neighbors: Tuple[np.ndarray, ...]   # symmetric adjacency lists

    @property
    def num_control_points(self) -> int:
        return self.control_points_rest.shape[0]

    def to_vector(self) -> np.ndarray:
        return np.column_stack([self.offsets, self.rotations]).reshape(-1)

    def with_vector(self, vec) -> "MorphField":
        vec = np.asarray(vec, dtype=np.float64)
        m = self.num_control_points
        if vec.shape != (3 * m,):
            raise ShapeError(f"morph parameter vector must have length {3 * m}, got {vec.shape}")
        table = vec.reshape(m, 3)
        return replace(self, offsets=table[:, :2].copy(), rotations=table[:, 2].copy())

    def edges(self) -> np.ndarray:
        pairs = [(i, j) for i, nbrs in enumerate(self.neighbors) for j in nbrs if i < j]
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)

    @classmethod
    def create(cls, scene: Scene, count: int, seed: int = 0, k_skin: int = 4,
               k_graph: int = 6, bandwidth: Optional[float] = None) -> "MorphField":
        """Control points by farthest-point sampling, k-NN RBF skinning, k-NN neighbor graph."""
        cps = select_control_points(scene, count, seed)
        skin = compute_skin_weights(scene.means, cps, min(k_skin, count), bandwidth)
        graph = build_neighbor_graph(cps, min(k_graph, count - 1))
        return cls(cps, np.zeros_like(cps), np.zeros(count), skin, graph)


Params = Union[RigidParams, MorphField]


# --- control points and skinning ---------------------------------------------

def select_control_points(scene: Scene, count: int, seed: int = 0) -> np.ndarray:
    """Farthest-point sampling over Gaussian means; the first point is a seeded uniform draw."""
    means = scene.means
    n = len(means)
    if count < 1 or count > n:
        raise ValueError(f"cannot select {count} control points from {n} Gaussians")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    dist = np.linalg.norm(means - means[chosen[0]], axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(means - means[nxt], axis=1))
    return means[chosen].copy()


def median_spacing(control_points: np.ndarray) -> float:
    if len(control_points) < 2:
        return 1.0
    d = np.linalg.norm(control_points[:, None] - control_points[None], axis=2)
    np.fill_diagonal(d, np.inf)
    return float(np.median(d.min(axis=1)))


def compute_skin_weights(means, control_points, k: int = 4,
                         bandwidth: Optional[float] = None) -> SkinWeights:
    means = np.asarray(means, dtype=np.float64).reshape(-1, 2)
    cps = np.asarray(control_points, dtype=np.float64).reshape(-1, 2)
    if k < 1 or k > len(cps):
        raise ValueError(f"k={k} must lie in [1, {len(cps)}]")
    if bandwidth is None:
        bandwidth = median_spacing(cps)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    d2 = ((means[:, None, :] - cps[None, :, :]) ** 2).sum(axis=2)
    idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
    near = np.take_along_axis(d2, idx, axis=1)
    # shifting by the row minimum only rescales the row before normalization
    w = np.exp(-(near - near[:, :1]) / (2.0 * bandwidth * bandwidth))
    w /= w.sum(axis=1, keepdims=True)
    return SkinWeights(idx, w)


def build_neighbor_graph(points, k: int = 6) -> Tuple[np.ndarray, ...]:
    """Symmetric closure of the k-nearest-neighbor graph."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    m = len(pts)
    k = min(k, m - 1)
    sets: List[set] = [set() for _ in range(m)]
    if k > 0:
        d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        np.fill_diagonal(d, np.inf)
        nn = np.argsort(d, axis=1, kind="stable")[:, :k]
        for i in range(m):
            for j in nn[i]:
                sets[i].add(int(j))
                sets[int(j)].add(i)
    return tuple(np.array(sorted(s), dtype=np.int64) for s in sets)


# --- forward / backward ------------------------------------------------------

def _check_skin(field: MorphField, scene: Scene) -> None:
    if len(field.skin) != len(scene):
        raise ShapeError(f"skin weights cover {len(field.skin)} Gaussians, scene has {len(scene)}")


def _morph_geometry(field: MorphField, scene: Scene):
    idx, w = field.skin.indices, field.skin.weights
    rel = scene.means[:, None, :] - field.control_points_rest[idx]          # (N, k, 2)
    theta = field.rotations[idx]                                            # (N, k)
    return idx, w, rel, theta


def apply_deformation(params: Params, scene: Scene) -> Scene:
    if isinstance(params, RigidParams):
        rot = rotation_matrix(params.rotation)
        means = scene.means @ rot.T + params.translation
        covs = rot @ scene.covariances @ rot.T
        return scene.replace(means=means, covariances=covs)
    _check_skin(params, scene)
    idx, w, rel, theta = _morph_geometry(params, scene)
    rot_minus_eye = _rotation_stack(theta) - np.eye(2)
    moved = np.einsum("nkab,nkb->nka", rot_minus_eye, rel) + params.offsets[idx]
    means = scene.means + np.einsum("nk,nka->na", w, moved)
    avg_rot = _rotation_stack((w * theta).sum(axis=1))
    covs = avg_rot @ scene.covariances @ avg_rot.transpose(0, 2, 1)
    return scene.replace(means=means, covariances=covs)


def deformation_backward(params: Params, scene: Scene, mean_gradients,
                         cov_gradients=None) -> np.ndarray:
    """Pull back gradients w.r.t. deformed means (and optionally covariances) to the flat parameter vector.

    ``scene`` is the canonical (undeformed) scene. ``cov_gradients`` is the
    gradient w.r.t. each full deformed covariance matrix, shape ``(N, 2, 2)``.
    """
    g_mean = np.asarray(mean_gradients, dtype=np.float64)
    if g_mean.shape != (len(scene), 2):
        raise ShapeError(f"mean_gradients must have shape ({len(scene)}, 2), got {g_mean.shape}")
    if cov_gradients is not None:
        cov_gradients = np.asarray(cov_gradients, dtype=np.float64)
        if cov_gradients.shape != (len(scene), 2, 2):
            raise ShapeError("cov_gradients must have shape (N, 2, 2)")

    if isinstance(params, RigidParams):
        rot = rotation_matrix(params.rotation)
        drot = _rotation_stack_derivative(np.array(params.rotation))
        g_t = g_mean.sum(axis=0)
        g_theta = float(np.sum(g_mean * (scene.means @ drot.T)))
        if cov_gradients is not None:
            # d(R S R^T) = dR S R^T + R S dR^T
            a = drot @ scene.covariances @ rot.T
            g_theta += float(np.sum(cov_gradients * (a + a.transpose(0, 2, 1))))
        return np.array([g_t[0], g_t[1], g_theta])

    _check_skin(params, scene)
    m = params.num_control_points
    idx, w, rel, theta = _morph_geometry(params, scene)
    g_off = np.zeros((m, 2))
    np.add.at(g_off, idx, w[:, :, None] * g_mean[:, None, :])
    dmoved = np.einsum("nkab,nkb->nka", _rotation_stack_derivative(theta), rel)
    per_entry = w * np.einsum("na,nka->nk", g_mean, dmoved)
    if cov_gradients is not None:
        avg = (w * theta).sum(axis=1)
        rot = _rotation_stack(avg)
        a = _rotation_stack_derivative(avg) @ scene.covariances @ rot.transpose(0, 2, 1)
        g_avg = np.sum(cov_gradients * (a + a.transpose(0, 2, 1)), axis=(1, 2))
        per_entry = per_entry + w * g_avg[:, None]
    g_theta = np.zeros(m)
    np.add.at(g_theta, idx, per_entry)
    return np.column_stack([g_off, g_theta]).reshape(-1)


# --- ARAP --------------------------------------------------------------------

def arap_energy(field: MorphField) -> Tuple[float, np.ndarray]:
    """Pairwise edge-length preservation energy and its gradient w.r.t. offsets."""
    edges = field.edges()
    grad = np.zeros_like(field.control_points_rest)
    if len(edges) == 0:
        return 0.0, grad
    rest = field.control_points_rest
    x = rest + field.offsets
    i, j = edges[:, 0], edges[:, 1]
    diff = x[i] - x[j]
    cur = np.linalg.norm(diff, axis=1)
    ref = np.linalg.norm(rest[i] - rest[j], axis=1)
    stretch = cur - ref
    energy = float(np.sum(stretch * stretch))
    safe = np.where(cur > 0.0, cur, 1.0)
    # coincident deformed endpoints take the zero subgradient
    pull = np.where(cur[:, None] > 0.0, (2.0 * stretch / safe)[:, None] * diff, 0.0)
    np.add.at(grad, i, pull)
    np.add.at(grad, j, -pull)
    return energy, grad


# --- serialization -----------------------------------------------------------

def save_morph_table(field: MorphField, path: Union[str, Path]) -> None:
    lines = ["# rest_x rest_y offset_x offset_y rotation"]
    for c, o, r in zip(field.control_points_rest, field.offsets, field.rotations):
        lines.append(" ".join(f"{v:.17g}" for v in (c[0], c[1], o[0], o[1], r)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_morph_table(path: Union[str, Path]) -> np.ndarray:
    """Return the ``(M, 5)`` table; skinning and graph are rebuilt from the scene by the caller."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vals = [float(v) for v in line.split()]
        if len(vals) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(vals)}")
        rows.append(vals)
    return np.array(rows).reshape(-1, 5)
