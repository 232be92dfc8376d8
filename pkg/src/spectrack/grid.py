"""Pixel grids, images, and pixel-space metrics.

Pixel centers live in the normalized square [-1, 1]^2. Column index ``i``
maps to ``x = 2 (i + 0.5) / W - 1`` and row index ``j`` to
``y = 2 (j + 0.5) / H - 1``. Arrays are stored row-major as ``(H, W)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

PSNR_CAP = 99.0


class ShapeError(ValueError):
    """Raised when array or image dimensions do not agree."""


@dataclass(frozen=True)
class CoordinateField:
    width: int
    height: int
    coords: np.ndarray  # (H, W, 2), last axis is (x, y)

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    @property
    def xs(self) -> np.ndarray:
        return axis_centers(self.width)

    @property
    def ys(self) -> np.ndarray:
        return axis_centers(self.height)

    def flat(self) -> np.ndarray:
        return self.coords.reshape(-1, 2)


def axis_centers(n: int) -> np.ndarray:
    return 2.0 * (np.arange(n, dtype=np.float64) + 0.5) / n - 1.0


def make_coordinate_field(width: int, height: int) -> CoordinateField:
    if int(width) < 1 or int(height) < 1:
        raise ValueError(f"grid dimensions must be positive, got {width}x{height}")
    width, height = int(width), int(height)
    xs = axis_centers(width)
    ys = axis_centers(height)
    coords = np.empty((height, width, 2))
    coords[..., 0] = xs[None, :]
    coords[..., 1] = ys[:, None]
    coords.setflags(write=False)
    return CoordinateField(width, height, coords)


@dataclass(frozen=True)
class Image:
    """Scalar (H, W) or RGB (H, W, 3) intensity plus optional (H, W) opacity."""

    intensity: np.ndarray
    opacity: Optional[np.ndarray] = None

    def __post_init__(self):
        inten = np.asarray(self.intensity, dtype=np.float64)
        if inten.ndim not in (2, 3) or (inten.ndim == 3 and inten.shape[2] != 3):
            raise ShapeError(f"intensity must be (H, W) or (H, W, 3), got {inten.shape}")
        if not np.all(np.isfinite(inten)):
            raise ValueError("intensity contains non-finite values")
        object.__setattr__(self, "intensity", inten)
        if self.opacity is not None:
            op = np.asarray(self.opacity, dtype=np.float64)
            if op.shape != inten.shape[:2]:
                raise ShapeError(f"opacity shape {op.shape} != {inten.shape[:2]}")
            if np.any(op < 0.0) or np.any(op > 1.0) or not np.all(np.isfinite(op)):
                raise ValueError("opacity must lie in [0, 1]")
            object.__setattr__(self, "opacity", op)

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.intensity.ndim == 2 else self.intensity.shape[2]

    @classmethod
    def zeros(cls, width: int, height: int, channels: int = 1, with_opacity: bool = True) -> "Image":
        shape = (height, width) if channels == 1 else (height, width, channels)
        op = np.zeros((height, width)) if with_opacity else None
        return cls(np.zeros(shape), op)


def _check_same(a: Image, b: Image) -> None:
    if a.intensity.shape != b.intensity.shape:
        raise ShapeError(f"image shapes differ: {a.intensity.shape} vs {b.intensity.shape}")


def mse(a: Image, b: Image) -> float:
    _check_same(a, b)
    diff = a.intensity - b.intensity
    val = float(np.mean(diff * diff))
    if val == 0.0 and not np.array_equal(a.intensity, b.intensity):
        # squared differences underflowed; zero is reserved for equal images
        return math.ulp(0.0)
    return val


def psnr(a: Image, b: Image, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at ``PSNR_CAP`` for identical images."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / err))


# --- PPM / PGM -------------------------------------------------------------

def _to_bytes(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.clip(values, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)


def write_pnm(path: Union[str, Path], values: np.ndarray, binary: bool = True) -> None:
    """Write an (H, W) array as PGM or an (H, W, 3) array as PPM, mapping [0, 1] to 0..255."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        magic = "P5" if binary else "P2"
    elif values.ndim == 3 and values.shape[2] == 3:
        magic = "P6" if binary else "P3"
    else:
        raise ShapeError(f"cannot write array of shape {values.shape} as PNM")
    h, w = values.shape[:2]
    data = _to_bytes(values)
    header = f"{magic}\n{w} {h}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            fh.write(data.tobytes())
        else:
            rows = data.reshape(h, -1)
            fh.write("\n".join(" ".join(str(v) for v in row) for row in rows).encode("ascii"))
            fh.write(b"\n")


def read_pnm(path: Union[str, Path]) -> np.ndarray:
    """Read an 8-bit PGM/PPM file (ASCII or binary) into floats in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    # header: magic, width, height, maxval; '#' comments allowed between tokens
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in ("P2", "P3", "P5", "P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    if maxval != 255:
        raise ValueError("only 8-bit PNM files are supported")
    channels = 3 if magic in ("P3", "P6") else 1
    count = w * h * channels
    if magic in ("P5", "P6"):
        pos += 1  # single whitespace byte after maxval
        data = np.frombuffer(raw[pos:pos + count], dtype=np.uint8)
    else:
        data = np.array(raw[pos:].split()[:count], dtype=np.int64)
    if data.size != count:
        raise ValueError("truncated PNM payload")
    shape = (h, w) if channels == 1 else (h, w, 3)
    return data.reshape(shape).astype(np.float64) / 255.0
