"""Image and perturbation primitives: shapes, norms, projections, clipping.

Images and perturbations are plain float64 numpy arrays of shape
(height, width, channels), flattened row-major (row, column, channel
innermost) wherever a vector view is needed. Pixel values live in [0, 1];
perturbations are unbounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirectionError, DegenerateSampleError, ShapeMismatchError

# Norms at or below this are treated as zero vectors.
DEGENERACY_EPS = 1e-12


@dataclass(frozen=True)
class ImageShape:
    """Spatial dimensions of the input space. k = height * width * channels."""

    height: int
    width: int
    channels: int

    def __post_init__(self):
        for name in ("height", "width", "channels"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")

    @property
    def k(self) -> int:
        return self.height * self.width * self.channels

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageShape":
        if arr.ndim != 3:
            raise ShapeMismatchError(f"expected a (H, W, C) array, got ndim={arr.ndim}")
        h, w, c = arr.shape
        return cls(int(h), int(w), int(c))


def require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def vec_norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v.ravel()))


def vec_dot(a: np.ndarray, b: np.ndarray) -> float:
    require_same_shape(a, b)
    return float(np.dot(a.ravel(), b.ravel()))


def l2_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two equally shaped tensors."""
    require_same_shape(a, b)
    return float(np.linalg.norm((a - b).ravel()))


def project_orthogonal(v: np.ndarray, source_dir: np.ndarray) -> np.ndarray:
    """Remove from v its component along source_dir.

    Raises DegenerateDirectionError when source_dir is (numerically) zero and
    DegenerateSampleError when v is parallel to source_dir, in which case the
    caller should draw a fresh sample.
    """
    require_same_shape(v, source_dir)
    d_norm = vec_norm(source_dir)
    if d_norm <= DEGENERACY_EPS:
        raise DegenerateDirectionError("source direction has zero norm")
    d_hat = source_dir / d_norm
    result = v - vec_dot(v, d_hat) * d_hat
    if vec_norm(result) <= DEGENERACY_EPS:
        raise DegenerateSampleError("sample is parallel to the source direction")
    return result


def renormalize(v: np.ndarray, target_norm: float) -> np.ndarray:
    """Rescale v to the requested Euclidean norm, preserving direction."""
    if target_norm <= 0:
        raise ValueError(f"target_norm must be positive, got {target_norm}")
    n = vec_norm(v)
    # "not >" instead of "<=" so non-finite norms are rejected too.
    if not n > DEGENERACY_EPS or not np.isfinite(n):
        raise DegenerateSampleError(f"cannot renormalize a vector of norm {n}")
    return v * (target_norm / n)


def clip_to_valid(x: np.ndarray) -> np.ndarray:
    """Clamp every element into the valid pixel domain [0, 1]."""
    return np.clip(x, 0.0, 1.0)
