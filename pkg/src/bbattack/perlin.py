"""Two-dimensional gradient-lattice (classic Perlin) noise patterns.

The sampler produces low-frequency spatial patterns used as a biased
sampling distribution for perturbation candidates. A pattern is fully
determined by a 256-entry permutation table and a frequency expressed in
lattice cells across the longer image side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import ImageShape

# Frequency that works well at 64 px; other sizes scale proportionally so
# the spatial wavelength in pixels stays constant.
REFERENCE_FREQUENCY = 5.0
REFERENCE_SIDE = 64

# Eight unit gradient directions at 45 degree spacing.
_ANGLES = np.arange(8) * (np.pi / 4.0)
_GRADS = np.stack([np.cos(_ANGLES), np.sin(_ANGLES)], axis=1)


@dataclass(frozen=True)
class PerlinParams:
    """Permutation table plus frequency (cells across the longer side)."""

    permutation: np.ndarray
    frequency: float

    def __post_init__(self):
        perm = np.asarray(self.permutation)
        if perm.shape != (256,) or not np.array_equal(np.sort(perm), np.arange(256)):
            raise ValueError("permutation must contain each of 0..255 exactly once")
        if self.frequency <= 0:
            raise ValueError(f"frequency must be positive, got {self.frequency}")
        object.__setattr__(self, "permutation", perm.astype(np.int64))


def default_frequency(shape: ImageShape) -> float:
    """Frequency keeping the reference spatial period (5 cells at 64 px)."""
    longer = max(shape.height, shape.width)
    return REFERENCE_FREQUENCY * longer / REFERENCE_SIDE


def shuffle_permutation(rng: np.random.Generator, frequency: float = REFERENCE_FREQUENCY) -> PerlinParams:
    """Draw a fresh uniformly random permutation table."""
    return PerlinParams(permutation=rng.permutation(256), frequency=float(frequency))


def _fade(t: np.ndarray) -> np.ndarray:
    # Ken Perlin's quintic: 6t^5 - 15t^4 + 10t^3.
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _grad_dot(hashes: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    g = _GRADS[hashes & 7]
    return g[..., 0] * dx + g[..., 1] * dy


def _pattern(permutation: np.ndarray, height: int, width: int, frequency: float) -> np.ndarray:
    """Evaluate one h x w noise pattern on a pixel-centered grid."""
    longer = max(height, width)
    ys = (np.arange(height) + 0.5) * (frequency / longer)
    xs = (np.arange(width) + 0.5) * (frequency / longer)
    gx, gy = np.meshgrid(xs, ys)

    xi = np.floor(gx).astype(np.int64)
    yi = np.floor(gy).astype(np.int64)
    xf = gx - xi
    yf = gy - yi
    u = _fade(xf)
    v = _fade(yf)

    p = np.concatenate([permutation, permutation])
    x0 = xi & 255
    x1 = (xi + 1) & 255
    y0 = yi & 255
    y1 = (yi + 1) & 255
    h00 = p[p[x0] + y0]
    h01 = p[p[x0] + y1]
    h10 = p[p[x1] + y0]
    h11 = p[p[x1] + y1]

    n00 = _grad_dot(h00, xf, yf)
    n01 = _grad_dot(h01, xf, yf - 1.0)
    n10 = _grad_dot(h10, xf - 1.0, yf)
    n11 = _grad_dot(h11, xf - 1.0, yf - 1.0)

    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    return nx0 + v * (nx1 - nx0)


def sample_perlin(
    params: PerlinParams,
    shape: ImageShape,
    rng: np.random.Generator,
    channel_mode: str = "independent",
) -> np.ndarray:
    """Sample a (H, W, C) noise pattern, mean-subtracted per channel.

    The first channel uses params.permutation; with channel_mode
    "independent" (the default) each further channel gets its own fresh
    permutation drawn from rng, with "replicated" the first pattern is
    reused. The result is NOT normalized; magnitude control is the
    caller's job.
    """
    if channel_mode not in ("independent", "replicated"):
        raise ValueError(f"unknown channel_mode {channel_mode!r}")
    out = np.empty(shape.dims, dtype=np.float64)
    first = _pattern(params.permutation, shape.height, shape.width, params.frequency)
    out[:, :, 0] = first
    for c in range(1, shape.channels):
        if channel_mode == "replicated":
            out[:, :, c] = first
        else:
            perm = rng.permutation(256)
            out[:, :, c] = _pattern(perm, shape.height, shape.width, params.frequency)
    out -= out.mean(axis=(0, 1), keepdims=True)
    return out
