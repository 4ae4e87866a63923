"""Candidate generation: raw samples shaped by up to three sampling biases.

A candidate for the orthogonal step starts as normal or Perlin noise, is
optionally reweighted by the per-pixel difference mask, projected onto the
hyperplane orthogonal to the source direction, optionally pulled toward a
projected surrogate gradient, and finally re-projected and scaled to the
requested step length. Biases shape directions only; magnitudes belong to
the step-size controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirectionError, DegenerateSampleError, SamplingExhaustedError
from .perlin import default_frequency, sample_perlin, shuffle_permutation
from .tensor_core import (
    DEGENERACY_EPS,
    ImageShape,
    project_orthogonal,
    renormalize,
    require_same_shape,
    vec_norm,
)

# Relative floor keeps masked sampling full-rank; absolute floor covers the
# all-zero mask of coinciding images.
MASK_FLOOR_REL = 1e-3
MASK_FLOOR_ABS = 1e-6

DEFAULT_MAX_RETRIES = 10


@dataclass(frozen=True)
class BiasConfig:
    """Which biases are active, and how strongly the gradient pulls."""

    use_perlin: bool = False
    use_mask: bool = False
    use_gradient: bool = False
    gradient_weight: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gradient_weight <= 1.0:
            raise ValueError(f"gradient_weight must be in [0, 1], got {self.gradient_weight}")

    def label(self) -> str:
        parts = [name for name, on in (("perlin", self.use_perlin), ("mask", self.use_mask),
                                       ("gradient", self.use_gradient)) if on]
        return "+".join(parts) if parts else "none"


def compute_mask(x_adv: np.ndarray, x_orig: np.ndarray) -> np.ndarray:
    """Per-pixel |x_adv - x_orig|, floored so the mask never kills sampling.

    Recompute from the current position every step; the interesting regions
    move as the attack closes in.
    """
    require_same_shape(x_adv, x_orig)
    weights = np.abs(x_adv - x_orig)
    peak = float(weights.max())
    floor = MASK_FLOOR_REL * peak if peak > 0.0 else MASK_FLOOR_ABS
    return np.maximum(weights, floor)


def apply_mask(eta: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Elementwise mask, then restore unit magnitude."""
    require_same_shape(eta, mask)
    return renormalize(mask * eta, 1.0)


def mix_gradient(eta: np.ndarray, eta_pg: np.ndarray, weight: float) -> np.ndarray:
    """Blend (1 - w) * eta + w * eta_pg on the hyperplane, unit-renormalized.

    Both inputs must already be unit vectors; weight 1 reproduces the
    projected gradient exactly (a PGD-like step), weight 0 leaves eta alone.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must be in [0, 1], got {weight}")
    for name, v in (("eta", eta), ("eta_pg", eta_pg)):
        norm = vec_norm(v)
        if not abs(norm - 1.0) <= 1e-6:  # also rejects non-finite norms
            raise ValueError(f"{name} must be unit-normalized (norm {norm:.6g})")
    return renormalize((1.0 - weight) * eta + weight * eta_pg, 1.0)


def generate_candidate(
    x_orig: np.ndarray,
    x_adv: np.ndarray,
    config: BiasConfig,
    rng: np.random.Generator,
    orthogonal_norm: float,
    surrogate_direction: np.ndarray | None = None,
    perlin_frequency: float | None = None,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> np.ndarray:
    """Draw one biased orthogonal-step candidate.

    Pipeline order: raw sample (normal or Perlin), mask multiply, orthogonal
    projection, unit renormalize, gradient mixing, then a final re-projection
    and rescale to orthogonal_norm. The result is orthogonal to
    x_orig - x_adv and has exactly the requested norm.

    Degenerate intermediate vectors trigger a fresh sample, at most
    max_retries times, after which SamplingExhaustedError is raised.
    """
    source = x_orig - x_adv
    shape = ImageShape.from_array(x_orig)
    if vec_norm(source) <= DEGENERACY_EPS:
        raise DegenerateDirectionError("x_adv coincides with x_orig; no orthogonal hyperplane")
    frequency = perlin_frequency if perlin_frequency is not None else default_frequency(shape)
    mask = compute_mask(x_adv, x_orig) if config.use_mask else None

    for _ in range(max_retries):
        try:
            if config.use_perlin:
                params = shuffle_permutation(rng, frequency=frequency)
                sample = sample_perlin(params, shape, rng)
            else:
                sample = rng.standard_normal(shape.dims)
            if mask is not None:
                sample = mask * sample
            eta = renormalize(project_orthogonal(sample, source), 1.0)
            if config.use_gradient and surrogate_direction is not None:
                eta = mix_gradient(eta, surrogate_direction, config.gradient_weight)
            eta = project_orthogonal(eta, source)
            return renormalize(eta, orthogonal_norm)
        except DegenerateSampleError:
            continue
    raise SamplingExhaustedError(f"no usable candidate after {max_retries} attempts")
