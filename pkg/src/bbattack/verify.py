"""Self-check suites behind the `verify` CLI command.

Each suite re-derives a core invariant from scratch (randomized geometry,
finite differences, Fourier spectra) and reports one pass/fail line. Exit
status of the CLI command is 0 only when every suite passes.
"""

from __future__ import annotations

import numpy as np

from .biases import BiasConfig, compute_mask, generate_candidate
from .engine import StepSizes, adapt_step_sizes
from .perlin import sample_perlin, shuffle_permutation
from .surrogate import LinearSurrogate, TwoLayerSurrogate
from .tensor_core import ImageShape, l2_distance, project_orthogonal, renormalize, vec_dot, vec_norm


def check_geometry(cases: int = 1000, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    shape = (10, 10, 1)
    worst_dot = 0.0
    worst_norm = 0.0
    worst_idem = 0.0
    worst_triangle = 0.0
    for _ in range(cases):
        v = rng.standard_normal(shape)
        d = rng.standard_normal(shape)
        r = project_orthogonal(v, d)
        worst_dot = max(worst_dot, abs(vec_dot(r, d)) / (vec_norm(r) * vec_norm(d)))
        worst_idem = max(worst_idem, float(np.abs(project_orthogonal(r, d) - r).max()))
        u = renormalize(v, 1.0)
        worst_norm = max(worst_norm, abs(vec_norm(u) - 1.0))
        a, b, c = (np.clip(rng.random(shape), 0, 1) for _ in range(3))
        gap = l2_distance(a, c) - (l2_distance(a, b) + l2_distance(b, c))
        worst_triangle = max(worst_triangle, gap)
    ok = worst_dot <= 1e-6 and worst_norm <= 1e-9 and worst_idem <= 1e-10 and worst_triangle <= 1e-9
    return ok, (f"orthogonality {worst_dot:.2e}, unit-norm {worst_norm:.2e}, "
                f"idempotence {worst_idem:.2e}, triangle {worst_triangle:.2e}")


def _fd_max_relative_error(model, probes: int, seed: int, step: float = 1e-5) -> float:
    rng = np.random.default_rng(seed)
    k = model.shape.k
    worst = 0.0
    for _ in range(probes):
        x = rng.uniform(0.1, 0.9, size=model.shape.dims)
        target = int(rng.integers(model.class_count))
        grad = model.loss_gradient(x, target).ravel()
        scale = max(float(np.abs(grad).max()), 1e-12)
        # Probe a random subset of coordinates; full k per probe is wasteful.
        for idx in rng.choice(k, size=min(8, k), replace=False):
            e = np.zeros(k)
            e[idx] = step
            up = model.loss(x + e.reshape(model.shape.dims), target)
            down = model.loss(x - e.reshape(model.shape.dims), target)
            fd = (up - down) / (2 * step)
            worst = max(worst, abs(fd - grad[idx]) / scale)
    return worst


def check_gradients(probes: int = 100, seed: int = 1) -> tuple[bool, str]:
    shape = ImageShape(4, 4, 1)
    rng = np.random.default_rng(seed)
    linear = LinearSurrogate(rng.standard_normal((3, shape.k)), rng.standard_normal(3), shape)
    binary = LinearSurrogate(rng.standard_normal((2, shape.k)), rng.standard_normal(2), shape)
    mlp = TwoLayerSurrogate(rng.standard_normal((8, shape.k)), rng.standard_normal(8),
                            rng.standard_normal((3, 8)), rng.standard_normal(3), shape)
    errors = {name: _fd_max_relative_error(model, probes, seed)
              for name, model in (("linear", linear), ("binary", binary), ("mlp", mlp))}
    ok = all(err <= 1e-4 for err in errors.values())
    detail = ", ".join(f"{name} {err:.2e}" for name, err in errors.items())
    return ok, f"max relative finite-difference error: {detail}"


def _low_frequency_fraction(pattern: np.ndarray, radial_cutoff: float) -> float:
    spectrum = np.abs(np.fft.fft2(pattern)) ** 2
    h, w = pattern.shape
    fy = np.minimum(np.arange(h), h - np.arange(h))
    fx = np.minimum(np.arange(w), w - np.arange(w))
    radius = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
    spectrum[0, 0] = 0.0  # DC excluded
    total = spectrum.sum()
    if total == 0:
        return 0.0
    return float(spectrum[radius <= radial_cutoff].sum() / total)


def check_spectral_concentration(seeds: int = 100, frequency: float = 5.0,
                                 side: int = 64) -> tuple[bool, str]:
    shape = ImageShape(side, side, 1)
    cutoff = 2 * frequency
    worst_margin = np.inf
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        params = shuffle_permutation(rng, frequency=frequency)
        perlin = sample_perlin(params, shape, rng)[:, :, 0]
        normal = rng.standard_normal((side, side))
        margin = _low_frequency_fraction(perlin, cutoff) - _low_frequency_fraction(normal, cutoff)
        worst_margin = min(worst_margin, margin)
    return worst_margin > 0, f"min (perlin - normal) low-frequency energy margin: {worst_margin:.4f}"


def check_mask_concentration(seed: int = 2) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    shape = (16, 16, 1)
    x_orig = np.full(shape, 0.5)
    x_adv = x_orig.copy()
    x_adv[:8, :, :] += 0.3  # images differ only in the top half
    config = BiasConfig(use_mask=True)
    energies = []
    for _ in range(50):
        cand = generate_candidate(x_orig, x_adv, config, rng, orthogonal_norm=1.0)
        energies.append(float((cand[:8] ** 2).sum() / (cand ** 2).sum()))
    low = min(energies)
    return low > 0.99, f"min in-region candidate energy over 50 draws: {low:.6f}"


def check_step_controller() -> tuple[bool, str]:
    base = StepSizes()
    checks = []
    sizes, fails = adapt_step_sizes(base, 0)
    checks.append(sizes == base and fails == 0)
    sizes, _ = adapt_step_sizes(base, 3)
    checks.append(abs(sizes.orthogonal - base.orthogonal / 2) < 1e-15
                  and abs(sizes.source - base.source / 2) < 1e-15)
    sizes, fails = adapt_step_sizes(base, 50)
    checks.append(sizes == base and fails == 0)
    return all(checks), f"base {base.orthogonal}/{base.source}, halving at 3, reset at 50"


SUITES = (
    ("geometry", check_geometry),
    ("surrogate-gradients", check_gradients),
    ("perlin-spectrum", check_spectral_concentration),
    ("mask-concentration", check_mask_concentration),
    ("step-controller", check_step_controller),
)


def run_all(stream=None) -> bool:
    import sys

    stream = stream or sys.stdout
    all_ok = True
    for name, suite in SUITES:
        ok, detail = suite()
        all_ok &= ok
        stream.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
    return all_ok
