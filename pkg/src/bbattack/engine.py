"""Attack loops: initialization, boundary walking, random guessing.

The boundary walk keeps a criterion-satisfying point x_adv and shrinks its
distance to the original image. Each iteration proposes
clip(x_adv + orthogonal candidate + source step) and spends exactly one
oracle query; a proposal is accepted only if it still satisfies the
criterion AND strictly reduces the distance. Step sizes are fractions of
the current distance and decay geometrically under consecutive failures.

All randomness flows through one numpy Generator per run, so identical
(seed, config, oracle) reproduce bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .biases import BiasConfig, generate_candidate
from .errors import InitializationError
from .oracles import (
    PHASE_ATTACK,
    PHASE_INITIALIZATION,
    QueryLedger,
    is_adversarial,
    query,
)
from .perlin import default_frequency, sample_perlin, shuffle_permutation
from .tensor_core import ImageShape, clip_to_valid, l2_distance, renormalize

# Step sizes from the attack's tuned configuration: a wide orthogonal step
# with a small source step. The classic boundary-attack default was
# 0.01 / 0.01.
DEFAULT_ORTHOGONAL_STEP = 0.05
DEFAULT_SOURCE_STEP = 0.002

STEP_DECAY_FACTOR = 0.5
STEP_DECAY_EVERY = 3
STEP_RESET_AFTER = 50

LINE_SEARCH_TOLERANCE = 1e-2
LINE_SEARCH_MAX_BISECTIONS = 10


@dataclass(frozen=True)
class StepSizes:
    """Orthogonal and source step lengths as fractions of current distance."""

    orthogonal: float = DEFAULT_ORTHOGONAL_STEP
    source: float = DEFAULT_SOURCE_STEP

    def __post_init__(self):
        for name in ("orthogonal", "source"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} step must be in (0, 1], got {value}")


@dataclass
class AttackState:
    """Mutable per-run state; x_adv always satisfies the criterion."""

    x_orig: np.ndarray
    x_adv: np.ndarray
    best_distance: float
    step_sizes: StepSizes
    base_step_sizes: StepSizes
    consecutive_failures: int
    ledger: QueryLedger
    rng: np.random.Generator


@dataclass
class AttackResult:
    """Outcome of one attack run against one image."""

    x_adv: np.ndarray | None
    distance: float
    queries: int
    success: bool
    threshold: float
    trace: list = field(default_factory=list)
    ledger: QueryLedger | None = None


def adapt_step_sizes(base: StepSizes, consecutive_failures: int,
                     decay: float = STEP_DECAY_FACTOR,
                     decay_every: int = STEP_DECAY_EVERY,
                     reset_after: int = STEP_RESET_AFTER) -> tuple[StepSizes, int]:
    """Step sizes after a run of failures, with the fail-safe reset.

    Sizes shrink geometrically (halved every 3 consecutive failures by
    default); at reset_after failures both sizes snap back to base and the
    counter restarts. Returns (sizes, effective failure count).
    """
    if consecutive_failures < 0:
        raise ValueError("consecutive_failures must be >= 0")
    if consecutive_failures >= reset_after:
        return base, 0
    factor = decay ** (consecutive_failures // decay_every)
    if factor == 1.0:
        return base, consecutive_failures
    return StepSizes(orthogonal=base.orthogonal * factor, source=base.source * factor), consecutive_failures


def _decide(oracle, criterion, x: np.ndarray, x_orig: np.ndarray, ledger: QueryLedger,
            phase: str, best_distance: float) -> tuple[bool, float, bool]:
    """One budgeted oracle evaluation with trace bookkeeping.

    Returns (adversarial, distance to original, accepted) where accepted
    means the point both satisfies the criterion and strictly improves on
    best_distance.
    """
    labels = query(oracle, x, ledger, phase)
    adversarial = is_adversarial(criterion, labels)
    distance = l2_distance(x, x_orig)
    accepted = adversarial and distance < best_distance
    best_after = distance if accepted else best_distance
    ledger.record_trace(ledger.total_queries, distance, adversarial, best_after)
    return adversarial, distance, accepted


def initialize(oracle, criterion, x_orig: np.ndarray, candidate_pool, rng: np.random.Generator,
               ledger: QueryLedger | None = None, budget: int | None = None,
               step_sizes: StepSizes | None = None,
               line_search_tolerance: float = LINE_SEARCH_TOLERANCE,
               max_bisections: int = LINE_SEARCH_MAX_BISECTIONS) -> AttackState:
    """Pick a starting point from the pool and line-search to the boundary.

    Pool members are clipped to the pixel box and screened in order of
    increasing distance to x_orig, so the first criterion-satisfying answer
    is the closest one; a binary line search toward x_orig then walks the
    segment until it is shorter than line_search_tolerance times the
    starting distance or max_bisections is hit. Every query counts against
    the budget under the initialization phase.
    """
    if not candidate_pool:
        raise InitializationError("candidate pool is empty")
    if ledger is None:
        ledger = QueryLedger()
    base = step_sizes if step_sizes is not None else StepSizes()

    def budget_left() -> bool:
        return budget is None or ledger.total_queries < budget

    candidates = [clip_to_valid(np.asarray(c, dtype=np.float64)) for c in candidate_pool]
    candidates.sort(key=lambda c: l2_distance(c, x_orig))

    best = math.inf
    start = None
    for cand in candidates:
        if not budget_left():
            raise InitializationError("budget exhausted before any pool member satisfied the criterion")
        _, dist, accepted = _decide(oracle, criterion, cand, x_orig, ledger, PHASE_INITIALIZATION, best)
        if accepted:
            best = dist
            start = cand
            break
    if start is None:
        raise InitializationError("no pool member satisfies the adversarial criterion")

    x_adv = start
    gap = best
    if gap > 0.0:
        lo, hi = 0.0, 1.0
        for _ in range(max_bisections):
            if (hi - lo) <= line_search_tolerance or not budget_left():
                break
            mid = 0.5 * (lo + hi)
            x_mid = x_orig + mid * (start - x_orig)
            _, dist, accepted = _decide(oracle, criterion, x_mid, x_orig, ledger,
                                        PHASE_INITIALIZATION, best)
            if accepted:
                best = dist
                x_adv = x_mid
                hi = mid
            else:
                lo = mid

    return AttackState(x_orig=x_orig, x_adv=x_adv, best_distance=best, step_sizes=base,
                       base_step_sizes=base, consecutive_failures=0, ledger=ledger, rng=rng)


def bba_step(state: AttackState, config: BiasConfig, oracle, criterion,
             gradient_provider=None, perlin_frequency: float | None = None,
             max_retries: int = 10) -> bool:
    """One combined orthogonal + source step, spending one query.

    Returns True when the proposal was accepted. On rejection the failure
    counter grows and both step sizes decay; on acceptance they reset.
    """
    d = state.best_distance
    source = state.x_orig - state.x_adv

    direction = None
    if config.use_gradient and gradient_provider is not None:
        direction = gradient_provider(state.x_adv)

    candidate = generate_candidate(
        state.x_orig, state.x_adv, config, state.rng,
        orthogonal_norm=state.step_sizes.orthogonal * d,
        surrogate_direction=direction,
        perlin_frequency=perlin_frequency,
        max_retries=max_retries,
    )
    proposal = clip_to_valid(state.x_adv + candidate + state.step_sizes.source * source)
    _, dist, accepted = _decide(oracle, criterion, proposal, state.x_orig, state.ledger,
                                PHASE_ATTACK, state.best_distance)
    if accepted:
        state.x_adv = proposal
        state.best_distance = dist
        state.step_sizes = state.base_step_sizes
        state.consecutive_failures = 0
    else:
        state.consecutive_failures += 1
        state.step_sizes, state.consecutive_failures = adapt_step_sizes(
            state.base_step_sizes, state.consecutive_failures)
    return accepted


def bba_step_two_query(state: AttackState, config: BiasConfig, oracle, criterion,
                       gradient_provider=None, perlin_frequency: float | None = None,
                       max_retries: int = 10, budget: int | None = None) -> bool:
    """Classic two-query iteration: orthogonal probe first, then the source
    step only if the probe stayed adversarial. Kept for comparison runs."""
    d = state.best_distance
    source = state.x_orig - state.x_adv

    direction = None
    if config.use_gradient and gradient_provider is not None:
        direction = gradient_provider(state.x_adv)

    candidate = generate_candidate(
        state.x_orig, state.x_adv, config, state.rng,
        orthogonal_norm=state.step_sizes.orthogonal * d,
        surrogate_direction=direction,
        perlin_frequency=perlin_frequency,
        max_retries=max_retries,
    )
    accepted = False
    probe = clip_to_valid(state.x_adv + candidate)
    probe_adv, _, _ = _decide(oracle, criterion, probe, state.x_orig, state.ledger,
                              PHASE_ATTACK, state.best_distance)
    if probe_adv and (budget is None or state.ledger.total_queries < budget):
        stepped = clip_to_valid(probe + state.step_sizes.source * (state.x_orig - probe))
        _, dist, accepted = _decide(oracle, criterion, stepped, state.x_orig, state.ledger,
                                    PHASE_ATTACK, state.best_distance)
        if accepted:
            state.x_adv = stepped
            state.best_distance = dist
    if accepted:
        state.step_sizes = state.base_step_sizes
        state.consecutive_failures = 0
    else:
        state.consecutive_failures += 1
        state.step_sizes, state.consecutive_failures = adapt_step_sizes(
            state.base_step_sizes, state.consecutive_failures)
    return accepted


def run_bba(oracle, criterion, x_orig: np.ndarray, pool, config: BiasConfig, budget: int,
            threshold: float, rng: np.random.Generator | int, step_sizes: StepSizes | None = None,
            gradient_provider=None, perlin_frequency: float | None = None,
            line_search_tolerance: float = LINE_SEARCH_TOLERANCE,
            max_bisections: int = LINE_SEARCH_MAX_BISECTIONS,
            step_mode: str = "combined") -> AttackResult:
    """Full attack run: initialize, then step until the budget is spent.

    The run never stops early on reaching the threshold (success is judged
    from the trace afterwards); it stops only when the budget is exhausted
    or the distance hits exactly zero.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if step_mode not in ("combined", "classic"):
        raise ValueError(f"step_mode must be 'combined' or 'classic', got {step_mode!r}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))

    ledger = QueryLedger()
    state = initialize(oracle, criterion, x_orig, pool, rng, ledger=ledger, budget=budget,
                       step_sizes=step_sizes, line_search_tolerance=line_search_tolerance,
                       max_bisections=max_bisections)
    while ledger.total_queries < budget and state.best_distance > 0.0:
        if step_mode == "combined":
            bba_step(state, config, oracle, criterion, gradient_provider=gradient_provider,
                     perlin_frequency=perlin_frequency)
        else:
            bba_step_two_query(state, config, oracle, criterion,
                               gradient_provider=gradient_provider,
                               perlin_frequency=perlin_frequency, budget=budget)
    return AttackResult(x_adv=state.x_adv, distance=state.best_distance,
                        queries=ledger.total_queries, success=state.best_distance <= threshold,
                        threshold=threshold, trace=ledger.trace, ledger=ledger)


def run_random_guessing(oracle, criterion, x_orig: np.ndarray, distribution: str, budget: int,
                        initial_epsilon: float, rng: np.random.Generator | int,
                        perlin_frequency: float | None = None, threshold: float = math.inf,
                        bisection_mode: str = "resample") -> AttackResult:
    """Hypersphere random guessing with binary search on the radius.

    Candidates are clip(x_orig + radius * s / ||s||) with s drawn from a
    normal distribution or from Perlin patterns. Once a candidate succeeds,
    the radius bisects between the largest failing radius below and the
    smallest succeeding radius; by default every probe draws a fresh
    direction at the midpoint radius ("resample"), while "rescale" walks
    the last successful direction inward.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if distribution not in ("normal", "perlin"):
        raise ValueError(f"distribution must be 'normal' or 'perlin', got {distribution!r}")
    if bisection_mode not in ("resample", "rescale"):
        raise ValueError(f"bisection_mode must be 'resample' or 'rescale', got {bisection_mode!r}")
    if initial_epsilon <= 0:
        raise ValueError(f"initial_epsilon must be positive, got {initial_epsilon}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))

    shape = ImageShape.from_array(x_orig)
    if perlin_frequency is None:
        perlin_frequency = default_frequency(shape)

    ledger = QueryLedger()
    best = math.inf
    best_x = None
    eps_lo = 0.0
    eps_hi: float | None = None
    success_direction: np.ndarray | None = None

    while ledger.total_queries < budget:
        radius = initial_epsilon if eps_hi is None else 0.5 * (eps_lo + eps_hi)
        if bisection_mode == "rescale" and success_direction is not None:
            direction = success_direction
        else:
            if distribution == "perlin":
                params = shuffle_permutation(rng, frequency=perlin_frequency)
                sample = sample_perlin(params, shape, rng)
            else:
                sample = rng.standard_normal(shape.dims)
            direction = renormalize(sample, 1.0)
        x = clip_to_valid(x_orig + radius * direction)
        adversarial, dist, accepted = _decide(oracle, criterion, x, x_orig, ledger,
                                              PHASE_ATTACK, best)
        if accepted:
            best = dist
            best_x = x.copy()
        if adversarial:
            eps_hi = radius
            success_direction = direction
        elif eps_hi is not None:
            eps_lo = radius
    distance = best if best_x is not None else math.inf
    success = best_x is not None and distance <= threshold
    return AttackResult(x_adv=best_x, distance=distance, queries=ledger.total_queries,
                        success=success, threshold=threshold,
                        trace=ledger.trace, ledger=ledger)
