"""Experiment configuration: strict parsing and spec-to-object builders.

Configs are JSON documents mirroring ExperimentConfig field for field.
Parsing is strict: unknown keys anywhere in the document are fatal, since
a silently ignored typo in a bias flag would invalidate a whole ablation
comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .biases import BiasConfig
from .engine import StepSizes
from .errors import ConfigError
from .oracles import (
    Compound,
    ExactTarget,
    FixedLabelOracle,
    LabelInSet,
    LinearOracle,
    LowpassOracle,
    RegionOracle,
    SubstringMatch,
)
from .perlin import _pattern
from .remote import RemoteOracle
from .surrogate import LinearSurrogate, load_surrogate
from .tensor_core import ImageShape, clip_to_valid, renormalize, vec_norm

DEFAULT_THRESHOLD_FACTOR = 0.05  # threshold = 0.05 * sqrt(k) unless given
DEFAULT_STEPS = StepSizes()


def _check_keys(doc: dict, required: set[str], optional: set[str], context: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{context}: expected an object, got {type(doc).__name__}")
    keys = set(doc)
    unknown = keys - required - optional
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {sorted(unknown)}")
    missing = required - keys
    if missing:
        raise ConfigError(f"{context}: missing required key(s) {sorted(missing)}")


def _shape_from(doc, context: str) -> ImageShape:
    if (not isinstance(doc, list)) or len(doc) != 3:
        raise ConfigError(f"{context}: shape must be [height, width, channels]")
    try:
        return ImageShape(int(doc[0]), int(doc[1]), int(doc[2]))
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


# ---------------------------------------------------------------------------
# Oracle specs (recursive: lowpass/region wrap an inner spec).
# ---------------------------------------------------------------------------


def _smooth_field(shape: ImageShape, seed: int, frequency: float = 3.0) -> np.ndarray:
    """Deterministic unit-norm low-frequency field for toy weights and images."""
    rng = np.random.default_rng(seed)
    out = np.empty(shape.dims)
    for c in range(shape.channels):
        out[:, :, c] = _pattern(rng.permutation(256), shape.height, shape.width, frequency)
    return renormalize(out, 1.0)


def _build_linear_weights(doc, shape: ImageShape, context: str) -> np.ndarray:
    _check_keys(doc, set(), {"pattern", "seed", "path"}, context)
    if "path" in doc:
        weights = np.load(doc["path"]).astype(np.float64)
        if weights.shape != shape.dims:
            raise ConfigError(f"{context}: weight file shape {weights.shape} != {shape.dims}")
        return weights
    pattern = doc.get("pattern", "smooth")
    seed = int(doc.get("seed", 0))
    if pattern == "smooth":
        return _smooth_field(shape, seed)
    if pattern == "random":
        return renormalize(np.random.default_rng(seed).standard_normal(shape.dims), 1.0)
    raise ConfigError(f"{context}: unknown weight pattern {pattern!r}")


def build_oracle(doc: dict, context: str = "oracle"):
    """Instantiate an oracle from its (possibly nested) spec."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(f"{context}: oracle spec needs a 'kind'")
    kind = doc["kind"]
    if kind == "linear":
        _check_keys(doc, {"kind", "shape"}, {"weights", "offset", "margin", "labels"}, context)
        shape = _shape_from(doc["shape"], context)
        weights = _build_linear_weights(doc.get("weights", {}), shape, f"{context}.weights")
        labels = tuple(doc.get("labels", ["pos", "neg"]))
        if len(labels) != 2:
            raise ConfigError(f"{context}: labels must be [positive, negative]")
        oracle = LinearOracle(weights, float(doc.get("offset", 0.0)), shape, labels=labels)
    elif kind == "lowpass":
        _check_keys(doc, {"kind", "inner"}, {"radius", "margin"}, context)
        oracle = LowpassOracle(build_oracle(doc["inner"], f"{context}.inner"),
                               radius=int(doc.get("radius", 2)))
    elif kind == "region":
        _check_keys(doc, {"kind", "inner", "region"}, {"margin"}, context)
        region = doc["region"]
        if not isinstance(region, list) or len(region) != 4:
            raise ConfigError(f"{context}: region must be [top, left, height, width]")
        oracle = RegionOracle(build_oracle(doc["inner"], f"{context}.inner"), tuple(region))
    elif kind == "remote":
        _check_keys(doc, {"kind", "endpoint", "shape"}, {"timeout", "max_retries", "backoff"}, context)
        shape = _shape_from(doc["shape"], context)
        oracle = RemoteOracle(doc["endpoint"], shape, timeout=float(doc.get("timeout", 10.0)),
                              max_retries=int(doc.get("max_retries", 3)),
                              backoff=float(doc.get("backoff", 0.5)))
    elif kind == "fixed":
        _check_keys(doc, {"kind", "shape", "labels"}, set(), context)
        oracle = FixedLabelOracle(_shape_from(doc["shape"], context), doc["labels"])
    else:
        raise ConfigError(f"{context}: unknown oracle kind {kind!r}")

    if "margin" in doc:
        _apply_margin(oracle, float(doc["margin"]), context)
    return oracle


def _leaf_linear(oracle):
    while hasattr(oracle, "inner"):
        oracle = oracle.inner
    if not isinstance(oracle, LinearOracle):
        raise ConfigError("margin requires a linear oracle at the core")
    return oracle


def _apply_margin(oracle, margin: float, context: str) -> None:
    """Set the leaf offset so the mid-gray image sits margin * ||w_eff||
    on the negative side of the composed decision function."""
    if margin <= 0:
        raise ConfigError(f"{context}: margin must be positive")
    leaf = _leaf_linear(oracle)
    leaf.offset = 0.0
    w_eff, _ = oracle.effective_linear()
    gray = np.full(oracle.shape.dims, 0.5)
    leaf.offset = -float(np.dot(w_eff.ravel(), gray.ravel())) - margin * vec_norm(w_eff)


# ---------------------------------------------------------------------------
# Criterion specs.
# ---------------------------------------------------------------------------


def build_criterion(doc: dict, context: str = "criterion"):
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(f"{context}: criterion spec needs a 'kind'")
    kind = doc["kind"]
    if kind == "exact-target":
        _check_keys(doc, {"kind", "target"}, set(), context)
        return ExactTarget(target=str(doc["target"]))
    if kind == "label-in-set":
        _check_keys(doc, {"kind", "allowed"}, set(), context)
        return LabelInSet(allowed=frozenset(str(v) for v in doc["allowed"]))
    if kind == "substring-match":
        _check_keys(doc, {"kind", "required"}, {"forbidden"}, context)
        return SubstringMatch(required=str(doc["required"]),
                              forbidden=tuple(str(v) for v in doc.get("forbidden", [])))
    if kind == "compound":
        _check_keys(doc, {"kind", "op", "children"}, set(), context)
        children = tuple(build_criterion(c, f"{context}.children[{i}]")
                         for i, c in enumerate(doc["children"]))
        try:
            return Compound(op=str(doc["op"]), children=children)
        except ValueError as exc:
            raise ConfigError(f"{context}: {exc}") from exc
    raise ConfigError(f"{context}: unknown criterion kind {kind!r}")


# ---------------------------------------------------------------------------
# Surrogate specs.
# ---------------------------------------------------------------------------


@dataclass
class SurrogateSetup:
    model: object
    target_class: int
    retreat_fraction: float


def build_surrogate(doc: dict, oracle, context: str = "surrogate") -> SurrogateSetup:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(f"{context}: surrogate spec needs a 'kind'")
    kind = doc["kind"]
    retreat = float(doc.get("retreat_fraction", 0.05))
    if kind == "file":
        _check_keys(doc, {"kind", "path"}, {"target_class", "retreat_fraction"}, context)
        model = load_surrogate(doc["path"])
        return SurrogateSetup(model, int(doc.get("target_class", 0)), retreat)
    if kind == "from-oracle":
        _check_keys(doc, {"kind"}, {"target_class", "retreat_fraction", "weight_noise", "noise_seed"}, context)
        if not hasattr(oracle, "effective_linear"):
            raise ConfigError(f"{context}: 'from-oracle' needs an oracle with a linear form")
        w_eff, b = oracle.effective_linear()
        noise = float(doc.get("weight_noise", 0.0))
        if noise > 0.0:
            rng = np.random.default_rng(int(doc.get("noise_seed", 0)))
            w_eff = w_eff + noise * vec_norm(w_eff) * renormalize(rng.standard_normal(w_eff.shape), 1.0)
        flat = w_eff.ravel()
        weights = np.stack([-0.5 * flat, 0.5 * flat])
        bias = np.array([-0.5 * b, 0.5 * b])
        model = LinearSurrogate(weights, bias, oracle.shape)
        return SurrogateSetup(model, int(doc.get("target_class", 1)), retreat)
    raise ConfigError(f"{context}: unknown surrogate kind {kind!r}")


# ---------------------------------------------------------------------------
# Image sources.
# ---------------------------------------------------------------------------


@dataclass
class AttackInstance:
    """One original image plus its pool of candidate starting points."""

    x_orig: np.ndarray
    pool: list


def _synthetic_original(shape: ImageShape, seed: int, base: str, amplitude: float,
                        hold_region=None) -> np.ndarray:
    if base == "gray":
        return np.full(shape.dims, 0.5)
    if base == "smooth":
        pattern = _smooth_field(shape, seed)
        peak = float(np.abs(pattern).max())
        if hold_region is not None:
            # Keep the held rectangle at the base value so every image sits at
            # the same distance from a boundary supported inside it.
            top, left, height, width = hold_region
            pattern = pattern.copy()
            pattern[top:top + height, left:left + width, :] = 0.0
        return clip_to_valid(0.5 + amplitude * pattern / peak)
    raise ConfigError(f"unknown base image kind {base!r}")


def _direction_pool(x_orig: np.ndarray, oracle, candidates, rng: np.random.Generator) -> list:
    """Starting points pushed across the decision boundary.

    Each candidate moves `along` margins along the oracle's effective
    normal plus `lateral` margins in a random orthogonal direction, so the
    boundary crossing sits well away from the analytic optimum and the
    attack has real work to do.
    """
    w_eff, b = oracle.effective_linear()
    w_hat = renormalize(w_eff, 1.0)
    margin = abs(float(np.dot(w_eff.ravel(), x_orig.ravel())) + b) / vec_norm(w_eff)
    pool = []
    for cand in candidates:
        lateral = rng.standard_normal(x_orig.shape)
        lateral -= float(np.dot(lateral.ravel(), w_hat.ravel())) * w_hat
        lateral = renormalize(lateral, 1.0)
        start = x_orig + cand["along"] * margin * w_hat + cand["lateral"] * margin * lateral
        pool.append(clip_to_valid(start))
    return pool


def generate_instances(doc: dict, oracle, context: str = "images") -> list[AttackInstance]:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(f"{context}: image source needs a 'kind'")
    kind = doc["kind"]
    if kind == "directory":
        _check_keys(doc, {"kind", "originals", "pool"}, set(), context)
        originals = sorted(Path(doc["originals"]).glob("*.npy"))
        pool_files = sorted(Path(doc["pool"]).glob("*.npy"))
        if not originals:
            raise ConfigError(f"{context}: no .npy files under {doc['originals']}")
        if not pool_files:
            raise ConfigError(f"{context}: no .npy files under {doc['pool']}")
        pool = [np.load(p).astype(np.float64) for p in pool_files]
        return [AttackInstance(np.load(p).astype(np.float64), pool) for p in originals]
    if kind == "synthetic":
        _check_keys(doc, {"kind", "count", "image_seed", "pool"},
                    {"base", "base_amplitude", "hold_region"}, context)
        count = int(doc["count"])
        if count < 1:
            raise ConfigError(f"{context}: count must be >= 1")
        base = doc.get("base", "smooth")
        amplitude = float(doc.get("base_amplitude", 0.15))
        hold_region = doc.get("hold_region")
        if hold_region is not None and (not isinstance(hold_region, list) or len(hold_region) != 4):
            raise ConfigError(f"{context}: hold_region must be [top, left, height, width]")
        pool_doc = doc["pool"]
        _check_keys(pool_doc, {"mode"}, {"candidates"}, f"{context}.pool")
        if pool_doc["mode"] != "oracle-direction":
            raise ConfigError(f"{context}.pool: unknown mode {pool_doc['mode']!r}")
        if not hasattr(oracle, "effective_linear"):
            raise ConfigError(f"{context}.pool: oracle-direction needs a linear-form oracle")
        candidates = pool_doc.get("candidates", [{"along": 2.0, "lateral": 3.0}])
        for i, cand in enumerate(candidates):
            _check_keys(cand, {"along", "lateral"}, set(), f"{context}.pool.candidates[{i}]")
        instances = []
        seed0 = int(doc["image_seed"])
        for i in range(count):
            x_orig = _synthetic_original(oracle.shape, seed0 + i, base, amplitude, hold_region)
            pool_rng = np.random.default_rng((seed0, i))
            instances.append(AttackInstance(x_orig, _direction_pool(x_orig, oracle, candidates, pool_rng)))
        return instances
    raise ConfigError(f"{context}: unknown image source kind {kind!r}")


# ---------------------------------------------------------------------------
# Top-level experiment config.
# ---------------------------------------------------------------------------

_TOP_REQUIRED = {"oracle", "criterion", "bias_grid", "budget", "threshold",
                 "checkpoints", "seeds", "images", "output_dir"}
_TOP_OPTIONAL = {"surrogate", "step_sizes", "step_mode", "perlin_frequency"}


@dataclass
class ExperimentConfig:
    oracle_spec: dict
    criterion_spec: dict
    bias_grid: list
    budget: int
    threshold: float
    threshold_rule: str
    checkpoints: list
    seeds: list
    images_spec: dict
    output_dir: str
    surrogate_spec: dict | None = None
    step_sizes: StepSizes = field(default_factory=StepSizes)
    step_mode: str = "combined"
    perlin_frequency: float | None = None


def _parse_bias(doc: dict, context: str) -> BiasConfig:
    _check_keys(doc, set(), {"perlin", "mask", "gradient", "gradient_weight"}, context)
    try:
        return BiasConfig(use_perlin=bool(doc.get("perlin", False)),
                          use_mask=bool(doc.get("mask", False)),
                          use_gradient=bool(doc.get("gradient", False)),
                          gradient_weight=float(doc.get("gradient_weight", 0.5)))
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def parse_config(doc: dict) -> ExperimentConfig:
    _check_keys(doc, _TOP_REQUIRED, _TOP_OPTIONAL, "config")

    budget = int(doc["budget"])
    if budget < 1:
        raise ConfigError("config: budget must be >= 1")

    checkpoints = [int(c) for c in doc["checkpoints"]]
    if not checkpoints or checkpoints[0] < 1 \
            or any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ConfigError("config: checkpoints must be positive and strictly increasing")
    if checkpoints[-1] > budget:
        raise ConfigError("config: checkpoints must not exceed the budget")

    seeds = [int(s) for s in doc["seeds"]]
    if not seeds:
        raise ConfigError("config: seeds must be non-empty")

    bias_grid = [_parse_bias(b, f"config.bias_grid[{i}]") for i, b in enumerate(doc["bias_grid"])]
    if not bias_grid:
        raise ConfigError("config: bias_grid must be non-empty")

    # Validate nested specs eagerly so config errors surface before any run.
    oracle = build_oracle(doc["oracle"])
    build_criterion(doc["criterion"])

    threshold_doc = doc["threshold"]
    if threshold_doc == "auto":
        threshold = DEFAULT_THRESHOLD_FACTOR * math.sqrt(oracle.shape.k)
        threshold_rule = "0.05*sqrt(k)"
    else:
        threshold = float(threshold_doc)
        threshold_rule = "explicit"
    if threshold <= 0:
        raise ConfigError("config: threshold must be positive")

    surrogate_spec = doc.get("surrogate")
    if any(b.use_gradient for b in bias_grid) and surrogate_spec is None:
        raise ConfigError("config: bias_grid enables the gradient bias but no surrogate is configured")
    if surrogate_spec is not None:
        build_surrogate(surrogate_spec, oracle)

    step_doc = doc.get("step_sizes", {})
    _check_keys(step_doc, set(), {"orthogonal", "source"}, "config.step_sizes")
    try:
        step_sizes = StepSizes(orthogonal=float(step_doc.get("orthogonal", DEFAULT_STEPS.orthogonal)),
                               source=float(step_doc.get("source", DEFAULT_STEPS.source)))
    except ValueError as exc:
        raise ConfigError(f"config.step_sizes: {exc}") from exc

    step_mode = doc.get("step_mode", "combined")
    if step_mode not in ("combined", "classic"):
        raise ConfigError(f"config: step_mode must be 'combined' or 'classic', got {step_mode!r}")

    frequency = doc.get("perlin_frequency")
    if frequency is not None:
        frequency = float(frequency)
        if frequency <= 0:
            raise ConfigError("config: perlin_frequency must be positive")

    return ExperimentConfig(
        oracle_spec=doc["oracle"],
        criterion_spec=doc["criterion"],
        bias_grid=bias_grid,
        budget=budget,
        threshold=threshold,
        threshold_rule=threshold_rule,
        checkpoints=checkpoints,
        seeds=seeds,
        images_spec=doc["images"],
        output_dir=str(doc["output_dir"]),
        surrogate_spec=surrogate_spec,
        step_sizes=step_sizes,
        step_mode=step_mode,
        perlin_frequency=frequency,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(doc)
