"""Differentiable surrogate models with analytic input gradients.

Surrogates never answer decisions; they only point. Their adversarial
gradient biases candidate sampling, and the same machinery drives the
iterative PGD transfer-attack baseline (surrogate backward pass, black-box
forward pass).

Two model kinds are shipped, both small enough to verify against finite
differences: a linear model (margin loss when binary, softmax
cross-entropy otherwise) and a one-hidden-layer tanh network with softmax
cross-entropy. Parameters load from a JSON file with a shape header and
row-major weights; see load_surrogate.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .engine import AttackResult, _decide
from .errors import DegenerateGradientError, DegenerateSampleError
from .oracles import PHASE_ATTACK, QueryLedger
from .tensor_core import (
    DEGENERACY_EPS,
    ImageShape,
    clip_to_valid,
    project_orthogonal,
    renormalize,
    vec_norm,
)

DEFAULT_RETREAT_FRACTION = 0.05


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


class LinearSurrogate:
    """Affine logits W x + b.

    With two classes the loss is the margin -(logit_t - logit_other), so
    the input gradient is a constant vector; with more classes it is the
    softmax cross-entropy toward the target.
    """

    def __init__(self, weights: np.ndarray, bias: np.ndarray, shape: ImageShape):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[1] != shape.k:
            raise ValueError(f"weights must be (classes, {shape.k}), got {weights.shape}")
        if bias.shape != (weights.shape[0],):
            raise ValueError(f"bias must be ({weights.shape[0]},), got {bias.shape}")
        if weights.shape[0] < 2:
            raise ValueError("need at least 2 classes")
        self.weights = weights
        self.bias = bias
        self.shape = shape

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x.ravel() + self.bias

    def loss(self, x: np.ndarray, target: int) -> float:
        self._check_target(target)
        logits = self.logits(x)
        if self.class_count == 2:
            other = 1 - target
            return float(-(logits[target] - logits[other]))
        return float(-math.log(max(_softmax(logits)[target], 1e-300)))

    def loss_gradient(self, x: np.ndarray, target: int) -> np.ndarray:
        self._check_target(target)
        if self.class_count == 2:
            other = 1 - target
            flat = -(self.weights[target] - self.weights[other])
        else:
            p = _softmax(self.logits(x))
            p[target] -= 1.0
            flat = self.weights.T @ p
        return flat.reshape(self.shape.dims)

    def _check_target(self, target: int) -> None:
        if not 0 <= target < self.class_count:
            raise ValueError(f"target {target} out of range for {self.class_count} classes")


class TwoLayerSurrogate:
    """One hidden layer with a smooth activation (tanh or sine).

    Loss mirrors the linear kind: margin when binary, softmax cross-entropy
    otherwise. Sine keeps hidden units responsive at any input offset, which
    is useful for emulating rapidly varying gradient fields."""

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray,
                 shape: ImageShape, activation: str = "tanh"):
        w1 = np.asarray(w1, dtype=np.float64)
        b1 = np.asarray(b1, dtype=np.float64)
        w2 = np.asarray(w2, dtype=np.float64)
        b2 = np.asarray(b2, dtype=np.float64)
        hidden = w1.shape[0]
        if w1.ndim != 2 or w1.shape[1] != shape.k:
            raise ValueError(f"w1 must be (hidden, {shape.k}), got {w1.shape}")
        if b1.shape != (hidden,) or w2.ndim != 2 or w2.shape[1] != hidden:
            raise ValueError("inconsistent layer shapes")
        if b2.shape != (w2.shape[0],) or w2.shape[0] < 2:
            raise ValueError("inconsistent output shapes")
        if activation not in ("tanh", "sin"):
            raise ValueError(f"activation must be 'tanh' or 'sin', got {activation!r}")
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.shape = shape
        self.activation = activation

    @property
    def class_count(self) -> int:
        return self.w2.shape[0]

    def _hidden(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pre = self.w1 @ x.ravel() + self.b1
        if self.activation == "sin":
            return np.sin(pre), np.cos(pre)
        h = np.tanh(pre)
        return h, 1.0 - h * h

    def logits(self, x: np.ndarray) -> np.ndarray:
        hidden, _ = self._hidden(x)
        return self.w2 @ hidden + self.b2

    def loss(self, x: np.ndarray, target: int) -> float:
        if not 0 <= target < self.class_count:
            raise ValueError(f"target {target} out of range for {self.class_count} classes")
        logits = self.logits(x)
        if self.class_count == 2:
            return float(-(logits[target] - logits[1 - target]))
        return float(-math.log(max(_softmax(logits)[target], 1e-300)))

    def loss_gradient(self, x: np.ndarray, target: int) -> np.ndarray:
        if not 0 <= target < self.class_count:
            raise ValueError(f"target {target} out of range for {self.class_count} classes")
        hidden, d_act = self._hidden(x)
        if self.class_count == 2:
            d_logits = -(self.w2[target] - self.w2[1 - target])
            d_hidden = d_logits * d_act
        else:
            p = _softmax(self.w2 @ hidden + self.b2)
            p[target] -= 1.0
            d_hidden = (self.w2.T @ p) * d_act
        return (self.w1.T @ d_hidden).reshape(self.shape.dims)


def adversarial_gradient(model, x: np.ndarray, target: int) -> np.ndarray:
    """Input direction that increases the target-class score (loss descent)."""
    return -model.loss_gradient(x, target)


def projected_surrogate_direction(model, x_adv: np.ndarray, x_orig: np.ndarray, target: int,
                                  retreat_fraction: float = DEFAULT_RETREAT_FRACTION) -> np.ndarray:
    """Unit surrogate direction on the orthogonal-step hyperplane.

    The gradient is evaluated a small fraction of the way back toward the
    original image (the current point is adversarial, so stepping back
    usually lands in a non-adversarial region), then projected orthogonally
    to the source direction and normalized.
    """
    if not 0.0 <= retreat_fraction < 1.0:
        raise ValueError(f"retreat_fraction must be in [0, 1), got {retreat_fraction}")
    source = x_orig - x_adv
    if vec_norm(source) <= DEGENERACY_EPS:
        raise DegenerateGradientError("x_adv equals x_orig; no source direction")
    x_eval = x_adv + retreat_fraction * source
    grad = adversarial_gradient(model, x_eval, target)
    # Only the direction matters. Rescale by the peak component before
    # normalizing so a tiny-but-directional gradient (e.g. shrunk by a
    # saturated softmax prefactor) is not mistaken for a degenerate one.
    peak = float(np.abs(grad).max())
    if not peak > 0.0 or not np.isfinite(peak):
        raise DegenerateGradientError("surrogate gradient is zero")
    try:
        grad = renormalize(grad / peak, 1.0)
        projected = project_orthogonal(grad, source)
    except DegenerateSampleError as exc:
        raise DegenerateGradientError(
            "surrogate gradient is zero or parallel to the source direction") from exc
    return renormalize(projected, 1.0)


def make_gradient_provider(model, x_orig: np.ndarray, target: int,
                           retreat_fraction: float = DEFAULT_RETREAT_FRACTION):
    """Per-step direction callback for the attack engine.

    Returns None when the projected gradient degenerates, which tells the
    engine to fall back to unbiased sampling for that step.
    """

    def provider(x_adv: np.ndarray):
        try:
            return projected_surrogate_direction(model, x_adv, x_orig, target, retreat_fraction)
        except DegenerateGradientError:
            return None

    return provider


def pgd_transfer_attack(model, oracle, criterion, x_orig: np.ndarray, target: int,
                        step_size: float, steps: int | None = None, budget: int = 1,
                        threshold: float = math.inf) -> AttackResult:
    """Iterative PGD driven by the surrogate, checked against the black box.

    Each iteration moves step_size along the normalized surrogate ascent
    direction, clips to the pixel box, and spends one oracle query; the
    attack stops at the first adversarial point or when budget/steps run
    out. A budget below 1 is a caller error.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if step_size <= 0:
        raise ValueError(f"step_size must be positive, got {step_size}")
    max_iters = budget if steps is None else min(steps, budget)

    ledger = QueryLedger()
    x = x_orig.copy()
    best = math.inf
    best_x = None
    for _ in range(max_iters):
        grad = adversarial_gradient(model, x, target)
        norm = vec_norm(grad)
        if norm <= DEGENERACY_EPS:
            break
        x = clip_to_valid(x + step_size * grad / norm)
        adversarial, dist, accepted = _decide(oracle, criterion, x, x_orig, ledger, PHASE_ATTACK, best)
        if accepted:
            best = dist
            best_x = x.copy()
        if adversarial:
            break
    distance = best if best_x is not None else math.inf
    success = best_x is not None and distance <= threshold
    return AttackResult(x_adv=best_x, distance=distance, queries=ledger.total_queries,
                        success=success, threshold=threshold, trace=ledger.trace, ledger=ledger)


# ---------------------------------------------------------------------------
# Parameter files: JSON with a shape header and row-major weight lists.
# ---------------------------------------------------------------------------


def save_surrogate(model, path) -> None:
    if isinstance(model, LinearSurrogate):
        doc = {
            "kind": "linear",
            "shape": list(model.shape.dims),
            "class_count": model.class_count,
            "weights": model.weights.ravel().tolist(),
            "bias": model.bias.tolist(),
        }
    elif isinstance(model, TwoLayerSurrogate):
        doc = {
            "kind": "mlp",
            "shape": list(model.shape.dims),
            "class_count": model.class_count,
            "hidden": int(model.w1.shape[0]),
            "activation": model.activation,
            "w1": model.w1.ravel().tolist(),
            "b1": model.b1.tolist(),
            "w2": model.w2.ravel().tolist(),
            "b2": model.b2.tolist(),
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_surrogate(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    shape = ImageShape(*doc["shape"])
    classes = int(doc["class_count"])
    if doc["kind"] == "linear":
        weights = np.asarray(doc["weights"], dtype=np.float64).reshape(classes, shape.k)
        return LinearSurrogate(weights, np.asarray(doc["bias"]), shape)
    if doc["kind"] == "mlp":
        hidden = int(doc["hidden"])
        return TwoLayerSurrogate(
            np.asarray(doc["w1"], dtype=np.float64).reshape(hidden, shape.k),
            np.asarray(doc["b1"], dtype=np.float64),
            np.asarray(doc["w2"], dtype=np.float64).reshape(classes, hidden),
            np.asarray(doc["b2"], dtype=np.float64),
            shape,
            activation=doc.get("activation", "tanh"),
        )
    raise ValueError(f"unknown surrogate kind {doc['kind']!r}")
