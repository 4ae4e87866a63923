"""Decision oracles, adversarial criteria and exact query accounting.

An oracle is the black box under attack: image in, ranked label list out.
Decisions are reduced to booleans by an adversarial criterion, so any
label-level goal (exact target, label groups, substring inclusion or
exclusion) can drive the same attack loop. Every successful oracle
evaluation is counted in a QueryLedger; that count is the budget currency
of the whole threat model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ShapeMismatchError
from .tensor_core import ImageShape

MAX_WIRE_LABELS = 32


@dataclass(frozen=True)
class RankedLabel:
    name: str
    rank: int


@dataclass(frozen=True)
class LabelSet:
    """Ordered label list; rank 1 is the model's top prediction."""

    labels: tuple[RankedLabel, ...]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("label set must be non-empty")
        if self.labels[0].rank != 1:
            raise ValueError("first label must have rank 1")
        for prev, cur in zip(self.labels, self.labels[1:]):
            if cur.rank <= prev.rank:
                raise ValueError("ranks must be strictly increasing")

    @property
    def top1(self) -> str:
        return self.labels[0].name

    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)

    @classmethod
    def single(cls, name: str) -> "LabelSet":
        return cls(labels=(RankedLabel(name=name, rank=1),))

    @classmethod
    def ranked(cls, names) -> "LabelSet":
        return cls(labels=tuple(RankedLabel(name=n, rank=i + 1) for i, n in enumerate(names)))


# ---------------------------------------------------------------------------
# Adversarial criteria: total boolean functions of a LabelSet.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactTarget:
    """True when the top-1 label equals the target."""

    target: str

    def matches(self, labels: LabelSet) -> bool:
        return labels.top1 == self.target


@dataclass(frozen=True)
class LabelInSet:
    """True when the top-1 label is one of the allowed labels."""

    allowed: frozenset[str]

    def matches(self, labels: LabelSet) -> bool:
        return labels.top1 in self.allowed


@dataclass(frozen=True)
class SubstringMatch:
    """Substring goal: required must occur in top-1, forbidden nowhere.

    The required substring is checked against the top-1 label only; each
    forbidden substring is checked against every returned label.
    """

    required: str
    forbidden: tuple[str, ...] = ()

    def matches(self, labels: LabelSet) -> bool:
        if self.required not in labels.top1:
            return False
        for name in labels.names():
            for bad in self.forbidden:
                if bad in name:
                    return False
        return True


@dataclass(frozen=True)
class Compound:
    """Boolean AND/OR combination of criteria."""

    op: str
    children: tuple

    def __post_init__(self):
        if self.op not in ("and", "or"):
            raise ValueError(f"op must be 'and' or 'or', got {self.op!r}")
        if not self.children:
            raise ValueError("compound criterion needs at least one child")

    def matches(self, labels: LabelSet) -> bool:
        results = (child.matches(labels) for child in self.children)
        return all(results) if self.op == "and" else any(results)


def is_adversarial(criterion, labels: LabelSet) -> bool:
    """Evaluate a criterion against a label set."""
    return bool(criterion.matches(labels))


# ---------------------------------------------------------------------------
# Query accounting.
# ---------------------------------------------------------------------------

PHASE_INITIALIZATION = "initialization"
PHASE_ATTACK = "attack"


@dataclass
class TraceEntry:
    """One oracle evaluation: 1-based index, queried-point distance to the
    original, the criterion verdict, and the best (accepted) distance after
    this query (inf until a criterion-satisfying point exists)."""

    query_index: int
    distance: float
    adversarial: bool
    best_distance: float


@dataclass
class QueryLedger:
    """Exact count of oracle evaluations, split by phase, with a trace."""

    phase_counts: dict = field(default_factory=lambda: {PHASE_INITIALIZATION: 0, PHASE_ATTACK: 0})
    trace: list = field(default_factory=list)

    @property
    def total_queries(self) -> int:
        return sum(self.phase_counts.values())

    def count(self, phase: str = PHASE_ATTACK) -> int:
        """Record one evaluation; returns the 1-based query index."""
        self.phase_counts[phase] = self.phase_counts.get(phase, 0) + 1
        return self.total_queries

    def record_trace(self, query_index: int, distance: float, adversarial: bool, best_distance: float) -> None:
        self.trace.append(TraceEntry(query_index, float(distance), bool(adversarial), float(best_distance)))


def query(oracle, x: np.ndarray, ledger: QueryLedger | None = None, phase: str = PHASE_ATTACK) -> LabelSet:
    """Evaluate the oracle once, incrementing the ledger on success.

    A failed evaluation (e.g. remote transport error) raises before the
    ledger is touched, so the budget only counts actual model answers.
    """
    if x.shape != oracle.shape.dims:
        raise ShapeMismatchError(f"oracle expects {oracle.shape.dims}, got {x.shape}")
    labels = oracle.predict(x)
    if ledger is not None:
        ledger.count(phase)
    return labels


# ---------------------------------------------------------------------------
# Toy oracles with analytically known geometry.
# ---------------------------------------------------------------------------


class LinearOracle:
    """sign(a . x + b): 'pos' on the positive side, 'neg' otherwise.

    The minimal adversarial l2 distance from any x is |a . x + b| / ||a||,
    which acceptance tests use as the ground-truth optimum.
    """

    concurrency_safe = True

    def __init__(self, weights: np.ndarray, offset: float, shape: ImageShape | None = None,
                 labels: tuple[str, str] = ("pos", "neg")):
        weights = np.asarray(weights, dtype=np.float64)
        if shape is None:
            shape = ImageShape.from_array(weights)
        self.shape = shape
        self.weights = weights.reshape(shape.dims)
        self.offset = float(offset)
        self.positive_label, self.negative_label = labels

    def score(self, x: np.ndarray) -> float:
        return float(np.dot(self.weights.ravel(), x.ravel()) + self.offset)

    def boundary_distance(self, x: np.ndarray) -> float:
        return abs(self.score(x)) / float(np.linalg.norm(self.weights.ravel()))

    def predict(self, x: np.ndarray) -> LabelSet:
        name = self.positive_label if self.score(x) > 0 else self.negative_label
        return LabelSet.single(name)

    def effective_linear(self) -> tuple[np.ndarray, float]:
        """The oracle's decision function as (w, b) over raw inputs."""
        return self.weights.copy(), self.offset


def box_blur(x: np.ndarray, radius: int) -> np.ndarray:
    """Per-channel box blur with zero padding (window side 2*radius + 1).

    Zero padding keeps the operator symmetric, so it is its own adjoint;
    composed toy oracles rely on that to expose an exact linear form.
    """
    if radius < 1:
        raise ValueError(f"blur radius must be >= 1, got {radius}")
    size = 2 * radius + 1
    return uniform_filter(x, size=(size, size, 1), mode="constant", cval=0.0)


class LowpassOracle:
    """Delegates to an inner oracle after box-blurring the input.

    High-frequency perturbations are strongly attenuated before they reach
    the inner decision function.
    """

    concurrency_safe = True

    def __init__(self, inner, radius: int = 2):
        self.inner = inner
        self.radius = int(radius)
        self.shape = inner.shape
        if self.radius < 1:
            raise ValueError(f"blur radius must be >= 1, got {radius}")

    def predict(self, x: np.ndarray) -> LabelSet:
        return self.inner.predict(box_blur(x, self.radius))

    def effective_linear(self) -> tuple[np.ndarray, float]:
        w, b = self.inner.effective_linear()
        return box_blur(w, self.radius), b


class RegionOracle:
    """Delegates to an inner oracle after zeroing everything outside a
    (top, left, height, width) rectangle; only the region can matter."""

    concurrency_safe = True

    def __init__(self, inner, region: tuple[int, int, int, int]):
        self.inner = inner
        self.shape = inner.shape
        top, left, height, width = (int(v) for v in region)
        if height < 1 or width < 1 or top < 0 or left < 0:
            raise ValueError(f"invalid region {region}")
        if top + height > self.shape.height or left + width > self.shape.width:
            raise ValueError(f"region {region} exceeds image bounds {self.shape.dims}")
        self.region = (top, left, height, width)

    def _mask(self, x: np.ndarray) -> np.ndarray:
        top, left, height, width = self.region
        out = np.zeros_like(x)
        out[top:top + height, left:left + width, :] = x[top:top + height, left:left + width, :]
        return out

    def predict(self, x: np.ndarray) -> LabelSet:
        return self.inner.predict(self._mask(x))

    def effective_linear(self) -> tuple[np.ndarray, float]:
        w, b = self.inner.effective_linear()
        return self._mask(w), b


class FixedLabelOracle:
    """Always answers with the same label list; handy as a wire-format stub."""

    concurrency_safe = True

    def __init__(self, shape: ImageShape, names):
        self.shape = shape
        self._labels = LabelSet.ranked(tuple(names))

    def predict(self, x: np.ndarray) -> LabelSet:
        return self._labels
