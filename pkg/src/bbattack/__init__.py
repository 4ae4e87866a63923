"""Decision-based boundary attacks with biased hypersphere sampling."""

from .biases import BiasConfig, apply_mask, compute_mask, generate_candidate, mix_gradient
from .engine import (
    AttackResult,
    AttackState,
    StepSizes,
    adapt_step_sizes,
    initialize,
    run_bba,
    run_random_guessing,
)
from .oracles import (
    Compound,
    ExactTarget,
    FixedLabelOracle,
    LabelInSet,
    LabelSet,
    LinearOracle,
    LowpassOracle,
    QueryLedger,
    RegionOracle,
    SubstringMatch,
    is_adversarial,
    query,
)
from .perlin import PerlinParams, default_frequency, sample_perlin, shuffle_permutation
from .remote import RemoteOracle
from .surrogate import (
    LinearSurrogate,
    TwoLayerSurrogate,
    adversarial_gradient,
    load_surrogate,
    make_gradient_provider,
    pgd_transfer_attack,
    projected_surrogate_direction,
    save_surrogate,
)
from .tensor_core import ImageShape, clip_to_valid, l2_distance, project_orthogonal, renormalize

__version__ = "0.1.0"

__all__ = [
    "AttackResult",
    "AttackState",
    "BiasConfig",
    "Compound",
    "ExactTarget",
    "FixedLabelOracle",
    "ImageShape",
    "LabelInSet",
    "LabelSet",
    "LinearOracle",
    "LinearSurrogate",
    "LowpassOracle",
    "PerlinParams",
    "QueryLedger",
    "RegionOracle",
    "RemoteOracle",
    "StepSizes",
    "SubstringMatch",
    "TwoLayerSurrogate",
    "adapt_step_sizes",
    "adversarial_gradient",
    "apply_mask",
    "clip_to_valid",
    "compute_mask",
    "default_frequency",
    "generate_candidate",
    "initialize",
    "is_adversarial",
    "l2_distance",
    "load_surrogate",
    "make_gradient_provider",
    "mix_gradient",
    "pgd_transfer_attack",
    "project_orthogonal",
    "projected_surrogate_direction",
    "query",
    "renormalize",
    "run_bba",
    "run_random_guessing",
    "sample_perlin",
    "save_surrogate",
    "shuffle_permutation",
]
