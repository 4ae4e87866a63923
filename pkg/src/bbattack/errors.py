"""Exception types shared across the package."""


class BBAttackError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(BBAttackError):
    """Two tensors that must share a shape do not."""


class DegenerateDirectionError(BBAttackError):
    """A direction vector has (numerically) zero norm and cannot be used."""


class DegenerateSampleError(BBAttackError):
    """A sampled or derived vector collapsed to zero; the caller should resample."""


class DegenerateGradientError(BBAttackError):
    """A surrogate gradient is parallel to the source direction; fall back to unbiased sampling."""


class SamplingExhaustedError(BBAttackError):
    """Candidate resampling hit its retry bound without producing a usable vector."""


class InitializationError(BBAttackError):
    """No starting point satisfying the adversarial criterion could be established."""


class RemoteUnavailableError(BBAttackError):
    """The remote oracle stayed unreachable after all retries."""


class ProtocolError(BBAttackError):
    """The remote oracle answered with a malformed or out-of-contract response."""


class ConfigError(BBAttackError):
    """An experiment configuration is invalid (unknown keys, bad values, missing fields)."""
