"""Exception hierarchy shared by all gidle modules."""


class GidleError(Exception):
    """Base class for all errors raised by this package."""


class NoAllowedMass(GidleError):
    """Every token is banned or carries zero probability; log Z would be -inf."""


class NoAllowedTokens(GidleError):
    """A ban set (or filter) would leave no token available for sampling."""


class SupportViolation(GidleError):
    """KL divergence requested where q puts mass outside the support of p."""


class DimensionMismatch(GidleError):
    """Two vectors that must share a length do not."""


class ConfigError(GidleError):
    """Invalid stage or run configuration (bad temperature, k, p, gamma, ...)."""


class ManifestError(GidleError):
    """Malformed vocabulary manifest or run manifest."""


class EosBanError(GidleError):
    """An explicit ban list names the end-of-sequence token."""


class CorpusError(GidleError):
    """Training corpus is empty or contains out-of-vocabulary token ids."""


class InvalidDistribution(GidleError):
    """A probability vector with no positive mass was handed to the sampler."""


class EmptySample(GidleError):
    """Statistics requested over an empty score sequence."""


class PipelineStageError(GidleError):
    """A pipeline stage failed; carries the zero-based stage index."""

    def __init__(self, stage_index: int, cause: Exception):
        self.stage_index = stage_index
        self.cause = cause
        super().__init__(f"pipeline stage {stage_index} failed: {cause}")
