"""Logit processors: the two masking strategies plus standard sampler stages.

Both masking strategies induce the same softmax distribution (softmax is
shift-invariant), so they are kept behaviorally separate on purpose: the point
of this package is to measure where downstream pipeline stages make them
diverge. RepetitionPenalty is the deliberately non-shift-invariant stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, NoAllowedTokens, PipelineStageError
from .numerics import (
    NEG_INF,
    Banned,
    IndexSet,
    LogitVector,
    Logits,
    allowed_log_mass,
    as_index_set,
    as_logits,
    log_softmax,
)
from .vocab import BanSet


@dataclass(frozen=True)
class StepContext:
    """Generation history visible to a processor."""

    prior_tokens: tuple = ()
    step_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prior_tokens", tuple(int(t) for t in self.prior_tokens))
        if self.step_index < 0:
            raise ConfigError("step_index must be >= 0")


def _ban_indices(banned: Union[BanSet, Banned]) -> IndexSet:
    return banned.indices if isinstance(banned, BanSet) else as_index_set(banned)


def _check_proper(z: np.ndarray, bmask: np.ndarray) -> None:
    if bmask.all() or not np.isfinite(z[~bmask]).any():
        raise NoAllowedTokens("masking would leave no allowed token")


def naive_mask(logits: Logits, banned: Union[BanSet, Banned]) -> LogitVector:
    """Set banned logits to -inf; allowed entries pass through bit-identically."""
    z = as_logits(logits).values
    bmask = _ban_indices(banned).mask(len(z))
    _check_proper(z, bmask)
    return LogitVector(np.where(bmask, NEG_INF, z))


def gidle_process(logits: Logits, banned: Union[BanSet, Banned]) -> LogitVector:
    """Rewrite allowed logits to log P - log Z: exact log-probabilities of the
    KL-optimal constrained distribution. Banned entries become -inf."""
    lp = log_softmax(logits)
    bset = _ban_indices(banned)
    bmask = bset.mask(len(lp))
    _check_proper(lp.values, bmask)
    log_z = allowed_log_mass(lp, bset)
    return LogitVector(np.where(bmask, NEG_INF, lp.values - log_z))


def temperature_scale(logits: Logits, t: float) -> LogitVector:
    if not t > 0:
        raise ConfigError(f"temperature must be > 0, got {t}")
    z = as_logits(logits).values
    return LogitVector(np.where(np.isfinite(z), z / t, z))


def top_k_filter(logits: Logits, k: int) -> LogitVector:
    """Keep the k largest finite logits, ties broken toward lower index."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    z = as_logits(logits).values
    finite = np.flatnonzero(np.isfinite(z))
    if finite.size == 0:
        raise NoAllowedTokens("no finite logits to keep")
    if k >= finite.size:
        return LogitVector(z)
    # stable argsort on -z keeps the lower index first among ties
    order = finite[np.argsort(-z[finite], kind="stable")]
    out = np.full_like(z, NEG_INF)
    keep = order[:k]
    out[keep] = z[keep]
    return LogitVector(out)


def top_p_filter(logits: Logits, p: float) -> LogitVector:
    """Nucleus filter: smallest probability-sorted prefix with cumulative mass >= p."""
    if not 0 < p <= 1:
        raise ConfigError(f"p must be in (0, 1], got {p}")
    z = as_logits(logits).values
    probs = np.exp(log_softmax(z).values)
    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])
    # always keep at least one token; 1e-12 slack absorbs cumsum rounding at p=1
    n_keep = int(np.searchsorted(cum, p - 1e-12, side="left")) + 1
    n_keep = min(n_keep, len(order))
    keep = order[:n_keep]
    out = np.full_like(z, NEG_INF)
    out[keep] = z[keep]
    return LogitVector(out)


def repetition_penalty(logits: Logits, context: StepContext, gamma: float) -> LogitVector:
    """Sign-dependent multiplicative penalty on tokens already generated.

    Positive logits are divided by gamma, nonpositive ones multiplied; this is
    the minimal standard stage that is not shift-invariant.
    """
    if gamma < 1:
        raise ConfigError(f"gamma must be >= 1, got {gamma}")
    z = np.array(as_logits(logits).values, copy=True)
    seen = sorted(set(context.prior_tokens))
    for tid in seen:
        if tid < len(z) and np.isfinite(z[tid]):
            z[tid] = z[tid] / gamma if z[tid] > 0 else z[tid] * gamma
    return LogitVector(z)


# ---------------------------------------------------------------------------
# Stage descriptors and pipeline composition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NaiveMask:
    banset: Union[BanSet, IndexSet]

    def apply(self, context: StepContext, logits: LogitVector) -> LogitVector:
        return naive_mask(logits, self.banset)


@dataclass(frozen=True)
class Gidle:
    banset: Union[BanSet, IndexSet]

    def apply(self, context: StepContext, logits: LogitVector) -> LogitVector:
        return gidle_process(logits, self.banset)


@dataclass(frozen=True)
class Temperature:
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ConfigError(f"temperature must be > 0, got {self.t}")

    def apply(self, context: StepContext, logits: LogitVector) -> LogitVector:
        return temperature_scale(logits, self.t)


@dataclass(frozen=True)
class TopK:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")

    def apply(self, context: StepContext, logits: LogitVector) -> LogitVector:
        return top_k_filter(logits, self.k)


@dataclass(frozen=True)
class TopP:
    p: float

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ConfigError(f"p must be in (0, 1], got {self.p}")

    def apply(self, context: StepContext, logits: LogitVector) -> LogitVector:
        return top_p_filter(logits, self.p)


@dataclass(frozen=True)
class RepetitionPenalty:
    gamma: float

    def __post_init__(self):
        if self.gamma < 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")

    def apply(self, context: StepContext, logits: LogitVector) -> LogitVector:
        return repetition_penalty(logits, context, self.gamma)


Stage = Union[NaiveMask, Gidle, Temperature, TopK, TopP, RepetitionPenalty]

MASK_STAGES = (NaiveMask, Gidle)
SHIFT_INVARIANT_STAGES = (NaiveMask, Gidle, Temperature, TopK, TopP)


@dataclass(frozen=True)
class Pipeline:
    stages: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    def banned_indices(self) -> IndexSet:
        """Union of ban sets over all masking stages."""
        ids: set = set()
        for stage in self.stages:
            if isinstance(stage, MASK_STAGES):
                ids.update(_ban_indices(stage.banset))
        return IndexSet.from_iterable(ids)

    def has_mask_stage(self) -> bool:
        return any(isinstance(s, MASK_STAGES) for s in self.stages)

    def has_non_shift_invariant_stage(self) -> bool:
        return any(not isinstance(s, SHIFT_INVARIANT_STAGES) for s in self.stages)


def run_pipeline(pipeline: Pipeline, context: StepContext, logits: Logits) -> LogitVector:
    """Apply stages strictly in order; stage failures carry the stage index."""
    out = as_logits(logits)
    for i, stage in enumerate(pipeline.stages):
        try:
            out = stage.apply(context, out)
        except Exception as exc:
            raise PipelineStageError(i, exc) from exc
    return out
