"""Log-space probability kernels.

All mass computations go through logsumexp in max-subtraction form; the
constrained distribution is built division-free as exp(logP - logZ) so that a
tiny allowed mass Z never amplifies rounding error. Banned / filtered-out
entries are represented by the float -inf sentinel, never by a large negative
constant, so exp() maps them to an exact zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, NoAllowedMass, SupportViolation

# Tolerance policy: 1e-9 for distribution identities, 1e-12 for shift
# invariance (double precision over vocabularies up to 65536).
ATOL_DIST = 1e-9
ATOL_SHIFT = 1e-12

NEG_INF = float("-inf")


def _frozen_f64(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LogitVector:
    """Raw pre-softmax scores; -inf entries are allowed, NaN and +inf are not."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_f64(self.values)
        if np.isnan(arr).any():
            raise ValueError("logits contain NaN")
        if np.isposinf(arr).any():
            raise ValueError("logits contain +inf")
        if not np.isfinite(arr).any():
            raise NoAllowedMass("all logits are -inf")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class LogProbVector:
    """Normalized log-probabilities: entries <= 0 (or -inf), logsumexp == 0."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_f64(self.values)
        if np.isnan(arr).any():
            raise ValueError("log-probabilities contain NaN")
        finite = np.isfinite(arr)
        if not finite.any():
            raise NoAllowedMass("all log-probabilities are -inf")
        if arr[finite].max() > ATOL_SHIFT:
            raise ValueError("log-probabilities contain a positive entry")
        lse = _logsumexp(arr[finite])
        if abs(lse) > ATOL_DIST:
            raise ValueError(f"log-probabilities not normalized: logsumexp = {lse}")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ProbVector:
    """A probability distribution: nonnegative entries summing to 1."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_f64(self.values)
        if np.isnan(arr).any():
            raise ValueError("probabilities contain NaN")
        if arr.min() < 0.0:
            raise ValueError("probabilities contain a negative entry")
        if arr.max() > 1.0 + ATOL_DIST:
            raise ValueError("probabilities contain an entry > 1")
        total = float(arr.sum())
        if abs(total - 1.0) > ATOL_DIST:
            raise ValueError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class IndexSet:
    """Sorted, duplicate-free token indices."""

    indices: tuple = field(default=())

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing")
        if idx and idx[0] < 0:
            raise ValueError("negative token index")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_iterable(cls, it: Iterable[int]) -> "IndexSet":
        return cls(tuple(sorted(set(int(i) for i in it))))

    def mask(self, size: int) -> np.ndarray:
        """Boolean membership mask of the given length."""
        if self.indices and self.indices[-1] >= size:
            raise ValueError(f"index {self.indices[-1]} out of range for size {size}")
        m = np.zeros(size, dtype=bool)
        if self.indices:
            m[list(self.indices)] = True
        return m

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i: int) -> bool:
        return i in set(self.indices)


Logits = Union[LogitVector, Sequence[float], np.ndarray]
LogProbs = Union[LogProbVector, Sequence[float], np.ndarray]
Probs = Union[ProbVector, Sequence[float], np.ndarray]
Banned = Union[IndexSet, Iterable[int]]


def as_logits(x: Logits) -> LogitVector:
    return x if isinstance(x, LogitVector) else LogitVector(np.asarray(x, dtype=np.float64))


def as_logprobs(x: LogProbs) -> LogProbVector:
    return x if isinstance(x, LogProbVector) else LogProbVector(np.asarray(x, dtype=np.float64))


def as_probs(x: Probs) -> ProbVector:
    return x if isinstance(x, ProbVector) else ProbVector(np.asarray(x, dtype=np.float64))


def as_index_set(x: Banned) -> IndexSet:
    return x if isinstance(x, IndexSet) else IndexSet.from_iterable(x)


def _logsumexp(finite: np.ndarray) -> float:
    m = float(finite.max())
    return m + float(np.log(np.exp(finite - m).sum()))


def log_softmax(logits: Logits) -> LogProbVector:
    """Normalize logits into log-probabilities; -inf inputs stay -inf."""
    z = as_logits(logits).values
    finite = np.isfinite(z)
    lse = _logsumexp(z[finite])
    out = np.where(finite, z - lse, NEG_INF)
    return LogProbVector(out)


def softmax(logits: Logits) -> ProbVector:
    return ProbVector(np.exp(log_softmax(logits).values))


def allowed_log_mass(logprobs: LogProbs, banned: Banned) -> float:
    """log Z: logsumexp of the log-probabilities outside the banned set.

    Computed entirely in log space; raises instead of returning -inf when the
    allowed set carries no mass.
    """
    lp = as_logprobs(logprobs).values
    bmask = as_index_set(banned).mask(len(lp))
    allowed = lp[~bmask]
    if allowed.size == 0 or not np.isfinite(allowed).any():
        raise NoAllowedMass("banned set covers all probability mass")
    return _logsumexp(allowed[np.isfinite(allowed)])


def constrained_distribution(logprobs: LogProbs, banned: Banned) -> ProbVector:
    """The KL-optimal constrained distribution: renormalize allowed mass, zero the rest."""
    lpv = as_logprobs(logprobs)
    bset = as_index_set(banned)
    log_z = allowed_log_mass(lpv, bset)
    bmask = bset.mask(len(lpv))
    q = np.where(bmask, 0.0, np.exp(lpv.values - log_z))
    return ProbVector(q)


def kl_divergence(q: Probs, p: Probs) -> float:
    """D_KL(q || p) with the 0 * log(0/.) = 0 convention."""
    qv = as_probs(q).values
    pv = as_probs(p).values
    if len(qv) != len(pv):
        raise DimensionMismatch(f"lengths differ: {len(qv)} vs {len(pv)}")
    support = qv > 0.0
    if np.any(support & (pv == 0.0)):
        raise SupportViolation("q assigns mass where p is zero")
    return float(np.sum(qv[support] * np.log(qv[support] / pv[support])))


def total_variation(q: Probs, p: Probs) -> float:
    """0.5 * L1 distance between two distributions."""
    qv = as_probs(q).values
    pv = as_probs(p).values
    if len(qv) != len(pv):
        raise DimensionMismatch(f"lengths differ: {len(qv)} vs {len(pv)}")
    return 0.5 * float(np.abs(qv - pv).sum())
