"""Seeded autoregressive generation: model -> pipeline -> softmax -> sample.

The PRNG is splitmix64 with inverse-CDF categorical sampling: trivially
portable, so token sequences are reproducible bit-for-bit across platforms
and languages. Exactly one uniform variate is consumed per multinomial step,
keeping differently-masked arms seed-aligned for paired comparisons.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidDistribution
from .numerics import ProbVector, allowed_log_mass, as_probs, log_softmax
from .processors import Pipeline, StepContext, run_pipeline
from .toylm import Model

MAX_TOKENS_LIMIT = 65536

_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64_next(state: int) -> tuple:
    """One splitmix64 step: returns (output, next_state)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return z, state


def splitmix64_uniform(state: int) -> tuple:
    """One uniform variate in [0, 1) with 53 random bits; returns (u, next_state)."""
    z, state = splitmix64_next(state)
    return (z >> 11) * 2.0**-53, state


@dataclass(frozen=True)
class SamplerSpec:
    kind: str = "multinomial"  # greedy | multinomial
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("greedy", "multinomial"):
            raise ConfigError(f"unknown sampler kind: {self.kind}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")


def sample_token(probs, sampler: SamplerSpec, rng_state: int) -> tuple:
    """Draw one token id; returns (token_id, next_rng_state).

    Greedy takes the argmax (lowest index on ties) and leaves the rng state
    untouched. Multinomial consumes exactly one uniform variate and inverts
    the CDF built by cumulative sums in index order.
    """
    try:
        p = as_probs(probs).values
    except ValueError as exc:
        raw = np.asarray(getattr(probs, "values", probs), dtype=np.float64)
        if not (raw > 0).any():
            raise InvalidDistribution("no positive probability mass") from exc
        raise
    if sampler.kind == "greedy":
        return int(np.argmax(p)), rng_state
    u, rng_state = splitmix64_uniform(rng_state)
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, u, side="right"))
    if idx >= len(p):  # u landed beyond cum[-1] by rounding; take last positive
        idx = int(np.flatnonzero(p > 0)[-1])
    return idx, rng_state


@dataclass(frozen=True)
class GenerationConfig:
    max_tokens: int
    pipeline: Pipeline = field(default_factory=Pipeline)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)

    def __post_init__(self):
        if not 1 <= self.max_tokens <= MAX_TOKENS_LIMIT:
            raise ConfigError(f"max_tokens must be in [1, {MAX_TOKENS_LIMIT}]")


@dataclass(frozen=True)
class StepTrace:
    step_index: int
    z: float  # allowed mass of the raw distribution at this step
    chosen: int
    digest_raw: str
    digest_proc: str


@dataclass(frozen=True)
class GenerationResult:
    tokens: tuple
    finished: str  # "eos" | "length"
    steps: tuple


def logit_digest(values: np.ndarray) -> str:
    """Order-preserving 64-bit hash of the vector rounded at 1e-9."""
    quantized = np.where(
        np.isfinite(values),
        np.round(np.clip(values, -9e9, 9e9) * 1e9),
        np.float64(-(2**62)),  # sentinel for -inf
    ).astype(np.int64)
    return hashlib.blake2b(quantized.tobytes(), digest_size=8).hexdigest()


def generate(model: Model, prompt: Sequence[int], config: GenerationConfig, on_step=None) -> GenerationResult:
    """Run the decode loop; fully deterministic given (model, prompt, config).

    on_step, when given, is called with (raw LogitVector, processed
    LogitVector, StepTrace) after each step — the hook diagnostics uses to
    compute per-step distortion without re-running the model.
    """
    eos = model.vocab.eos_id
    banned = config.pipeline.banned_indices()
    rng_state = config.sampler.seed
    emitted: list = []
    steps: list = []
    finished = "length"

    for step_index in range(config.max_tokens):
        context = StepContext(prior_tokens=tuple(prompt) + tuple(emitted), step_index=step_index)
        raw = model.next_logits(context)
        processed = run_pipeline(config.pipeline, context, raw)
        probs = ProbVector(np.exp(log_softmax(processed).values))
        chosen, rng_state = sample_token(probs, config.sampler, rng_state)

        z = math.exp(allowed_log_mass(log_softmax(raw), banned)) if len(banned) else 1.0
        trace = StepTrace(
            step_index=step_index,
            z=z,
            chosen=chosen,
            digest_raw=logit_digest(raw.values),
            digest_proc=logit_digest(processed.values),
        )
        steps.append(trace)
        if on_step is not None:
            on_step(raw, processed, trace)
        emitted.append(chosen)
        if chosen == eos:
            finished = "eos"
            break

    return GenerationResult(tokens=tuple(emitted), finished=finished, steps=tuple(steps))


def result_to_jsonl(result: GenerationResult, header: dict) -> str:
    """Line-delimited trace: header record, then one record per step."""
    lines = [json.dumps({"type": "header", **header}, sort_keys=True)]
    for s in result.steps:
        lines.append(
            json.dumps(
                {
                    "i": s.step_index,
                    "z": s.z,
                    "chosen": s.chosen,
                    "digest_raw": s.digest_raw,
                    "digest_proc": s.digest_proc,
                },
                sort_keys=True,
            )
        )
    lines.append(json.dumps({"type": "end", "finished": result.finished, "tokens": list(result.tokens)}, sort_keys=True))
    return "\n".join(lines) + "\n"
