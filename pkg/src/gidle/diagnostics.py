"""Distortion measurement and the three-arm variance experiment.

Arms: baseline (no masking), naive (-inf masking), gidle (renormalized
masking). A deterministic proxy scorer replaces external judging: it scores
allowed-script purity on [1, 5], so ban leakage shows up directly in the
mean/variance table. Variance is the unbiased (n-1) estimator; the report
header records that choice along with the ban mode.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptySample, GidleError
from .numerics import (
    IndexSet,
    Logits,
    allowed_log_mass,
    as_index_set,
    constrained_distribution,
    kl_divergence,
    log_softmax,
    softmax,
    total_variation,
)
from .processors import Gidle, NaiveMask, Pipeline, StepContext
from .decode import GenerationConfig, GenerationResult, SamplerSpec, generate
from .toylm import Model
from .vocab import BanSet, DEFAULT_CLASSES, ScriptClass

ARMS = ("baseline", "naive", "gidle")

# Decade buckets for Z: (1e-1, 1], (1e-2, 1e-1], ..., (1e-10, 1e-9]; the last
# bucket also absorbs anything smaller.
N_Z_BUCKETS = 10


@dataclass(frozen=True)
class DistortionRecord:
    step_index: int
    z: float
    kl_q_p: float
    tv: float
    method: str


@dataclass(frozen=True)
class ScoreStats:
    n: int
    mean: float
    variance: Optional[float]  # None when n < 2
    min: float
    max: float


@dataclass(frozen=True)
class DistortionSummary:
    n_steps: int
    mean_z: float
    min_z: float
    z_histogram: tuple  # decade bucket counts, N_Z_BUCKETS entries


@dataclass(frozen=True)
class ExperimentReport:
    model_name: str
    scores: dict  # arm -> ScoreStats
    per_cell_scores: dict  # arm -> tuple of (prompt_index, seed, score)
    distortion: dict  # arm -> DistortionSummary
    config: dict  # echo: ban mode, sampler, pipeline notes, estimator
    seeds: tuple
    failures: tuple  # (arm, prompt_index, seed, message)


def proxy_score(text: str, allowed_scripts: Iterable[str], classes: Sequence[ScriptClass] = DEFAULT_CLASSES) -> float:
    """1 + 4 * fraction of non-whitespace code points in allowed scripts."""
    allowed = set(allowed_scripts)
    by_name = {c.name: c for c in classes}
    total = 0
    hits = 0
    for ch in text:
        if ch.isspace():
            continue
        total += 1
        cp = ord(ch)
        matched = [name for name, c in by_name.items() if c.contains(cp)]
        if not matched and "Other" in by_name:
            matched = ["Other"]
        if any(name in allowed for name in matched):
            hits += 1
    if total == 0:
        return 1.0
    return 1.0 + 4.0 * hits / total


def step_distortion(raw: Logits, banned, method: str, step_index: int = 0) -> DistortionRecord:
    """Per-step distortion of the method's distribution vs the raw one."""
    if method not in ARMS:
        raise ValueError(f"unknown method: {method}")
    p = softmax(raw)
    if method == "baseline" or len(as_index_set(banned)) == 0:
        return DistortionRecord(step_index=step_index, z=1.0, kl_q_p=0.0, tv=0.0, method=method)
    lp = log_softmax(raw)
    z = math.exp(allowed_log_mass(lp, banned))
    q = constrained_distribution(lp, banned)
    return DistortionRecord(
        step_index=step_index,
        z=z,
        kl_q_p=kl_divergence(q, p),
        tv=total_variation(q, p),
        method=method,
    )


def summarize(scores: Sequence[float]) -> ScoreStats:
    """Mean plus unbiased (n-1) variance; variance absent for n = 1."""
    if len(scores) == 0:
        raise EmptySample("no scores to summarize")
    arr = np.asarray(scores, dtype=np.float64)
    variance = float(arr.var(ddof=1)) if len(arr) >= 2 else None
    return ScoreStats(
        n=len(arr),
        mean=float(arr.mean()),
        variance=variance,
        min=float(arr.min()),
        max=float(arr.max()),
    )


def z_bucket(z: float) -> int:
    """Decade bucket index for z in (0, 1]; clamped to the last bucket."""
    if z >= 1.0:
        return 0
    return min(int(math.floor(-math.log10(z))), N_Z_BUCKETS - 1)


def arm_pipeline(arm: str, banset: BanSet, extra_stages: Sequence = ()) -> Pipeline:
    """Masking stage per arm, then the shared downstream stages."""
    if arm == "baseline":
        head: tuple = ()
    elif arm == "naive":
        head = (NaiveMask(banset),)
    elif arm == "gidle":
        head = (Gidle(banset),)
    else:
        raise ValueError(f"unknown arm: {arm}")
    return Pipeline(head + tuple(extra_stages))


def _worker_count() -> int:
    raw = os.environ.get("GIDLE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_experiment(
    model: Model,
    prompts: Sequence[Sequence[int]],
    arms: Sequence[str],
    seeds: Sequence[int],
    banset: BanSet,
    allowed_scripts: Iterable[str],
    max_tokens: int,
    extra_stages: Sequence = (),
    sampler_kind: str = "multinomial",
    model_name: str = "model",
    ban_mode: str = "contains-any",
) -> ExperimentReport:
    """Score every (arm, prompt, seed) cell and aggregate per arm.

    Cells are independent and may run on up to GIDLE_THREADS workers; results
    are reduced in sorted cell-key order, so the report is deterministic
    regardless of scheduling.
    """
    if len(seeds) < 2:
        raise GidleError("need at least 2 seeds")
    if len(prompts) < 1:
        raise GidleError("need at least 1 prompt")
    for arm in arms:
        if arm not in ARMS:
            raise ValueError(f"unknown arm: {arm}")

    allowed_scripts = tuple(allowed_scripts)
    banned = banset.indices
    cells = [
        (arm, pi, int(seed))
        for arm in arms
        for pi in range(len(prompts))
        for seed in seeds
    ]

    def run_cell(key):
        arm, pi, seed = key
        pipeline = arm_pipeline(arm, banset, extra_stages)
        config = GenerationConfig(
            max_tokens=max_tokens,
            pipeline=pipeline,
            sampler=SamplerSpec(kind=sampler_kind, seed=seed),
        )
        records = []

        def on_step(raw, processed, trace):
            records.append(step_distortion(raw, banned, arm if arm != "baseline" else "baseline", trace.step_index))

        result = generate(model, prompts[pi], config, on_step=on_step)
        text = model.vocab.decode(result.tokens)
        score = proxy_score(text, allowed_scripts)
        return score, records

    outcomes: dict = {}
    workers = _worker_count()
    if workers == 1:
        for key in cells:
            try:
                outcomes[key] = run_cell(key)
            except GidleError as exc:
                outcomes[key] = exc
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(run_cell, key) for key in cells}
        for key, fut in futures.items():
            exc = fut.exception()
            outcomes[key] = exc if isinstance(exc, GidleError) else fut.result()

    scores: dict = {}
    per_cell: dict = {}
    distortion: dict = {}
    failures = []
    for arm in arms:
        arm_scores = []
        arm_cells = []
        zs = []
        hist = [0] * N_Z_BUCKETS
        for key in sorted(k for k in outcomes if k[0] == arm):
            outcome = outcomes[key]
            if isinstance(outcome, Exception):
                failures.append((key[0], key[1], key[2], str(outcome)))
                continue
            score, records = outcome
            arm_scores.append(score)
            arm_cells.append((key[1], key[2], score))
            for rec in records:
                zs.append(rec.z)
                hist[z_bucket(rec.z)] += 1
        if arm_scores:
            scores[arm] = summarize(arm_scores)
            per_cell[arm] = tuple(arm_cells)
            distortion[arm] = DistortionSummary(
                n_steps=len(zs),
                mean_z=float(np.mean(zs)),
                min_z=float(np.min(zs)),
                z_histogram=tuple(hist),
            )

    config_echo = {
        "variance_estimator": "unbiased (n-1)",
        "ban_mode": ban_mode,
        "sampler": sampler_kind,
        "max_tokens": max_tokens,
        "allowed_scripts": list(allowed_scripts),
        "non_shift_invariant_stage_present": Pipeline(tuple(extra_stages)).has_non_shift_invariant_stage(),
        "n_banned": len(banset.indices),
    }
    return ExperimentReport(
        model_name=model_name,
        scores=scores,
        per_cell_scores=per_cell,
        distortion=distortion,
        config=config_echo,
        seeds=tuple(int(s) for s in seeds),
        failures=tuple(failures),
    )


def report_to_document(report: ExperimentReport) -> dict:
    """Structured report document (deterministic field order via sorted keys on dump)."""
    return {
        "model": report.model_name,
        "config": report.config,
        "seeds": list(report.seeds),
        "scores": {
            arm: {
                "n": s.n,
                "mean": s.mean,
                "variance": s.variance,
                "min": s.min,
                "max": s.max,
            }
            for arm, s in report.scores.items()
        },
        "per_cell_scores": {
            arm: [{"prompt": pi, "seed": seed, "score": score} for pi, seed, score in cells]
            for arm, cells in report.per_cell_scores.items()
        },
        "distortion": {
            arm: {
                "n_steps": d.n_steps,
                "mean_z": d.mean_z,
                "min_z": d.min_z,
                "z_histogram": list(d.z_histogram),
            }
            for arm, d in report.distortion.items()
        },
        "failures": [list(f) for f in report.failures],
    }


def report_to_csv(report: ExperimentReport) -> str:
    """Flat table mirroring the mean/variance layout: model, method, mean, variance."""
    lines = ["model,method,mean,variance"]
    for arm in ARMS:
        if arm not in report.scores:
            continue
        s = report.scores[arm]
        var = "" if s.variance is None else repr(s.variance)
        lines.append(f"{report.model_name},{arm},{s.mean!r},{var}")
    return "\n".join(lines) + "\n"
