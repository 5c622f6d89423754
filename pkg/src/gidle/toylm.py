"""Desk-scale autoregressive models with exactly computable conditionals.

The n-gram model (Laplace smoothing) is the experiment substrate: smoothing
gives every token support, so banned-mass Z varies meaningfully per step. The
table model is a fixture for bit-exact tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import CorpusError, ManifestError
from .numerics import LogitVector
from .processors import StepContext
from .vocab import Vocabulary

DEFAULT_ORDER = 3
DEFAULT_ALPHA = 1.0


@dataclass(frozen=True)
class NgramModel:
    order: int
    vocab: Vocabulary
    counts: Mapping  # context tuple (length order-1) -> np.ndarray of counts
    alpha: float

    def context_key(self, prior_tokens: Sequence[int]) -> tuple:
        """Last order-1 tokens, left-padded with eos for short histories."""
        n = self.order - 1
        ctx = tuple(prior_tokens)[-n:] if n else ()
        if len(ctx) < n:
            ctx = (self.vocab.eos_id,) * (n - len(ctx)) + ctx
        return ctx

    def next_probs(self, context: StepContext) -> np.ndarray:
        """Exact smoothed conditionals: (count + alpha) / (total + alpha * |V|)."""
        counts = self.counts.get(self.context_key(context.prior_tokens))
        if counts is None:
            counts = np.zeros(self.vocab.size)
        smoothed = counts + self.alpha
        return smoothed / smoothed.sum()

    def next_logits(self, context: StepContext) -> LogitVector:
        return LogitVector(np.log(self.next_probs(context)))


@dataclass(frozen=True)
class TableModel:
    vocab: Vocabulary
    rows: Mapping  # context tuple -> np.ndarray of logits
    default: np.ndarray

    def next_logits(self, context: StepContext) -> LogitVector:
        row = self.rows.get(tuple(context.prior_tokens), self.default)
        return LogitVector(row)


Model = Union[NgramModel, TableModel]


def train_ngram(
    corpus: Sequence[Sequence[int]],
    vocab: Vocabulary,
    order: int = DEFAULT_ORDER,
    alpha: float = DEFAULT_ALPHA,
) -> NgramModel:
    """Count every length-order window; short contexts are left-padded with eos."""
    if order < 1:
        raise CorpusError(f"order must be >= 1, got {order}")
    if not alpha > 0:
        raise CorpusError(f"alpha must be > 0, got {alpha}")
    if not corpus or all(len(seq) == 0 for seq in corpus):
        raise CorpusError("empty corpus")

    n = order - 1
    counts: dict = {}
    for seq in corpus:
        ids = tuple(int(t) for t in seq)
        for t in ids:
            if not 0 <= t < vocab.size:
                raise CorpusError(f"token id {t} out of range for vocab size {vocab.size}")
        padded = (vocab.eos_id,) * n + ids
        for t, tok in enumerate(ids):
            ctx = padded[t : t + n]
            row = counts.get(ctx)
            if row is None:
                row = counts[ctx] = np.zeros(vocab.size)
            row[tok] += 1
    return NgramModel(order=order, vocab=vocab, counts=counts, alpha=float(alpha))


def encode_text(vocab: Vocabulary, text: str) -> list:
    """Greedy longest-match tokenization over the vocabulary's token strings."""
    by_len = sorted(range(vocab.size), key=lambda i: -len(vocab.tokens[i]))
    ids = []
    pos = 0
    while pos < len(text):
        for tid in by_len:
            tok = vocab.tokens[tid]
            if tok and text.startswith(tok, pos):
                ids.append(tid)
                pos += len(tok)
                break
        else:
            raise CorpusError(f"no vocabulary token matches text at position {pos}: {text[pos:pos+8]!r}")
    return ids


def load_corpus(path: Union[str, Path], vocab: Vocabulary) -> list:
    """UTF-8 text file, one sequence per line, mapped to ids via the vocabulary."""
    lines = Path(path).read_text("utf-8").splitlines()
    return [encode_text(vocab, line) for line in lines if line]


def load_table_model(doc: Union[Mapping, str, Path], vocab: Vocabulary) -> TableModel:
    """Document format: {"rows": [{"context": [ids], "logits": [floats]}], "default": [floats]}."""
    if isinstance(doc, (str, Path)):
        doc = json.loads(Path(doc).read_text("utf-8"))
    if "default" not in doc:
        raise ManifestError("table model needs a 'default' row")

    def _row(values):
        # JSON cannot carry -inf; null stands in for it
        return np.asarray([float("-inf") if v is None else float(v) for v in values])

    default = _row(doc["default"])
    rows = {}
    for rec in doc.get("rows", []):
        rows[tuple(int(i) for i in rec["context"])] = _row(rec["logits"])
    for row in [default, *rows.values()]:
        if len(row) != vocab.size:
            raise ManifestError("table row length does not match vocabulary size")
        LogitVector(row)  # validates
    return TableModel(vocab=vocab, rows=rows, default=default)
