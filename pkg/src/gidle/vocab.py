"""Vocabulary ingestion and banned-token-set construction.

Script ranges live in data/script_ranges.json (Unicode 15 block boundaries)
so the classification basis is auditable as data, not code. The "Other"
class matches any non-whitespace code point that falls in no listed range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .errors import EosBanError, ManifestError, NoAllowedTokens
from .numerics import IndexSet

SCRIPT_NAMES = ("Han", "Hiragana", "Katakana", "Cyrillic", "Hangul", "Latin", "Digit", "Other")

MODE_CONTAINS_ANY = "contains-any"
MODE_MAJORITY = "majority"


@dataclass(frozen=True)
class ScriptClass:
    name: str
    ranges: tuple  # ((lo, hi), ...) inclusive, non-overlapping

    def __post_init__(self):
        rs = tuple((int(lo), int(hi)) for lo, hi in self.ranges)
        for lo, hi in rs:
            if lo > hi:
                raise ValueError(f"{self.name}: empty interval [{lo}, {hi}]")
        for (_, h1), (l2, _) in zip(sorted(rs), sorted(rs)[1:]):
            if l2 <= h1:
                raise ValueError(f"{self.name}: overlapping intervals")
        object.__setattr__(self, "ranges", rs)

    def contains(self, codepoint: int) -> bool:
        return any(lo <= codepoint <= hi for lo, hi in self.ranges)


def _load_default_classes() -> tuple:
    raw = json.loads(resources.files("gidle.data").joinpath("script_ranges.json").read_text("utf-8"))
    return tuple(ScriptClass(name, tuple(tuple(r) for r in ranges)) for name, ranges in raw["classes"].items())


DEFAULT_CLASSES = _load_default_classes()


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple
    eos_id: int

    def __post_init__(self):
        toks = tuple(str(t) for t in self.tokens)
        if len(toks) < 2:
            raise ManifestError("vocabulary needs at least 2 tokens")
        if not 0 <= int(self.eos_id) < len(toks):
            raise ManifestError(f"eos_id {self.eos_id} out of range for size {len(toks)}")
        object.__setattr__(self, "tokens", toks)
        object.__setattr__(self, "eos_id", int(self.eos_id))

    @property
    def size(self) -> int:
        return len(self.tokens)

    def decode(self, ids: Iterable[int], skip_eos: bool = True) -> str:
        out = []
        for i in ids:
            if skip_eos and i == self.eos_id:
                continue
            out.append(self.tokens[i])
        return "".join(out)


@dataclass(frozen=True)
class BanSpec:
    banned_scripts: frozenset = frozenset()
    extra_token_ids: IndexSet = field(default_factory=IndexSet)
    mode: str = MODE_CONTAINS_ANY

    def __post_init__(self):
        scripts = frozenset(str(s) for s in self.banned_scripts)
        unknown = scripts - set(SCRIPT_NAMES)
        if unknown:
            raise ManifestError(f"unknown script class(es): {sorted(unknown)}")
        if self.mode not in (MODE_CONTAINS_ANY, MODE_MAJORITY):
            raise ManifestError(f"unknown ban mode: {self.mode}")
        object.__setattr__(self, "banned_scripts", scripts)


@dataclass(frozen=True)
class BanSet:
    indices: IndexSet
    provenance: tuple  # reason tag per index, parallel to indices

    def __post_init__(self):
        if len(self.provenance) != len(self.indices):
            raise ValueError("provenance must parallel indices")
        object.__setattr__(self, "provenance", tuple(str(p) for p in self.provenance))

    def to_document(self) -> dict:
        return {"indices": list(self.indices), "provenance": list(self.provenance)}

    @classmethod
    def from_document(cls, doc: Mapping) -> "BanSet":
        return cls(IndexSet.from_iterable(doc["indices"]), tuple(doc["provenance"]))


def load_vocabulary(manifest: Union[Mapping, str, Path]) -> Vocabulary:
    """Build a Vocabulary from a manifest document (or a path to one)."""
    if isinstance(manifest, (str, Path)):
        try:
            manifest = json.loads(Path(manifest).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read vocabulary manifest: {exc}") from exc
    if not isinstance(manifest, Mapping) or "tokens" not in manifest or "eos_id" not in manifest:
        raise ManifestError("vocabulary manifest needs 'tokens' and 'eos_id'")
    tokens = manifest["tokens"]
    if len(set(tokens)) != len(tokens):
        raise ManifestError("duplicate tokens in manifest")
    return Vocabulary(tuple(tokens), manifest["eos_id"])


def classify_token(token: str, classes: Sequence[ScriptClass] = DEFAULT_CLASSES) -> set:
    """Names of every class containing at least one code point of the token.

    Whitespace matches nothing; a non-whitespace code point outside every
    listed range falls to the 'Other' class when that class is offered.
    """
    if not classes:
        raise ValueError("classes must be non-empty")
    named = {c.name for c in classes}
    hits: set = set()
    for ch in token:
        cp = ord(ch)
        matched = False
        for c in classes:
            if c.contains(cp):
                hits.add(c.name)
                matched = True
        if not matched and not ch.isspace() and "Other" in named:
            hits.add("Other")
    return hits


def _codepoint_in_banned(ch: str, banned: frozenset, classes: Sequence[ScriptClass]) -> bool:
    matched_any = False
    for c in classes:
        if c.contains(ord(ch)):
            matched_any = True
            if c.name in banned:
                return True
    if not matched_any and not ch.isspace() and "Other" in banned:
        return True
    return False


def build_ban_set(
    vocab: Vocabulary,
    spec: BanSpec,
    classes: Sequence[ScriptClass] = DEFAULT_CLASSES,
) -> BanSet:
    """Collect banned token ids from script rules plus explicit ids.

    The eos token is never banned by script rules; naming it explicitly is an
    error (generation must be able to terminate).
    """
    if spec.extra_token_ids and max(spec.extra_token_ids) >= vocab.size:
        raise ManifestError("extra_token_ids out of vocabulary range")
    if vocab.eos_id in spec.extra_token_ids:
        raise EosBanError("eos token cannot be banned")

    banned: dict = {i: "explicit" for i in spec.extra_token_ids}
    for tid, token in enumerate(vocab.tokens):
        if tid == vocab.eos_id or tid in banned or not spec.banned_scripts:
            continue
        if spec.mode == MODE_CONTAINS_ANY:
            hit = classify_token(token, classes) & spec.banned_scripts
            if hit:
                banned[tid] = min(hit)
        else:  # majority: strictly more than half the code points are banned-script
            n_banned = sum(1 for ch in token if _codepoint_in_banned(ch, spec.banned_scripts, classes))
            if token and n_banned * 2 > len(token):
                hit = classify_token(token, classes) & spec.banned_scripts
                banned[tid] = min(hit) if hit else min(spec.banned_scripts)

    if len(banned) >= vocab.size:
        raise NoAllowedTokens("ban spec covers the entire vocabulary")
    ids = sorted(banned)
    return BanSet(IndexSet(tuple(ids)), tuple(banned[i] for i in ids))
