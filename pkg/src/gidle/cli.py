"""Command-line entry point.

Subcommands: banset | generate | compare | inspect | process. Runs are
manifest-driven so experiments stay archivable and replayable; all outputs
are UTF-8, LF-terminated, fixed field order, and contain no timestamps, so
reruns are byte-identical. Exit codes: 0 success, 2 configuration error,
3 infeasible constraint, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import (
    ConfigError,
    CorpusError,
    EosBanError,
    GidleError,
    ManifestError,
    NoAllowedMass,
    NoAllowedTokens,
)
from .numerics import IndexSet
from .processors import (
    Gidle,
    NaiveMask,
    Pipeline,
    RepetitionPenalty,
    Temperature,
    TopK,
    TopP,
    gidle_process,
    naive_mask,
)
from .decode import GenerationConfig, SamplerSpec, generate, result_to_jsonl
from .diagnostics import ARMS, arm_pipeline, report_to_csv, report_to_document, run_experiment
from .toylm import encode_text, load_corpus, load_table_model, train_ngram
from .vocab import BanSet, BanSpec, build_ban_set, load_vocabulary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_RUNTIME = 4


def _parse_scripts(raw: str):
    if raw.strip().lower() in ("", "none"):
        return frozenset()
    return frozenset(s.strip().capitalize() for s in raw.split(",") if s.strip())


def _stage_from_record(record: dict, banset_dir: Path):
    kind = record["stage"]
    if kind in ("naive", "naive_mask"):
        return NaiveMask(_load_banset(banset_dir / record["banset"]))
    if kind == "gidle":
        return Gidle(_load_banset(banset_dir / record["banset"]))
    if kind == "temperature":
        return Temperature(float(record["t"]))
    if kind == "top_k":
        return TopK(int(record["k"]))
    if kind == "top_p":
        return TopP(float(record["p"]))
    if kind == "repetition_penalty":
        return RepetitionPenalty(float(record["gamma"]))
    raise ManifestError(f"unknown pipeline stage: {kind}")


def _load_banset(path: Path) -> BanSet:
    try:
        return BanSet.from_document(json.loads(Path(path).read_text("utf-8")))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ManifestError(f"cannot read ban-set document {path}: {exc}") from exc


class Manifest:
    """Loaded run manifest; all relative paths resolve against the manifest dir."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.base = self.path.parent
        try:
            self.doc = json.loads(self.path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

        self.vocab = load_vocabulary(self.base / self.doc["vocabulary"])
        model_cfg = self.doc.get("model", {"kind": "ngram"})
        if model_cfg.get("kind", "ngram") == "ngram":
            corpus = load_corpus(self.base / self.doc["corpus"], self.vocab)
            self.model = train_ngram(
                corpus,
                self.vocab,
                order=int(model_cfg.get("order", 3)),
                alpha=float(model_cfg.get("alpha", 1.0)),
            )
        else:
            self.model = load_table_model(self.base / self.doc["table_model"], self.vocab)

        ban = self.doc.get("ban", {})
        self.ban_spec = BanSpec(
            banned_scripts=frozenset(ban.get("scripts", [])),
            extra_token_ids=IndexSet.from_iterable(ban.get("extra_token_ids", [])),
            mode=ban.get("mode", "contains-any"),
        )
        self.banset = build_ban_set(self.vocab, self.ban_spec)
        self.extra_stages = tuple(
            _stage_from_record(rec, self.base) for rec in self.doc.get("pipeline", [])
        )
        sampler = self.doc.get("sampler", {"kind": "multinomial"})
        self.sampler_kind = sampler.get("kind", "multinomial")
        self.seeds = [int(s) for s in self.doc["seeds"]]
        if not self.seeds:
            raise ManifestError("manifest needs at least one seed")
        self.prompts = [encode_text(self.vocab, p) for p in self.doc["prompts"]]
        self.max_tokens = int(self.doc.get("max_tokens", 64))
        self.allowed_scripts = tuple(self.doc.get("allowed_scripts", ["Latin"]))
        self.model_name = self.doc.get("model_name", "model")
        self.output_dir = self.base / self.doc.get("output_dir", "out")


def cmd_banset(args) -> int:
    vocab = load_vocabulary(args.vocab)
    spec = BanSpec(
        banned_scripts=_parse_scripts(args.ban_scripts),
        extra_token_ids=IndexSet.from_iterable(int(i) for i in args.extra_ids.split(",") if i.strip())
        if args.extra_ids
        else IndexSet(),
        mode=args.mode,
    )
    banset = build_ban_set(vocab, spec)
    doc = banset.to_document()
    if args.out:
        Path(args.out).write_text(json.dumps(doc, sort_keys=True) + "\n", "utf-8")
    counts: dict = {}
    for reason in banset.provenance:
        counts[reason] = counts.get(reason, 0) + 1
    print(f"banned {len(banset.indices)}/{vocab.size}")
    for reason in sorted(counts):
        print(f"  {reason}: {counts[reason]}")
    return EXIT_OK


def cmd_generate(args) -> int:
    m = Manifest(args.manifest)
    method = args.method
    if method not in ARMS:
        raise ConfigError(f"method must be one of {ARMS}")
    pipeline = arm_pipeline(method, m.banset, m.extra_stages)
    m.output_dir.mkdir(parents=True, exist_ok=True)
    for pi, prompt in enumerate(m.prompts):
        for seed in m.seeds:
            config = GenerationConfig(
                max_tokens=m.max_tokens,
                pipeline=pipeline,
                sampler=SamplerSpec(kind=m.sampler_kind, seed=seed),
            )
            result = generate(m.model, prompt, config)
            header = {
                "method": method,
                "prompt_index": pi,
                "seed": seed,
                "sampler": m.sampler_kind,
                "max_tokens": m.max_tokens,
                "model": m.model_name,
            }
            out = m.output_dir / f"trace_{method}_p{pi}_s{seed}.jsonl"
            out.write_text(result_to_jsonl(result, header), "utf-8")
            print(f"{out}: {len(result.tokens)} tokens, finished={result.finished}")
    return EXIT_OK


def cmd_compare(args) -> int:
    m = Manifest(args.manifest)
    if len(m.seeds) < 2:
        raise ConfigError("compare needs at least 2 seeds")
    report = run_experiment(
        model=m.model,
        prompts=m.prompts,
        arms=ARMS,
        seeds=m.seeds,
        banset=m.banset,
        allowed_scripts=m.allowed_scripts,
        max_tokens=m.max_tokens,
        extra_stages=m.extra_stages,
        sampler_kind=m.sampler_kind,
        model_name=m.model_name,
        ban_mode=m.ban_spec.mode,
    )
    m.output_dir.mkdir(parents=True, exist_ok=True)
    doc = report_to_document(report)
    (m.output_dir / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", "utf-8")
    csv = report_to_csv(report)
    (m.output_dir / "report.csv").write_text(csv, "utf-8")
    print(csv, end="")
    return EXIT_OK


def cmd_inspect(args) -> int:
    vocab = load_vocabulary(args.vocab)
    print(f"vocabulary: {vocab.size} tokens, eos_id={vocab.eos_id} ({vocab.tokens[vocab.eos_id]!r})")
    if args.banset:
        banset = _load_banset(Path(args.banset))
        print(f"ban set: {len(banset.indices)} tokens")
        for tid, reason in list(zip(banset.indices, banset.provenance))[: args.limit]:
            print(f"  {tid}\t{vocab.tokens[tid]!r}\t{reason}")
    return EXIT_OK


def cmd_process(args) -> int:
    """Apply a masking processor to logit vectors, JSONL over stdio.

    Request per line: {"method": "naive"|"gidle", "logits": [...], "banned": [ids]}
    (null stands in for -inf). Response per line: {"logits": [...]} or
    {"error": "...", "kind": "..."}. This is the surface host-language
    bindings talk to.
    """
    inp = sys.stdin if args.input == "-" else open(args.input, "r", encoding="utf-8")
    try:
        for line in inp:
            line = line.strip()
            if not line:
                continue
            try:
                req = json.loads(line)
                logits = [float("-inf") if v is None else float(v) for v in req["logits"]]
                banned = IndexSet.from_iterable(req["banned"])
                if banned and max(banned) >= len(logits):
                    raise ConfigError("banned index out of range")
                fn = {"naive": naive_mask, "gidle": gidle_process}[req["method"]]
                out = fn(logits, banned)
                values = [None if v == float("-inf") else float(v) for v in out.values]
                print(json.dumps({"logits": values}), flush=True)
            except (GidleError, KeyError, ValueError, TypeError) as exc:
                print(json.dumps({"error": str(exc), "kind": type(exc).__name__}), flush=True)
    finally:
        if inp is not sys.stdin:
            inp.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gidle", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("banset", help="build a ban-set document from script rules")
    p.add_argument("--vocab", required=True)
    p.add_argument("--ban-scripts", default="none", help="comma-separated script classes, or 'none'")
    p.add_argument("--mode", default="contains-any", choices=["contains-any", "majority"])
    p.add_argument("--extra-ids", default="", help="comma-separated explicit token ids")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_banset)

    p = sub.add_parser("generate", help="run one generation arm over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", default="baseline", choices=list(ARMS))
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("compare", help="run all three arms and emit the mean/variance report")
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("inspect", help="summarize a vocabulary and optional ban set")
    p.add_argument("--vocab", required=True)
    p.add_argument("--banset", default=None)
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("process", help="apply naive/gidle masking to logit vectors (JSONL stdio)")
    p.add_argument("--input", default="-")
    p.set_defaults(fn=cmd_process)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (NoAllowedTokens, NoAllowedMass, EosBanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ManifestError, ConfigError, CorpusError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GidleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
