#!/usr/bin/env python3
"""Regenerate the mixed-script fixture under tests/fixtures/.

The corpus interleaves Latin and Cyrillic character sequences, including
lines that switch script mid-sentence, so a smoothed character trigram model
trained on it places real probability mass on Cyrillic continuations of
Latin contexts. That is the leakage pressure the baseline arm needs.
"""

import json
from pathlib import Path

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

LATIN_LINES = [
    "the cat sat on the mat",
    "the dog ate the bone",
    "a man and a dog met",
    "the sun set and the moon rose",
    "one day the man sat down",
    "the dog and the cat ran",
]

CYRILLIC_LINES = [
    "кот спал на ковре",
    "собака ела кость",
    "человек и собака шли домой",
    "солнце село и луна встала",
    "однажды человек сел",
    "собака и кот бежали",
]

MIXED_LINES = [
    "the кот sat on ковре",
    "собака ate the кость",
    "the man и собака ran",
    "кот and the луна rose",
    "one день the dog спал",
    "the солнце set and луна rose",
]


def main():
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)

    lines = []
    for triple in zip(LATIN_LINES, CYRILLIC_LINES, MIXED_LINES):
        lines.extend(triple)
    corpus = "\n".join(lines) + "\n"
    (FIXTURE_DIR / "corpus.txt").write_text(corpus, "utf-8")

    chars = sorted(set(corpus) - {"\n"})
    tokens = chars + ["</s>"]
    vocab = {"tokens": tokens, "eos_id": len(tokens) - 1}
    (FIXTURE_DIR / "vocab.json").write_text(json.dumps(vocab, ensure_ascii=False, indent=2) + "\n", "utf-8")

    manifest = {
        "model_name": "char-trigram",
        "vocabulary": "vocab.json",
        "corpus": "corpus.txt",
        "model": {"kind": "ngram", "order": 3, "alpha": 1.0},
        "ban": {"scripts": ["Cyrillic"], "mode": "contains-any", "extra_token_ids": []},
        "pipeline": [],
        "sampler": {"kind": "multinomial"},
        "seeds": list(range(1, 51)),
        "prompts": ["the "],
        "max_tokens": 48,
        "allowed_scripts": ["Latin"],
        "output_dir": "out",
    }
    (FIXTURE_DIR / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", "utf-8")
    print(f"wrote fixture ({len(tokens)} tokens) to {FIXTURE_DIR}")


if __name__ == "__main__":
    main()
