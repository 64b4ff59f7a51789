"""Command line entry: attention-extract --model M --data F --out DIR --limit N."""

from __future__ import annotations

import argparse
import sys

from .extract import extract


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="attention-extract",
        description="Export per-layer, per-head key/query activations from a "
        "BERT-class checkpoint into KMV1 files plus a JSON manifest.",
    )
    ap.add_argument("--model", required=True, help="checkpoint id or local path")
    ap.add_argument("--data", required=True, help="text file, one sentence per line")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--limit", type=int, default=None, help="max sentences to process")
    ap.add_argument("--values", action="store_true", help="also export value activations")
    ap.add_argument("--revision", default=None, help="pin a checkpoint revision")
    args = ap.parse_args(argv)
    try:
        manifest = extract(
            args.model,
            args.data,
            args.out,
            max_sentences=args.limit,
            include_values=args.values,
            revision=args.revision,
        )
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    done = sum(1 for s in manifest.sentences if not s.skipped)
    skipped = sum(1 for s in manifest.sentences if s.skipped)
    print(
        f"extracted {done} sentences ({skipped} skipped) x "
        f"{manifest.num_layers} layers x {manifest.num_heads} heads -> "
        f"{len(manifest.files)} key/query file pairs"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
