"""Command-line entry points: run, eval, report, filter-build."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bloom import build_filter_for_chunks, filter_save
from .corpus import DocumentRole, chunk_document, ingest_document
from .experiment import (
    ConfigError,
    RunManifest,
    evaluate_checkpoint,
    load_config,
    report_emit,
    run_experiment,
)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=JSON",
        help="override a config field, e.g. --set unlearn.algorithm='\"tv\"'",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unlearnlab",
        description="Sequential copyright-takedown unlearning on a compact language model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the full experiment for a config")
    _add_config_args(run_p)

    eval_p = sub.add_parser("eval", help="re-score an existing checkpoint")
    _add_config_args(eval_p)
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--out", required=True, help="directory for eval metrics")
    eval_p.add_argument("--step", type=int, default=None, help="score this time step's splits")

    report_p = sub.add_parser("report", help="emit the trade-off series for a finished run")
    report_p.add_argument("--manifest", required=True)
    report_p.add_argument("--out", default=None, help="directory for tradeoff.csv")

    filt_p = sub.add_parser("filter-build", help="build a MemFree n-gram filter from books")
    filt_p.add_argument("--out", required=True, help="filter file to write")
    filt_p.add_argument("--books", nargs="+", required=True, help="protected text files")
    filt_p.add_argument("--chunk-len", type=int, default=64)
    filt_p.add_argument("--prompt-len", type=int, default=32)
    filt_p.add_argument("--ngram-n", type=int, default=6)
    filt_p.add_argument("--fp-rate", type=float, default=1e-3)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config, args.overrides)
            manifest = run_experiment(config)
            print(f"run {manifest.doc['status']}: {manifest.path}")
            report_emit(manifest)
        elif args.command == "eval":
            config = load_config(args.config, args.overrides)
            result = evaluate_checkpoint(config, args.checkpoint, args.out, t=args.step)
            print(f"retain perplexity {result['retain_perplexity']:.4f}")
            for row in result["rows"]:
                print(
                    f"  t={row['t']} {row['split']}: rouge1={row['rouge1']:.4f} "
                    f"rougeL={row['rougeL']:.4f} (n={row['n_chunks']})"
                )
        elif args.command == "report":
            manifest = RunManifest.load(args.manifest)
            path = report_emit(manifest, args.out)
            print(f"wrote {path}")
        elif args.command == "filter-build":
            chunks = []
            for book in args.books:
                doc = ingest_document(book, DocumentRole.FORGET)
                chunks.extend(chunk_document(doc, args.chunk_len, args.prompt_len))
            filt = build_filter_for_chunks(chunks, fp_rate=args.fp_rate, ngram_n=args.ngram_n)
            filter_save(filt, args.out)
            print(
                f"wrote {args.out}: n={filt.ngram_n}, {filt.num_bits} bits, "
                f"{filt.num_hashes} hashes, {filt.items_inserted} n-grams"
            )
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
