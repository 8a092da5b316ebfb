"""Command-line entry point: one verb per pipeline stage plus ``pipeline`` and ``compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch

from .config import load_config
from .errors import GraytrackError, StageError
from .pipeline import STAGE_FUNCS, Layout, compare_reports, run_pipeline

VERBS = ("gen", "encode", "netem", "extract", "train-stage1", "train-stage2", "track", "eval",
         "compare", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment YAML file")
    common.add_argument("--seed", type=int, default=None,
                        help="replace the config's top-level seed (section seeds derive from it)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="graytrack", parents=[common],
                                     description="Track a target from encrypted video traffic.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb, parents=[common])
        if verb == "compare":
            p.add_argument("report_a", type=Path)
            p.add_argument("report_b", type=Path)
    return parser


def _run(args) -> None:
    if args.verb == "compare":
        args.out.mkdir(parents=True, exist_ok=True)
        compare_reports(args.report_a, args.report_b, args.out / "comparison.csv")
        return
    if args.config is None:
        raise StageError("config", "--config is required")
    try:
        cfg = load_config(args.config, args.seed)
    except (GraytrackError, OSError, ValueError, TypeError) as exc:
        raise StageError("config", f"{type(exc).__name__}: {exc}", str(args.config)) from exc
    # One intra-op thread keeps CPU float reductions in a fixed order across runs.
    torch.set_num_threads(1)
    if args.verb == "pipeline":
        run_pipeline(cfg, args.out)
    else:
        STAGE_FUNCS[args.verb](cfg, Layout(args.out))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
