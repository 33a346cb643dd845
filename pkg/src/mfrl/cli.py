"""Command-line entry point: ``mfrl train|evaluate|compare|sweep``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import METHODS, ExperimentConfig, evaluate_run, find_run_dirs, load_config, run_experiment, summarize


def _config(args) -> ExperimentConfig:
    overrides = {"output_dir": getattr(args, "out", None)}
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_train(args) -> int:
    cfg = _config(args)
    cfg.method = args.method
    if args.seed is not None:
        cfg.seeds = [args.seed]
    manifest = run_experiment(cfg)
    failed = [r for r in manifest["runs"] if r["error"]]
    for r in manifest["runs"]:
        print(f"{r['method']} seed {r['seed']}: {r['dir'] or 'FAILED ' + r['error']}")
    return 1 if failed else 0


def cmd_evaluate(args) -> int:
    q = evaluate_run(args.run)
    print(f"{args.run}: final-iteration mean q = {q[:, -1].mean():.4f} over {len(q)} seeds")
    return 0


def cmd_compare(args) -> int:
    dirs = []
    for d in args.runs:
        p = Path(d)
        # a single run directory, or a tree containing many
        dirs.extend([p] if p.name.startswith("seed_") else find_run_dirs(p))
    out = Path(args.out)
    gaps = summarize(dirs, out, out.with_name(out.stem + "_spread.csv"))
    print(out.read_text(encoding="utf-8"), end="")
    if gaps:
        print(f"missing data for: {', '.join(gaps)}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    manifest = run_experiment(cfg, methods=METHODS)
    root = Path(cfg.output_dir)
    gaps = summarize(find_run_dirs(root), root / "summary.csv", root / "summary_spread.csv")
    print((root / "summary.csv").read_text(encoding="utf-8"), end="")
    return 1 if gaps or any(r["error"] for r in manifest["runs"]) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfrl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate one method")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="re-evaluate a stored run's HF policy")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="summarize run directories into a CSV")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="all methods x all seeds, then summarize")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
