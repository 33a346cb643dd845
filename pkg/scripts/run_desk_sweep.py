#!/usr/bin/env python3
"""Train all six methods over every seed, then print a per-seed comparison.

    python scripts/run_desk_sweep.py configs/desk.conf [--workers 4]
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from mfrl.harness import METHODS, find_run_dirs, load_config, read_quality, run_experiment, summarize


def usage_windows(run_dir: Path):
    steps = np.loadtxt(run_dir / "usage.csv", delimiter=",", skiprows=1, usecols=(1, 2, 3), ndmin=2)
    k = max(1, len(steps) // 10)
    share = lambda block: block.sum(axis=0) / block.sum()
    return share(steps[:k]), share(steps[-k:])


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--skip-training", action="store_true", help="only summarize existing runs")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config, workers=args.workers)
    if not args.skip_training:
        run_experiment(cfg, methods=METHODS)
    root = Path(cfg.output_dir)
    gaps = summarize(find_run_dirs(root), root / "summary.csv", root / "summary_spread.csv")
    print((root / "summary.csv").read_text(encoding="utf-8"))

    print("final-iteration q, mean/std over evaluation seeds")
    print("seed  " + "  ".join(f"{m:>15}" for m in METHODS))
    for seed in cfg.seeds:
        cells = []
        for m in METHODS:
            d = root / m / f"seed_{seed}"
            if not (d / "quality.csv").exists():
                cells.append(f"{'missing':>15}")
                continue
            final = read_quality(d)[:, -1]
            cells.append(f"{final.mean():>8.3f}/{final.std(ddof=1):.3f}")
        print(f"{seed:>4}  " + "  ".join(cells))

    print("\nadaptive usage shares (LF1, LF2, HF): first 10% -> last 10% of episodes")
    for seed in cfg.seeds:
        d = root / "adaptive" / f"seed_{seed}"
        if (d / "usage.csv").exists():
            first, last = usage_windows(d)
            print(f"{seed:>4}  {np.round(first, 3)} -> {np.round(last, 3)}")
    if gaps:
        print(f"\nmissing runs for: {', '.join(gaps)}")


if __name__ == "__main__":
    main()
