#!/usr/bin/env python3
"""Fit the two regional surrogates and report in- vs out-of-region error."""

import argparse

import numpy as np

from mfrl.core import FidelityId
from mfrl.env import fit_regional_surrogate, hf_evaluate, r_squared, rmse

REGIONS = {
    "lf1 (x0 < 0.5)": (FidelityId.LF1, lambda x: x[0] < 0.5),
    "lf2 (x0 >= 0.5)": (FidelityId.LF2, lambda x: x[0] >= 0.5),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n1", type=int, default=680)
    ap.add_argument("--n2", type=int, default=1358)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--held-out", type=int, default=5000)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    held = rng.uniform(size=(args.held_out, 4))
    y = np.array([hf_evaluate(x).q for x in held])
    for (name, (model, home)), n in zip(REGIONS.items(), (args.n1, args.n2)):
        fit = fit_regional_surrogate(home, n, rng, model_id=model, epochs=args.epochs)
        inside = np.array([bool(home(x)) for x in held])
        print(f"{name}: n={n}")
        for label, mask in (("in-region", inside), ("out-of-region", ~inside)):
            print(f"  {label:>14}: rmse {rmse(fit.params, held[mask], y[mask]):.4f}"
                  f"  r2 {r_squared(fit.params, held[mask], y[mask]):.3f}")


if __name__ == "__main__":
    main()
