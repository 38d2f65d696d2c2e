#!/usr/bin/env python3
"""Run the multi-seed loss comparison on the synthetic dataset and print a
summary table (mean +- standard error over the five fixed seeds).

Usage:
    python3 scripts/run_toy_experiment.py [--epochs N] [--soft-exit] [--out FILE]
"""

import argparse
import json
import time
from dataclasses import replace

from rtosr.config import DEFAULT_SEEDS
from rtosr.experiment import LOSS_VARIANTS, TOY_TRAIN_CONFIG, run_toy_comparison
from rtosr.synth import SyntheticConfig


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=TOY_TRAIN_CONFIG.epochs)
    parser.add_argument(
        "--soft-exit",
        action="store_true",
        help="add a variant training with the differentiable exit surrogate",
    )
    parser.add_argument("--out", default=None, help="write the full JSON summary here")
    args = parser.parse_args()

    variants = dict(LOSS_VARIANTS)
    if args.soft_exit:
        variants["combined_soft"] = {"exit_loss_mode": "soft"}

    start = time.time()
    results = run_toy_comparison(
        variants=variants,
        seeds=DEFAULT_SEEDS,
        synth_config=SyntheticConfig(),
        train_config=replace(TOY_TRAIN_CONFIG, epochs=args.epochs),
    )
    elapsed = time.time() - start

    columns = ("unknown_acc", "known_top1", "known_top3", "known_top5", "f1", "mcc")
    header = f"{'variant':<16}" + "".join(f"{c:>22}" for c in columns)
    print(header)
    print("-" * len(header))
    for name, result in results.items():
        cells = []
        for c in columns:
            agg = result.aggregate.get(c)
            if agg is None:
                cells.append(f"{'n/a':>22}")
            else:
                cells.append(f"{agg['mean']:>14.4f} +-{agg['stderr']:>5.3f}")
        print(f"{name:<16}" + "".join(cells))
    print(f"\n{len(DEFAULT_SEEDS)} seeds per variant, {elapsed:.1f} s total")

    if args.out:
        payload = {
            name: {"aggregate": r.aggregate, "per_seed": r.per_seed}
            for name, r in results.items()
        }
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
