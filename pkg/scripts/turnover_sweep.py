#!/usr/bin/env python3
"""Welfare ratio against turnover rate for one config; writes a CSV table."""

import argparse
import csv
from pathlib import Path

from dynpop import harness

ROOT = Path(__file__).resolve().parent.parent
DEFAULT_PS = [0.0, 0.0001, 0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(ROOT / "configs" / "matching.json"))
    parser.add_argument("--ps", type=float, nargs="+", default=DEFAULT_PS)
    parser.add_argument("--T", type=int, default=2000)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--out", default="sweep_table.csv")
    args = parser.parse_args()

    cfg = harness.ExperimentConfig.load(args.config).replace(T=args.T, seeds=list(range(args.seeds)))
    rows = harness.sweep(cfg, args.ps)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    for r in rows:
        print(f"p={r['p']:<8g} ratio={r['mean_ratio']:.4f} k={r['k']:.2f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
