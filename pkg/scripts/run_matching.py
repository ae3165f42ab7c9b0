#!/usr/bin/env python3
"""End-to-end matching experiment at the turnover cap.

Runs the shipped 8x3 matching config at p=0, fits the regret constant from
those runs, sets p to the cap that constant implies, reruns, and prints both
summaries.
"""

import argparse
import json
from pathlib import Path

from dynpop import harness
from dynpop import matching as mt

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(ROOT / "configs" / "matching.json"))
    parser.add_argument("--seeds", type=int, default=30)
    parser.add_argument("--T", type=int, default=None, help="override the horizon")
    args = parser.parse_args()

    cfg = harness.ExperimentConfig.load(args.config).replace(seeds=list(range(args.seeds)))
    if args.T:
        cfg = cfg.replace(T=args.T)
    arena = harness.make_arena(cfg)

    still = harness.run_many(cfg.replace(p=0.0))
    c_r = max(r.fitted_c_r for r in still)
    cap = mt.p_cap(arena.rho, arena.eps, c_r, arena.N, cfg.T)
    moving = harness.run_many(cfg.replace(p=cap))

    for label, reports in (("p=0", still), (f"p={cap:.3g} (cap)", moving)):
        summary = harness.summarize(reports, c_r=c_r, warn=False)
        print(f"== {label}")
        print(json.dumps({k: summary[k] for k in ("mean_ratio", "k", "kappa", "c_r", "verdicts")}, indent=2))


if __name__ == "__main__":
    main()
