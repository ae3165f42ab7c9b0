#!/usr/bin/env python3
"""Tightest verified lambda per game on random tiny instances.

Prints one row per instance family: the claimed lambda and the tightest
lambda verified by enumeration across instances. Instances with a zero
benchmark are skipped.
"""

import argparse

import numpy as np

from dynpop import bandwidth as bw
from dynpop import congestion as cg
from dynpop import matching as mt
from dynpop.core import minimal_lambda


def first_price(seed):
    rng = np.random.default_rng(seed)
    rho, delta = 0.2, 0.25
    grid = mt.BidGrid.from_delta(delta, rho)
    m = int(rng.integers(1, 3))
    values = np.round(mt.random_values(rng, 2, m, rho, zero_prob=0.2) / grid.step) * grid.step
    values[(values > 0) & (values < rho)] = rho
    game = mt.FirstPriceGame(2, m, grid, capped=False)
    opt, x = mt.optimal_matching(values)
    if opt <= 0:
        return np.nan
    return minimal_lambda(game, 1.0, x, lambda i, v, xi: mt.smoothness_deviation(v, xi, grid), values)


def proportional(seed):
    types = bw.random_types(np.random.default_rng(seed), 2, 0.2, 1.0)
    counts = bw.segmented_optimum(types, 0.25)
    return bw.verify_bandwidth_smoothness(types, counts, 0.05, 0.125, 0.25).verified_lambda


def congestion(seed):
    rng = np.random.default_rng(seed)
    game, types = cg.random_linear_game(rng, int(rng.integers(2, 5)), int(rng.integers(2, 5)), n_types=2)
    types = list(types)
    x = list(cg.brute_force_opt(game, types)[1])
    # cost games: report the smallest lambda at mu = 1/3
    return minimal_lambda(game, 1 / 3, x, lambda i, v, xi: xi, types)


FAMILIES = [
    ("first-price, mu=1", first_price, 0.25, "max"),
    ("proportional, mu=1", proportional, bw.bandwidth_lambda(0.05), "max"),
    ("linear congestion, mu=1/3", congestion, 5 / 3, "min"),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--instances", type=int, default=50)
    args = parser.parse_args()
    print(f"{'family':<28}{'claimed':>10}{'tightest':>10}{'status':>12}")
    for name, fn, claimed, sense in FAMILIES:
        lams = np.array([fn(s) for s in range(args.instances)])
        # mechanisms need verified >= claimed, cost games need verified <= claimed
        if sense == "max":
            tightest = np.nanmin(lams)
            ok = tightest >= claimed
        else:
            tightest = np.nanmax(lams)
            ok = tightest <= claimed
        print(f"{name:<28}{claimed:>10.4f}{tightest:>10.4f}{'ok' if ok else 'VIOLATED':>12}")


if __name__ == "__main__":
    main()
