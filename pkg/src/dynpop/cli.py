"""Command line entry point: ``dynpop <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import harness
from .coupling import disagreement, load_distribution, maximal_coupling, tv_distance
from .errors import ArgumentError, BoundFailure, CapacityError, ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_BOUND = 0, 2, 3, 4


def _print(obj: dict) -> None:
    print(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out_dir) if args.out_dir else harness.default_out_dir()


def _strict(args: argparse.Namespace, holds: bool, what: str) -> None:
    if args.strict and not holds:
        raise BoundFailure(f"{what} failed")


def cmd_run(args: argparse.Namespace) -> None:
    cfg = harness.ExperimentConfig.load(args.config)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    reports = []
    for seed in seeds:
        report = harness.run_experiment(cfg, seed)
        for path in harness.emit(report, _out_dir(args), args.format):
            print(path)
        reports.append(report)
    summary = harness.summarize(reports)
    print(f"mean ratio {summary['mean_ratio']:.4f}  k {summary['k']:.3f}  fitted C_R {summary['fitted_c_r']:.3f}")
    for v in summary["verdicts"]:
        print(f"{v['name']}: {'holds' if v['holds'] else 'FAILS'}  lhs {v['lhs']:.2f}  rhs {v['rhs']:.2f}")
    _strict(args, summary["holds"], "bound check")


def cmd_sweep(args: argparse.Namespace) -> None:
    cfg = harness.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seeds=[args.seed])
    rows = harness.sweep(cfg, args.ps)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    cols = list(rows[0])
    with path.open("w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) + "\n")
    print(path)
    for r in rows:
        print(f"p={r['p']:<8g} ratio {r['mean_ratio']:.4f}  k {r['k']:.2f}")
    _strict(args, all(r["holds"] for r in rows), "sweep bound check")


def cmd_verify(args: argparse.Namespace) -> None:
    cfg = harness.ExperimentConfig.load(args.config)
    report = harness.check_smoothness(cfg, args.lam)
    _print(report)
    _strict(args, report["holds"], "smoothness")


def cmd_oracle(args: argparse.Namespace) -> None:
    _print(harness.oracle_report(harness.ExperimentConfig.load(args.config)))


def cmd_nash(args: argparse.Namespace) -> None:
    _print(harness.nash_report(harness.ExperimentConfig.load(args.config)))


def cmd_couple(args: argparse.Namespace) -> None:
    try:
        mu, eta = load_distribution(args.mu), load_distribution(args.eta)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read distributions: {exc}") from exc
    joint = maximal_coupling(mu, eta)
    out = {"tv": tv_distance(mu, eta), "disagreement": disagreement(joint), "joint": joint.tolist()}
    if args.samples:
        rng = np.random.default_rng(args.seed or 0)
        flat = rng.choice(joint.size, size=args.samples, p=joint.ravel() / joint.sum())
        rows, cols = np.divmod(flat, joint.shape[1])
        out["empirical_disagreement"] = float(np.mean(rows != cols))
    _print(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynpop", description="Learning dynamics under player turnover.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the config's seeds")
        p.add_argument("--out-dir", default=None, help=f"output directory (default ${harness.OUT_DIR_ENV} or ./results)")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
        p.add_argument("--strict", action="store_true", help="exit 4 when a bound check fails")

    p = sub.add_parser("run", help="simulate and emit per-round CSV plus JSON summary")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="welfare ratio against turnover rate")
    common(p)
    p.add_argument("--ps", type=float, nargs="+", default=[0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-smoothness", help="exhaustive smoothness check on the listed players")
    common(p)
    p.add_argument("--lam", type=float, default=None, help="lambda to test (default: the game's claimed value)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="exact optimum and greedy-layered value")
    common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("nash", help="pure equilibria and their efficiency")
    common(p)
    p.set_defaults(func=cmd_nash)

    p = sub.add_parser("couple", help="maximal coupling of two distribution dumps")
    common(p, config=False)
    p.add_argument("--mu", required=True)
    p.add_argument("--eta", required=True)
    p.add_argument("--samples", type=int, default=0)
    p.set_defaults(func=cmd_couple)
    return parser


def _warning_line(message, category, filename, lineno, line=None) -> str:
    return f"warning: {message}\n"


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    previous = warnings.formatwarning
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.formatwarning = _warning_line
            args.func(args)
    except (ConfigError, ArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except BoundFailure as exc:
        print(f"bound failure: {exc}", file=sys.stderr)
        return EXIT_BOUND
    finally:
        warnings.formatwarning = previous
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
