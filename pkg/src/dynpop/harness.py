"""Experiment orchestration: population + learners + stage game + benchmark.

A run is a pure function of (config, seed). Three independent random streams
are spawned from the seed: one for turnover, one for action sampling and one
for randomized benchmarks.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import bandwidth as bw
from . import congestion as cg
from . import matching as mt
from .core import COST, MECHANISM, StabilityLedger, stability_from_arrays, theorem_rhs
from .coupling import coupled_solutions, exponential_matcher
from .errors import ArgumentError, ConfigError
from .learners import FixedShare, GeometricCovering, Hedge, default_eta
from .population import PopulationConfig, PopulationRun, simulate_population

CSV_COLUMNS = ("t", "welfare", "opt", "benchmark", "cum_ratio", "phi", "changes")
DEFAULT_BENCHMARK = {"matching": "greedy-layered", "bandwidth": "greedy-layered", "congestion": "brute-opt-stabilized"}
OUT_DIR_ENV = "DYNPOP_OUT_DIR"


def _schema() -> dict:
    return json.loads(resources.files("dynpop").joinpath("schema/config.schema.json").read_text())


@dataclass
class LearnerConfig:
    kind: str = "fixed-share"
    eta: float | None = None
    alpha_mix: float | None = None


@dataclass
class GridConfig:
    delta: float | None = None
    epsilon: float | None = None
    zeta: float | None = None
    theta: float | None = None


@dataclass
class ExperimentConfig:
    game: str
    T: int
    instance: dict | None = None
    instance_path: str | None = None
    n: int | None = None
    p: float = 0.0
    seeds: list[int] = field(default_factory=lambda: [0])
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    benchmark: str | None = None
    grid: GridConfig = field(default_factory=GridConfig)
    arrival_policy: str = "iid-pool"
    script: list[list[int]] | None = None
    checks: list[str] | None = None
    c_r: float | None = None
    private_epsilon: float = 0.2

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        try:
            jsonschema.validate(data, _schema())
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config: {exc.message} at {list(exc.absolute_path)}") from exc
        data = dict(data)
        data["learner"] = LearnerConfig(**data.get("learner", {}))
        data["grid"] = GridConfig(**data.get("grid", {}))
        if data.get("instance_path") and base_dir is not None:
            path = Path(data["instance_path"])
            data["instance_path"] = str(path if path.is_absolute() else Path(base_dir) / path)
        cfg = cls(**data)
        if cfg.benchmark is None:
            cfg.benchmark = DEFAULT_BENCHMARK[cfg.game]
        if cfg.benchmark == "coupled-private" and cfg.game != "matching":
            raise ConfigError("the coupled-private benchmark is only wired for matching")
        if cfg.benchmark == "brute-opt-stabilized" and cfg.game != "congestion":
            raise ConfigError("brute-opt-stabilized is the congestion benchmark")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        def strip(d: dict) -> dict:
            return {k: v for k, v in d.items() if v is not None}

        out = strip(dataclasses.asdict(self))
        out["learner"] = strip(out["learner"])
        out["grid"] = strip(out["grid"])
        return out

    def load_instance(self) -> dict:
        if self.instance is not None:
            return self.instance
        try:
            return json.loads(Path(self.instance_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read instance {self.instance_path}: {exc}") from exc

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# ----------------------------------------------------------------------------
# game adapters


class _Arena:
    """What the run loop needs from a game: payoffs, losses, oracles and a benchmark."""

    kind = MECHANISM
    empty_code = -1
    property_one = False
    lam = mu = alpha = 1.0
    phi = 0

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._opt_cache: dict[tuple, float] = {}

    def opt(self, ids: np.ndarray, types: Any) -> float:
        key = tuple(int(i) for i in ids)
        if key not in self._opt_cache:
            self._opt_cache[key] = self._opt(types)
        return self._opt_cache[key]

    def losses(self, payoff: np.ndarray) -> np.ndarray:
        return np.clip(1.0 - payoff, 0.0, 1.0) if self.kind == MECHANISM else np.clip(payoff, 0.0, 1.0)

    def prepare(self, pop: PopulationRun, rng: np.random.Generator) -> None:
        pass

    def advance(self, t: int, ids: np.ndarray, types: Any) -> None:
        pass

    def theorem(self, T: int, n: int, c_r: float, k: float, kappa: float, welfare_sum: float, opt_sum: float
                ) -> list[mt.BoundVerdict]:
        raise NotImplementedError


class MatchingArena(_Arena):
    kind = MECHANISM
    property_one = True
    lam, mu = 0.5, 1.0

    def __init__(self, cfg: ExperimentConfig):
        super().__init__(cfg)
        inst = mt.MatchingInstance.from_dict(cfg.load_instance())
        self.inst = inst
        self.rho = inst.rho
        self.eps = cfg.grid.epsilon if cfg.grid.epsilon is not None else inst.epsilon
        self.delta = cfg.grid.delta if cfg.grid.delta is not None else 0.25
        self.grid = mt.BidGrid.from_delta(self.delta, self.rho)
        self.pool = inst.players if inst.pool is None else np.vstack([inst.players, inst.pool])
        self.n = cfg.n or inst.players.shape[0]
        if self.n > inst.players.shape[0]:
            raise ConfigError("n exceeds the number of listed players")
        self.initial = np.arange(self.n)
        self.game = mt.FirstPriceGame(self.n, inst.m, self.grid, inst.s, capped=True)
        self.N = self.game.n_strategies
        self.m_eff = min(self.n, inst.m * inst.s)
        self.alpha = 2 * (1 + self.eps)

    def types(self, ids: np.ndarray) -> np.ndarray:
        return self.pool[ids]

    def allowed(self, types: np.ndarray) -> np.ndarray:
        return self.game.allowed(types)

    def payoffs(self, actions: np.ndarray, types: np.ndarray) -> np.ndarray:
        return self.game.counterfactual(actions, types)

    def realized(self, actions: np.ndarray, types: np.ndarray) -> tuple[float, float]:
        out = self.game.evaluate(actions[None, :], types)
        return float(out.objective[0]), float(out.payments.sum())

    def _opt(self, types: np.ndarray) -> float:
        return mt.optimal_matching(types, self.inst.s)[0]

    def badness(self, ids: np.ndarray, slot: int, cand: int) -> float:
        trial = ids.copy()
        trial[slot] = cand
        return -self.opt(trial, self.types(trial))

    def prepare(self, pop: PopulationRun, rng: np.random.Generator) -> None:
        first = self.types(pop.types[0])
        if self.cfg.benchmark == "coupled-private":
            rows = self.pool[pop.types]
            eps = self.cfg.private_epsilon
            self._private = coupled_solutions(lambda v: exponential_matcher(v, eps, self.inst.s), rows, rng)
            self._current = self._private[0]
        else:
            self.state = mt.LayeredMatching(first, self.rho, self.eps, self.inst.s)

    def replace(self, slot: int, row: np.ndarray) -> None:
        if self.cfg.benchmark != "coupled-private":
            self.state.replace(slot, row)

    def advance(self, t: int, ids: np.ndarray, types: np.ndarray) -> None:
        if self.cfg.benchmark == "coupled-private":
            self._current = self._private[t]

    def assignment(self) -> list[int | None]:
        return list(self._current) if self.cfg.benchmark == "coupled-private" else self.state.assignment()

    def solution(self) -> np.ndarray:
        return np.array([-1 if j is None else j for j in self.assignment()], dtype=np.int64)

    def bench_value(self, types: np.ndarray) -> float:
        return self.game.solution_value(self.assignment(), types)

    @property
    def phi(self) -> int:
        return 0 if self.cfg.benchmark == "coupled-private" else self.state.phi

    def deviation(self, types: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x = self.assignment()
        return np.array([mt.smoothness_deviation(types[i], x[i], self.grid) for i in range(self.n)])

    def theorem(self, T, n, c_r, k, kappa, welfare_sum, opt_sum):
        if self.cfg.benchmark == "coupled-private":
            return []
        return mt.matching_bound_check(welfare_sum, opt_sum, T=T, n=n, m=self.m_eff, n_strategies=self.N,
                                       p=self.cfg.p, rho=self.rho, eps=self.eps, c_r=c_r, kappa=kappa)

    def p_cap(self, c_r: float) -> float:
        return mt.p_cap(self.rho, self.eps, max(c_r, 1e-12), self.N, self.cfg.T)


class BandwidthArena(_Arena):
    kind = MECHANISM
    empty_code = 0
    mu = 1.0

    def __init__(self, cfg: ExperimentConfig):
        super().__init__(cfg)
        inst = bw.BandwidthInstance.from_dict(cfg.load_instance())
        self.inst = inst
        self.rho, self.delta = inst.rho, inst.delta
        self.eps = cfg.grid.epsilon if cfg.grid.epsilon is not None else 0.25
        zeta = cfg.grid.zeta if cfg.grid.zeta is not None else bw.grid_step(self.rho, self.eps, self.delta)
        self.zeta = 1.0 / math.ceil(1.0 / zeta - 1e-9)
        self.pool = inst.players if inst.pool is None else np.vstack([inst.players, inst.pool])
        self.n = cfg.n or inst.players.shape[0]
        if self.n > inst.players.shape[0]:
            raise ConfigError("n exceeds the number of listed players")
        self.initial = np.arange(self.n)
        self.game = bw.ProportionalGame(self.n, self.zeta, self.delta)
        self.N = self.game.n_strategies
        self.lam = bw.bandwidth_lambda(self.eps)
        self.alpha = (1 + self.eps) / (1 - self.eps)
        self.theta = cfg.grid.theta

    def types(self, ids: np.ndarray) -> np.ndarray:
        return self.pool[ids]

    def allowed(self, types: np.ndarray) -> np.ndarray:
        return np.ones((self.n, self.N), dtype=bool)

    def payoffs(self, actions, types):
        return self.game.counterfactual(actions, types)

    def realized(self, actions, types):
        out = self.game.evaluate(actions[None, :], types)
        return float(out.objective[0]), float(out.payments.sum())

    def _opt(self, types):
        return bw.welfare(types, bw.waterfill_optimum(types))

    def badness(self, ids, slot, cand):
        trial = ids.copy()
        trial[slot] = cand
        return -self.opt(trial, self.types(trial))

    def prepare(self, pop, rng):
        self.state = bw.LayeredSegments(self.types(pop.types[0]), self.rho, self.eps, self.delta)

    def replace(self, slot, row):
        self.state.replace(slot, row)

    def solution(self):
        return self.state.counts.copy()

    def bench_value(self, types):
        return self.state.welfare()

    @property
    def phi(self):
        return self.state.phi

    def _calibrated_theta(self) -> float:
        if self.theta is None:
            sample = self.pool[: min(2, len(self.pool))]
            counts = bw.segmented_optimum(sample, 0.25)
            self.theta = bw.verify_bandwidth_smoothness(sample, counts, self.eps, 1 / 8, 0.25).theta
        return self.theta

    def deviation(self, types, rng):
        theta = self._calibrated_theta()
        out = np.empty(self.n, dtype=np.int64)
        for i in range(self.n):
            atoms = bw.smoothness_deviation_bandwidth(types[i], int(self.state.counts[i]), theta, self.zeta,
                                                      self.delta)
            levels, probs = zip(*atoms)
            out[i] = min(int(rng.choice(levels, p=np.asarray(probs) / sum(probs))), self.N - 1)
        return out

    def theorem(self, T, n, c_r, k, kappa, welfare_sum, opt_sum):
        rhs = theorem_rhs("mech", lam=self.lam, mu=1.0, alpha=self.alpha, c_r=c_r, n=n, T=T, N=self.N, k=k,
                          opt_sum=opt_sum)
        return [mt.BoundVerdict(welfare_sum >= rhs - 1e-9, welfare_sum, rhs, "mech")]

    def p_cap(self, c_r: float) -> float:
        return bw.p_cap(self.rho, self.inst.alpha, self.eps, self.N, self.cfg.T)


class CongestionArena(_Arena):
    kind = COST
    lam, mu, alpha = 5 / 3, 1 / 3, 1.0

    def __init__(self, cfg: ExperimentConfig):
        super().__init__(cfg)
        inst = cg.CongestionInstance.from_dict(cfg.load_instance())
        self.inst = inst
        self.n = cfg.n or (len(inst.players) if inst.players else None)
        if self.n is None:
            raise ConfigError("congestion configs need n or an explicit players list")
        players = inst.players or [0] * self.n
        if len(players) < self.n:
            raise ConfigError("n exceeds the number of listed players")
        self.initial = np.asarray(players[: self.n])
        self.pool = np.arange(len(inst.type_strategies))
        self.game = inst.game(self.n).scaled()
        self.N = self.game.n_strategies
        self.bench = cg.StabilizedOpt(self.game)

    def types(self, ids):
        return [int(i) for i in ids]

    def allowed(self, types):
        return self.game.allowed(types)

    def payoffs(self, actions, types):
        return self.game.counterfactual(actions, types)

    def realized(self, actions, types):
        return float(self.game.evaluate(actions[None, :], types).objective[0]), 0.0

    def _opt(self, types):
        return self.bench.optimum(types)[0]

    def badness(self, ids, slot, cand):
        trial = ids.copy()
        trial[slot] = cand
        return self.opt(trial, self.types(trial))

    def replace(self, slot, row):
        pass

    def advance(self, t, ids, types):
        self.bench.update(types)

    def solution(self):
        return self.bench.current.copy()

    def bench_value(self, types):
        return self.game.solution_value(self.bench.current, types)

    def deviation(self, types, rng):
        return self.bench.current.copy()

    def theorem(self, T, n, c_r, k, kappa, welfare_sum, opt_sum):
        return [cg.congestion_bound_check(welfare_sum, opt_sum, T=T, n=n, n_strategies=self.N, c_r=c_r, k=k)]

    def p_cap(self, c_r: float) -> float:
        return math.nan


def make_arena(cfg: ExperimentConfig) -> _Arena:
    cls = {"matching": MatchingArena, "bandwidth": BandwidthArena, "congestion": CongestionArena}[cfg.game]
    try:
        return cls(cfg)
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from exc


# ----------------------------------------------------------------------------
# learners for a whole population


class _CoveringBank:
    def __init__(self, n: int, N: int, T: int, mask: np.ndarray):
        self.N, self.T = N, T
        self.members = [GeometricCovering(N, T, mask[i]) for i in range(n)]

    @property
    def distribution(self) -> np.ndarray:
        return np.stack([m.distribution for m in self.members])

    def step(self, losses: np.ndarray) -> None:
        for m, row in zip(self.members, losses):
            m.step(row)

    def reset(self, rows: Sequence[int], mask: np.ndarray) -> None:
        for r, mrow in zip(rows, mask):
            self.members[r] = GeometricCovering(self.N, self.T, mrow)


def _make_bank(cfg: ExperimentConfig, n: int, N: int, mask: np.ndarray):
    choice = cfg.learner
    eta = choice.eta if choice.eta is not None else default_eta(N, cfg.T, cfg.p)
    if choice.kind == "fixed-share":
        alpha = choice.alpha_mix if choice.alpha_mix is not None else cfg.p
        return FixedShare(N, eta, alpha, mask=mask, rows=n)
    if choice.kind == "hedge":
        return Hedge(N, eta, mask=mask, rows=n)
    if choice.kind == "covering":
        return _CoveringBank(n, N, cfg.T, mask)
    return None


def _sample(dist: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(dist, axis=1)
    u = rng.random(dist.shape[0]) * cdf[:, -1]
    idx = (cdf < u[:, None]).sum(axis=1)
    last = dist.shape[1] - 1 - np.argmax(dist[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last)


# ----------------------------------------------------------------------------
# the run


@dataclass
class RunReport:
    config: ExperimentConfig
    seed: int
    kind: str
    n: int
    N: int
    welfare: np.ndarray
    revenue: np.ndarray
    opt: np.ndarray
    benchmark: np.ndarray
    phi: np.ndarray
    changes: np.ndarray
    ledger: StabilityLedger
    intervals: list[tuple[int, int, int, float, bool]]
    fitted_c_r: float
    events: int
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.welfare)

    @property
    def cum_ratio(self) -> np.ndarray:
        w, o = np.cumsum(self.welfare), np.cumsum(self.opt)
        return np.divide(w, o, out=np.ones_like(w), where=o > 0)

    @property
    def welfare_sum(self) -> float:
        return float(self.welfare.sum())

    @property
    def opt_sum(self) -> float:
        return float(self.opt.sum())

    @property
    def ratio(self) -> float:
        return float(self.cum_ratio[-1])


def fit_constant(intervals: Sequence[tuple[int, int, int, float, bool]], N: int, T: int, held_only: bool) -> float:
    """Largest R / sqrt(len * ln(N T)) over the benchmark-constant intervals."""
    best = 0.0
    log_term = math.log(N * T) if N * T > 1 else 1.0
    for _, a, b, regret, held in intervals:
        if held_only and not held:
            continue
        best = max(best, regret / math.sqrt((b - a) * log_term))
    return best


def run_experiment(cfg: ExperimentConfig, seed: int | None = None) -> RunReport:
    """Simulate one seed and collect per-round metrics, regrets and stability counters."""
    seed = cfg.seeds[0] if seed is None else seed
    arena = make_arena(cfg)
    n, N, T = arena.n, arena.N, cfg.T
    pop_ss, play_ss, bench_ss = np.random.SeedSequence(seed).spawn(3)
    pop_cfg = PopulationConfig(n, cfg.p, T, int(pop_ss.generate_state(1)[0]), cfg.arrival_policy)
    pop = simulate_population(pop_cfg, len(arena.pool), script=cfg.script, badness=arena.badness,
                              initial=arena.initial)
    rng = np.random.default_rng(play_ss)
    bench_rng = np.random.default_rng(bench_ss)
    arena.prepare(pop, bench_rng)

    ids = pop.types[0]
    types = arena.types(ids)
    mask = arena.allowed(types)
    bank = _make_bank(cfg, n, N, mask)

    welfare = np.zeros(T)
    revenue = np.zeros(T)
    opt = np.zeros(T)
    bench = np.zeros(T)
    phi = np.zeros(T, dtype=np.int64)
    changes = np.zeros(T, dtype=np.int64)
    solutions = np.zeros((T, n), dtype=np.int64)

    start = np.ones(n, dtype=np.int64)
    acc = np.zeros((n, N))
    incurred = np.zeros(n)
    intervals: list[tuple[int, int, int, float, bool]] = []

    def close(i: int, tau2: int) -> None:
        allowed = mask[i]
        regret = float(incurred[i] - acc[i][allowed].min())
        intervals.append((i, int(start[i]), tau2, regret, bool(solutions[tau2 - 2, i] != arena.empty_code)))
        start[i] = tau2
        acc[i] = 0.0
        incurred[i] = 0.0

    by_round: dict[int, list] = {}
    for e in pop.events:
        by_round.setdefault(e.t, []).append(e)

    for t in range(T):
        if t > 0:
            ids = pop.types[t]
            types = arena.types(ids)
            replaced = [e.slot for e in by_round.get(t + 1, [])]
            for slot in replaced:
                arena.replace(slot, arena.pool[ids[slot]])
            if replaced:
                mask = arena.allowed(types)
                if bank is not None:
                    bank.reset(replaced, mask[replaced])
        arena.advance(t, ids, types)
        solutions[t] = arena.solution()
        if t > 0:
            moved = (solutions[t] != solutions[t - 1]) | (pop.participant[t] != pop.participant[t - 1])
            changes[t] = int(np.count_nonzero(solutions[t] != solutions[t - 1]))
            for i in np.flatnonzero(moved):
                close(int(i), t + 1)

        if bank is None:
            actions = arena.deviation(types, rng)
            dist = np.zeros((n, N))
            dist[np.arange(n), actions] = 1.0
        else:
            dist = bank.distribution
            actions = _sample(dist, rng)
        payoff = arena.payoffs(actions, types)
        losses = arena.losses(payoff)
        acc += losses
        incurred += (dist * losses).sum(axis=1)
        if bank is not None:
            bank.step(losses)
        welfare[t], revenue[t] = arena.realized(actions, types)
        opt[t] = arena.opt(ids, types)
        bench[t] = arena.bench_value(types)
        phi[t] = arena.phi

    for i in range(n):
        if start[i] <= T:
            close(i, T + 1)

    ledger = stability_from_arrays(pop.participant, solutions, empty=arena.empty_code)
    ledger.phi = phi.tolist()
    fitted = fit_constant(intervals, N, T, held_only=arena.property_one)
    meta = {"lambda": arena.lam, "mu": arena.mu, "alpha": arena.alpha, "scale": getattr(arena.game, "scale", 1.0)}
    return RunReport(cfg, seed, arena.kind, n, N, welfare, revenue, opt, bench, phi, changes, ledger,
                     intervals, fitted, len(pop.events), meta)


def run_many(cfg: ExperimentConfig, seeds: Sequence[int] | None = None) -> list[RunReport]:
    return [run_experiment(cfg, s) for s in (cfg.seeds if seeds is None else seeds)]


def summarize(reports: Sequence[RunReport], c_r: float | None = None, warn: bool = True) -> dict:
    """Means over seeds plus bound verdicts evaluated on those means."""
    if not reports:
        raise ArgumentError("no reports to summarize")
    cfg = reports[0].config
    arena = make_arena(cfg)
    fitted = max(r.fitted_c_r for r in reports)
    c_r = c_r if c_r is not None else (cfg.c_r if cfg.c_r is not None else fitted)
    T, n = reports[0].T, reports[0].n
    welfare_sum = float(np.mean([r.welfare_sum for r in reports]))
    opt_sum = float(np.mean([r.opt_sum for r in reports]))
    k = float(np.mean([r.ledger.k_mean for r in reports]))
    kappa = float(np.mean([r.ledger.kappa_mean for r in reports]))
    verdicts = arena.theorem(T, n, c_r, k, kappa, welfare_sum, opt_sum)
    wanted = set(cfg.checks) if cfg.checks else None
    verdicts = [v for v in verdicts if wanted is None or v.name in wanted]
    cap = arena.p_cap(c_r)
    if warn and math.isfinite(cap) and cfg.p > cap:
        warnings.warn(f"p={cfg.p} exceeds the turnover cap {cap:.3g} of the efficiency guarantee", stacklevel=2)
    return {
        "game": cfg.game,
        "kind": reports[0].kind,
        "seeds": [r.seed for r in reports],
        "T": T,
        "n": n,
        "n_strategies": reports[0].N,
        "p": cfg.p,
        "welfare_sum": welfare_sum,
        "opt_sum": opt_sum,
        "benchmark_sum": float(np.mean([r.benchmark.sum() for r in reports])),
        "mean_ratio": float(np.mean([r.ratio for r in reports])),
        "k": k,
        "kappa": kappa,
        "fitted_c_r": fitted,
        "c_r": c_r,
        "p_cap": cap if math.isfinite(cap) else None,
        "events": float(np.mean([r.events for r in reports])),
        "smoothness": reports[0].meta,
        "verdicts": [v.as_dict() for v in verdicts],
        "holds": all(v.holds for v in verdicts),
    }


def sweep(cfg: ExperimentConfig, ps: Sequence[float]) -> list[dict]:
    """Welfare ratio and stability per turnover rate, averaged over the config's seeds."""
    rows = []
    for p in ps:
        s = summarize(run_many(cfg.replace(p=float(p))), warn=False)
        rows.append({"p": float(p), "mean_ratio": s["mean_ratio"], "welfare_sum": s["welfare_sum"],
                     "opt_sum": s["opt_sum"], "k": s["k"], "kappa": s["kappa"], "fitted_c_r": s["fitted_c_r"],
                     "holds": s["holds"]})
    return rows


# ----------------------------------------------------------------------------
# output


def _fmt(x: float) -> str:
    return repr(float(x))


def default_out_dir() -> Path:
    import os

    return Path(os.environ.get(OUT_DIR_ENV, "results"))


def emit(report: RunReport, out_dir: str | Path, fmt: str = "both") -> list[Path]:
    """Write the per-round CSV and/or the JSON summary for one run."""
    if fmt not in ("csv", "json", "both"):
        raise ArgumentError(f"unknown format {fmt!r}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    written = []
    if fmt in ("csv", "both"):
        path = out_dir / f"run_seed{report.seed}.csv"
        ratio = report.cum_ratio
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for t in range(report.T):
                writer.writerow([t + 1, _fmt(report.welfare[t]), _fmt(report.opt[t]), _fmt(report.benchmark[t]),
                                 _fmt(ratio[t]), int(report.phi[t]), int(report.changes[t])])
        written.append(path)
    if fmt in ("json", "both"):
        path = out_dir / f"run_seed{report.seed}.json"
        summary = summarize([report], warn=False)
        summary["config"] = report.config.to_dict()
        path.write_text(json.dumps(summary, indent=2) + "\n")
        written.append(path)
    return written


def read_run_csv(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in CSV_COLUMNS}


# ----------------------------------------------------------------------------
# one-shot checks on the configured instance


def check_smoothness(cfg: ExperimentConfig, lam: float | None = None) -> dict:
    """Exhaustive smoothness check of the stage game on the instance's listed players."""
    from .core import SmoothnessParams, minimal_lambda, verify_smoothness

    arena = make_arena(cfg)
    if cfg.game == "bandwidth":
        types = arena.types(arena.initial)
        counts = bw.segmented_optimum(types, arena.delta)
        rep = bw.verify_bandwidth_smoothness(types, counts, arena.eps, arena.zeta, arena.delta, target=lam)
        return {"game": "bandwidth", "holds": rep.holds, "lambda": rep.target_lambda, "mu": 1.0,
                "verified_lambda": rep.verified_lambda, "theta": rep.theta, "slack": rep.slack,
                "worst_profile": rep.worst_profile}
    types = arena.types(arena.initial)
    if cfg.game == "matching":
        x = mt.optimal_matching(types, arena.inst.s)[1]
        game = mt.FirstPriceGame(arena.n, arena.inst.m, arena.grid, arena.inst.s, capped=False)
        params = SmoothnessParams(0.5 - arena.delta if lam is None else lam, 1.0)

        def deviation(i, v_i, x_i):
            return mt.smoothness_deviation(v_i, x_i, arena.grid)
    else:
        game = arena.game
        x = list(cg.brute_force_opt(game, types)[1])
        params = SmoothnessParams(5 / 3 if lam is None else lam, 1 / 3)

        def deviation(i, v_i, x_i):
            return cg.congestion_deviation(game, v_i, x_i)
    rep = verify_smoothness(game, params, x, deviation, types)
    tight = minimal_lambda(game, params.mu, x, deviation, types)
    return {"game": cfg.game, "holds": rep.holds, "lambda": params.lam, "mu": params.mu, "verified_lambda": tight,
            "slack": rep.slack, "violations": rep.violations, "checked": rep.checked,
            "worst_profile": None if rep.worst_profile is None else list(rep.worst_profile)}


def nash_report(cfg: ExperimentConfig) -> dict:
    """Pure equilibria of the stage game on the listed players, with their efficiency against OPT."""
    from .core import enumerate_pure_nash, social_objective

    arena = make_arena(cfg)
    types = arena.types(arena.initial)
    game = arena.game
    opt = arena.opt(arena.initial, types)
    rows = []
    for s in enumerate_pure_nash(game, types):
        val = social_objective(game, s, types)
        rows.append({"profile": list(s), "objective": val, "ratio": val / opt if opt > 0 else None})
    ratios = [r["ratio"] for r in rows if r["ratio"] is not None]
    worst = (max(ratios) if arena.kind == COST else min(ratios)) if ratios else None
    return {"game": cfg.game, "kind": arena.kind, "opt": opt, "equilibria": rows, "worst_ratio": worst}


def oracle_report(cfg: ExperimentConfig) -> dict:
    """Exact optimum for the listed players, plus the greedy-layered value where one exists."""
    arena = make_arena(cfg)
    types = arena.types(arena.initial)
    out: dict[str, Any] = {"game": cfg.game, "opt": arena.opt(arena.initial, types)}
    if cfg.game == "matching":
        out["assignment"] = mt.optimal_matching(types, arena.inst.s)[1]
        state = mt.LayeredMatching(types, arena.rho, arena.eps, arena.inst.s)
        out.update(greedy=state.welfare(), greedy_assignment=state.assignment(), phi=state.phi)
    elif cfg.game == "bandwidth":
        out["allocation"] = [float(v) for v in bw.waterfill_optimum(types)]
        state = bw.LayeredSegments(types, arena.rho, arena.eps, arena.delta)
        out.update(greedy=state.welfare(), greedy_counts=[int(c) for c in state.counts], phi=state.phi)
    else:
        out["profile"] = [int(a) for a in arena.bench.optimum(types)[1][0]]
        out["scale"] = arena.game.scale
    return out
