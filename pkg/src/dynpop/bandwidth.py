"""Kelly proportional sharing of one divisible resource.

Valuations are quadratic, v(x) = a x - (b/2) x^2, stored as an (n, 2) array of
(a, b) rows. Bids live on a grid of step zeta and strategies are the integer
bid levels 0..1/zeta.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import MECHANISM, Outcome, SmoothnessParams, StageGame, minimal_lambda, verify_smoothness
from .errors import ArgumentError, ConfigError

_TOL = 1e-12


def value(types: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-player value at allocation x (broadcasts over leading axes of x)."""
    types = np.asarray(types, dtype=float)
    a, b = types[:, 0], types[:, 1]
    x = np.asarray(x, dtype=float)
    return a * x - 0.5 * b * x * x


def check_types(types: np.ndarray, rho: float, alpha: float) -> np.ndarray:
    types = np.asarray(types, dtype=float).reshape(-1, 2)
    a, b = types[:, 0], types[:, 1]
    if np.any(b < -_TOL) or np.any(b > alpha + _TOL):
        raise ArgumentError(f"curvature must lie in [0, {alpha}]")
    if np.any(a - b < rho - _TOL):
        raise ArgumentError(f"marginal value drops below rho={rho}")
    if np.any(a - b / 2 > 1 + _TOL):
        raise ArgumentError("value of the whole resource exceeds 1")
    return types


def random_types(rng: np.random.Generator, n: int, rho: float, alpha: float) -> np.ndarray:
    # a - b >= rho and a - b/2 <= 1 leave room only for b <= 2(1 - rho)
    b = rng.uniform(0.0, min(alpha, 2.0 * (1.0 - rho)), size=n)
    a = rng.uniform(rho + b, 1.0 + b / 2)
    return np.column_stack([a, b])


def proportional_allocate(bids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    bids = np.asarray(bids, dtype=float)
    if np.any(bids < 0):
        raise ArgumentError("negative bid")
    total = bids.sum()
    x = bids / total if total > 0 else np.zeros_like(bids)
    return x, bids.copy()


def welfare(types: np.ndarray, x: np.ndarray) -> float:
    return float(value(types, x).sum())


def waterfill_optimum(types: np.ndarray, iterations: int = 200) -> np.ndarray:
    """Welfare-optimal continuous split: equalize marginals at a common level M.

    Players with constant marginal (b = 0) sitting exactly at the final level
    absorb the remaining capacity, lowest index first.
    """
    types = np.asarray(types, dtype=float).reshape(-1, 2)
    a, b = types[:, 0], types[:, 1]
    curved = b > 0

    def demand(level: float) -> np.ndarray:
        x = np.zeros_like(a)
        x[curved] = np.clip((a[curved] - level) / b[curved], 0.0, 1.0)
        x[~curved] = (a[~curved] > level).astype(float)
        return x

    lo, hi = 0.0, float(a.max())
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if demand(mid).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    level = hi
    x = demand(level)
    flat = np.flatnonzero(~curved & (np.abs(a - level) <= 1e-9))
    x[flat] = 0.0
    room = max(0.0, 1.0 - x.sum())
    for i in flat:
        x[i] = min(1.0, room)
        room -= x[i]
    if x.sum() > 1.0:
        x /= x.sum()
    return x


def marginals(types: np.ndarray, delta: float) -> np.ndarray:
    """v_i(j delta) - v_i((j-1) delta) for j = 1..1/delta, shape (n, K)."""
    K = segment_count(delta)
    grid = np.arange(K + 1) * delta
    vals = value(np.asarray(types, dtype=float), grid[:, None]).T
    return np.diff(vals, axis=1)


def segment_count(delta: float) -> int:
    K = round(1.0 / delta)
    if K < 1 or abs(K * delta - 1.0) > 1e-9:
        raise ArgumentError(f"1/delta = {1 / delta} is not integral")
    return int(K)


def segmented_optimum(types: np.ndarray, delta: float) -> np.ndarray:
    """Segment counts maximizing welfare when shares are multiples of delta.

    Marginals are non-increasing, so taking the K largest over all players
    (ties to the lower index) is optimal and gives each player a prefix.
    """
    marg = marginals(types, delta)
    n, K = marg.shape
    order = sorted(((-marg[i, j], i, j) for i in range(n) for j in range(K)))[:K]
    counts = np.zeros(n, dtype=np.int64)
    for _, i, _ in order:
        counts[i] += 1
    return counts


def segmented_welfare(types: np.ndarray, counts: np.ndarray, delta: float) -> float:
    return welfare(types, np.asarray(counts) * delta)


def tight_delta_bound(eps: float, rho: float, alpha: float) -> float:
    return eps * rho / (alpha * (1 - eps))


def simple_delta_bound(eps: float, rho: float, alpha: float) -> float:
    return 2 * eps * rho / alpha


def delta_below(bound: float) -> float:
    """Largest delta = 1/K not exceeding ``bound``."""
    return 1.0 / math.ceil(1.0 / bound - 1e-12)


def grid_step(rho: float, eps: float, delta: float) -> float:
    return min(rho * delta, eps * delta)


def segment_layer(marginal: float, rho: float, eps: float, delta: float) -> int:
    base = rho * delta
    if marginal < base * (1 - 1e-9):
        raise ArgumentError(f"marginal {marginal} below rho*delta")
    ell = int(math.floor(math.log(max(marginal, base) / base) / math.log1p(eps) + 1e-12)) + 1
    return ell


@dataclass(frozen=True)
class SegmentMove:
    player: int
    old: int
    new: int
    delta_phi: int
    kind: str


@dataclass
class LayeredSegments:
    """Layered greedy over 1/delta equal segments with incumbent-favoring ties."""

    types: np.ndarray
    rho: float
    eps: float
    delta: float
    counts: np.ndarray = field(init=False)
    present: np.ndarray = field(init=False)
    layers: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.types = np.asarray(self.types, dtype=float).reshape(-1, 2).copy()
        self.K = segment_count(self.delta)
        n = self.types.shape[0]
        self.layers = np.zeros((n, self.K), dtype=np.int64)
        for i in range(n):
            self._set_layers(i)
        self.present = np.ones(n, dtype=bool)
        order = sorted((-self.layers[i, j], i, j) for i in range(n) for j in range(self.K))[: self.K]
        self.counts = np.zeros(n, dtype=np.int64)
        for _, i, _ in order:
            self.counts[i] += 1

    def _set_layers(self, i: int) -> None:
        marg = marginals(self.types[i : i + 1], self.delta)[0]
        self.layers[i] = [segment_layer(float(v), self.rho, self.eps, self.delta) for v in marg]

    @property
    def n(self) -> int:
        return self.types.shape[0]

    @property
    def free(self) -> int:
        return self.K - int(self.counts.sum())

    @property
    def phi(self) -> int:
        return int(sum(self.layers[i, : self.counts[i]].sum() for i in range(self.n)))

    def next_layer(self, i: int) -> int:
        c = self.counts[i]
        return 0 if (c >= self.K or not self.present[i]) else int(self.layers[i, c])

    def last_layer(self, i: int) -> int:
        c = self.counts[i]
        return 0 if c == 0 else int(self.layers[i, c - 1])

    def welfare(self) -> float:
        return segmented_welfare(self.types, self.counts, self.delta)

    def _fill(self, moves: list[SegmentMove]) -> None:
        while self.free > 0:
            cands = [(-self.next_layer(i), i) for i in range(self.n) if self.next_layer(i) > 0]
            if not cands:
                return
            _, i = min(cands)
            before = self.phi
            self.counts[i] += 1
            moves.append(SegmentMove(i, int(self.counts[i] - 1), int(self.counts[i]), self.phi - before, "fill"))

    def depart(self, i: int) -> list[SegmentMove]:
        moves: list[SegmentMove] = []
        before = self.phi
        held = int(self.counts[i])
        self.counts[i] = 0
        self.present[i] = False
        if held:
            moves.append(SegmentMove(i, held, 0, self.phi - before, "depart"))
        self._fill(moves)
        return moves

    def arrive(self, i: int, type_i: Sequence[float]) -> list[SegmentMove]:
        if self.present[i]:
            raise ArgumentError(f"slot {i} is occupied")
        self.types[i] = np.asarray(type_i, dtype=float)
        self._set_layers(i)
        self.present[i] = True
        moves: list[SegmentMove] = []
        while True:
            want = self.next_layer(i)
            if want == 0:
                break
            before = self.phi
            if self.free > 0:
                self.counts[i] += 1
                moves.append(SegmentMove(i, int(self.counts[i] - 1), int(self.counts[i]), self.phi - before, "take"))
                continue
            holders = [(self.last_layer(h), -h) for h in range(self.n) if h != i and self.counts[h] > 0]
            if not holders:
                break
            weakest, neg_h = min(holders)
            if want <= weakest:
                break
            h = -neg_h
            self.counts[h] -= 1
            self.counts[i] += 1
            moves.append(SegmentMove(i, int(self.counts[i] - 1), int(self.counts[i]), self.phi - before, "take"))
            moves.append(SegmentMove(h, int(self.counts[h] + 1), int(self.counts[h]), 0, "displaced"))
        return moves

    def replace(self, i: int, type_i: Sequence[float]) -> list[SegmentMove]:
        return self.depart(i) + self.arrive(i, type_i)

    def check(self) -> None:
        if self.counts.sum() > self.K or np.any(self.counts < 0):
            raise RuntimeError("infeasible segment counts")
        for i in range(self.n):
            if self.next_layer(i) == 0:
                continue
            if self.free > 0:
                raise RuntimeError("free segment left while a player wants it")
            for h in range(self.n):
                if h != i and self.counts[h] > 0 and self.next_layer(i) > self.last_layer(h):
                    raise RuntimeError(f"player {i} blocks holder {h}")


# ----------------------------------------------------------------------------
# mechanism


class ProportionalGame(StageGame):
    """Proportional sharing with bids on the grid {0, zeta, ..., 1}."""

    kind = MECHANISM

    def __init__(self, n: int, zeta: float, delta: float):
        if abs(1.0 / zeta - round(1.0 / zeta)) > 1e-9:
            raise ArgumentError("1/zeta must be integral")
        self.n, self.zeta, self.delta = n, zeta, delta
        self.levels = int(round(1.0 / zeta))
        self.n_strategies = self.levels + 1

    def strategy_sets(self, types: np.ndarray) -> list[np.ndarray]:
        return [np.arange(self.n_strategies) for _ in range(self.n)]

    def evaluate(self, profiles: np.ndarray, types: np.ndarray) -> Outcome:
        bids = np.asarray(profiles, dtype=float) * self.zeta
        total = bids.sum(axis=1, keepdims=True)
        x = np.divide(bids, total, out=np.zeros_like(bids), where=total > 0)
        got = value(types, x)
        return Outcome(got - bids, bids, got.sum(axis=1))

    def solution_value(self, x: Sequence[int], types: np.ndarray) -> float:
        return segmented_welfare(types, np.asarray(x), self.delta)

    def counterfactual(self, profile: np.ndarray, types: np.ndarray) -> np.ndarray:
        bids = np.asarray(profile, dtype=float) * self.zeta
        rest = bids.sum() - bids
        alt = np.arange(self.n_strategies) * self.zeta
        total = alt[None, :] + rest[:, None]
        x = np.divide(alt[None, :], total, out=np.zeros_like(total), where=total > 0)
        t = np.asarray(types, dtype=float)
        return t[:, :1] * x - 0.5 * t[:, 1:] * x * x - alt[None, :]


def deviation_atoms(top: float, zeta: float) -> list[tuple[int, float]]:
    """Distribution of ceil(U/zeta) for U uniform on [0, top], as (level, mass) atoms."""
    if top <= 0:
        return [(0, 1.0)]
    K = int(math.ceil(top / zeta - 1e-9))
    atoms = []
    for k in range(1, K + 1):
        mass = (min(k * zeta, top) - (k - 1) * zeta) / top
        if mass > 0:
            atoms.append((k, mass))
    return atoms


def smoothness_deviation_bandwidth(type_i: Sequence[float], count_i: int, theta: float, zeta: float,
                                   delta: float) -> list[tuple[int, float]]:
    a, b = float(type_i[0]), float(type_i[1])
    x = count_i * delta
    return deviation_atoms(theta * (a * x - 0.5 * b * x * x), zeta)


def bandwidth_lambda(eps: float) -> float:
    return 2 - math.sqrt(3) - eps


@dataclass
class BandwidthSmoothnessReport:
    holds: bool
    theta: float
    verified_lambda: float
    target_lambda: float
    slack: float
    worst_profile: tuple[int, ...] | None


def verify_bandwidth_smoothness(
    types: np.ndarray,
    counts: Sequence[int],
    eps: float,
    zeta: float,
    delta: float,
    thetas: Sequence[float] = tuple(np.linspace(0.1, 1.0, 19)),
    target: float | None = None,
) -> BandwidthSmoothnessReport:
    """Sweep the deviation scale and report the best lambda verified at mu = 1."""
    types = np.asarray(types, dtype=float).reshape(-1, 2)
    game = ProportionalGame(types.shape[0], zeta, delta)
    target = bandwidth_lambda(eps) if target is None else target
    best_theta, best_lam = None, -math.inf
    for theta in thetas:
        dev = lambda i, t, c, th=theta: smoothness_deviation_bandwidth(t, c, th, zeta, delta)
        lam = minimal_lambda(game, 1.0, list(counts), dev, types)
        if lam > best_lam:
            best_theta, best_lam = float(theta), lam
    dev = lambda i, t, c: smoothness_deviation_bandwidth(t, c, best_theta, zeta, delta)
    rep = verify_smoothness(game, SmoothnessParams(target, 1.0), list(counts), dev, types)
    return BandwidthSmoothnessReport(rep.holds, best_theta, best_lam, target, rep.slack, rep.worst_profile)


def p_cap(rho: float, alpha: float, eps: float, n_strategies: int, T: int) -> float:
    """Largest turnover rate covered by the bandwidth efficiency guarantee."""
    log_term = math.log(alpha * (1 - eps) / (rho**2 * eps)) / math.log1p(eps)
    return rho**4 * eps**4 / (96 * alpha**2 * (1 - eps**2) ** 2 * log_term * math.log(n_strategies * T))


# ----------------------------------------------------------------------------
# instances


@dataclass
class BandwidthInstance:
    rho: float
    alpha: float
    delta: float
    players: np.ndarray
    pool: np.ndarray | None = None

    def type_pool(self) -> np.ndarray:
        return self.players if self.pool is None else self.pool

    def to_dict(self) -> dict:
        out = {"rho": self.rho, "alpha": self.alpha, "delta": self.delta,
               "players": [{"a": float(a), "b": float(b)} for a, b in self.players]}
        if self.pool is not None:
            out["pool"] = [{"a": float(a), "b": float(b)} for a, b in self.pool]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BandwidthInstance":
        try:
            rho, alpha, delta = float(data["rho"]), float(data["alpha"]), float(data["delta"])
            players = np.array([[p["a"], p["b"]] for p in data["players"]], dtype=float)
            pool = np.array([[p["a"], p["b"]] for p in data["pool"]], dtype=float) if data.get("pool") else None
            segment_count(delta)
            check_types(players, rho, alpha)
            if pool is not None:
                check_types(pool, rho, alpha)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad bandwidth instance: {exc}") from exc
        return cls(rho, alpha, delta, players, pool)

    @classmethod
    def load(cls, path: str | Path) -> "BandwidthInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))
