"""Atomic congestion games with polynomial latencies.

Latency of element e at load x is sum_j coeffs[e, j] * x**j (constant term
first). A player's type selects a list of allowed element subsets; a strategy
is an index into that list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import COST, Outcome, StageGame, iter_profiles, theorem_rhs
from .errors import ArgumentError, ConfigError
from .matching import BoundVerdict


class CongestionGame(StageGame):
    kind = COST

    def __init__(self, coeffs: np.ndarray, type_strategies: Sequence[Sequence[Sequence[int]]], n: int,
                 scale: float = 1.0):
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if np.any(coeffs < 0) or np.any(coeffs[:, 1:].sum(axis=1) <= 0):
            raise ArgumentError("latency coefficients must be non-negative with a positive load term")
        self.coeffs = coeffs
        self.m = coeffs.shape[0]
        self.n = n
        self.scale = scale
        self.type_strategies = [[tuple(sorted(set(s))) for s in strategies] for strategies in type_strategies]
        self.incidence = []
        for strategies in self.type_strategies:
            if not strategies:
                raise ArgumentError("every type needs at least one strategy")
            inc = np.zeros((len(strategies), self.m), dtype=float)
            for k, s in enumerate(strategies):
                if any(e < 0 or e >= self.m for e in s):
                    raise ArgumentError(f"strategy {s} names an unknown element")
                inc[k, list(s)] = 1.0
            self.incidence.append(inc)
        self.n_strategies = max(len(s) for s in self.type_strategies)

    def latency(self, load: np.ndarray) -> np.ndarray:
        load = np.asarray(load, dtype=float)
        powers = load[..., None] ** np.arange(self.coeffs.shape[1])
        return (powers * self.coeffs).sum(axis=-1)

    def scale_factor(self) -> float:
        """Bound on any player's raw cost: largest strategy size times max latency at full load."""
        size = max(int(inc.sum(axis=1).max()) for inc in self.incidence)
        return float(size * self.latency(np.full(self.m, float(self.n))).max())

    def scaled(self) -> "CongestionGame":
        return CongestionGame(self.coeffs, self.type_strategies, self.n, self.scale_factor())

    def with_players(self, n: int) -> "CongestionGame":
        game = CongestionGame(self.coeffs, self.type_strategies, n)
        return game.scaled() if self.scale != 1.0 else game

    def strategy_sets(self, types: Sequence[int]) -> list[np.ndarray]:
        return [np.arange(len(self.type_strategies[t])) for t in types]

    def _loads(self, profiles: np.ndarray, types: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        profiles = np.asarray(profiles, dtype=np.int64)
        rows = np.stack([self.incidence[t][profiles[:, i]] for i, t in enumerate(types)], axis=1)
        return rows, rows.sum(axis=1)

    def evaluate(self, profiles: np.ndarray, types: Sequence[int]) -> Outcome:
        rows, load = self._loads(profiles, types)
        lat = self.latency(load)
        costs = (rows * lat[:, None, :]).sum(axis=2) / self.scale
        return Outcome(costs, np.zeros_like(costs), costs.sum(axis=1))

    def solution_value(self, x: Sequence[int], types: Sequence[int]) -> float:
        return float(self.evaluate(np.asarray(x)[None, :], types).objective[0])

    def counterfactual(self, profile: np.ndarray, types: Sequence[int]) -> np.ndarray:
        """Cost (n, N) of every alternative with others fixed; unused slots are padded with 1."""
        rows, load = self._loads(np.asarray(profile)[None, :], types)
        out = np.ones((self.n, self.n_strategies))
        for i, t in enumerate(types):
            lat = self.latency(load[0] - rows[0, i] + 1.0)
            out[i, : len(self.incidence[t])] = self.incidence[t] @ lat / self.scale
        return out

    def allowed(self, types: Sequence[int]) -> np.ndarray:
        mask = np.zeros((len(types), self.n_strategies), dtype=bool)
        for i, t in enumerate(types):
            mask[i, : len(self.type_strategies[t])] = True
        return mask


def congestion_costs(game: CongestionGame, s: Sequence[int], types: Sequence[int]) -> tuple[np.ndarray, float]:
    s = np.asarray(s, dtype=np.int64)
    if s.shape != (game.n,):
        raise ArgumentError("profile length does not match the player count")
    for i, t in enumerate(types):
        if not 0 <= s[i] < len(game.type_strategies[t]):
            raise ArgumentError(f"strategy {s[i]} invalid for player {i}")
    out = game.evaluate(s[None, :], types)
    return out.values[0], float(out.objective[0])


def element_loads(game: CongestionGame, s: Sequence[int], types: Sequence[int]) -> np.ndarray:
    return game._loads(np.asarray(s)[None, :], types)[1][0]


def optimal_profiles(game: CongestionGame, types: Sequence[int], tol: float = 1e-12) -> tuple[float, np.ndarray]:
    """Minimum social cost and every profile attaining it."""
    best, keep = math.inf, []
    for block in iter_profiles(game.strategy_sets(types)):
        cost = game.evaluate(block, types).objective
        low = float(cost.min())
        if low < best - tol:
            best, keep = low, [block[cost <= low + tol]]
        elif low <= best + tol:
            keep.append(block[cost <= best + tol])
    return best, np.concatenate(keep)


def brute_force_opt(game: CongestionGame, types: Sequence[int]) -> tuple[float, tuple[int, ...]]:
    best, profiles = optimal_profiles(game, types)
    return best, tuple(int(a) for a in profiles[0])


def congestion_deviation(game: CongestionGame, type_i: int, x_i: int) -> int:
    """The deviation plays the benchmark strategy itself."""
    if not 0 <= x_i < len(game.type_strategies[type_i]):
        raise ArgumentError(f"strategy {x_i} infeasible for type {type_i}")
    return int(x_i)


def rosenthal_potential(game: CongestionGame, s: Sequence[int], types: Sequence[int]) -> float:
    load = element_loads(game, s, types)
    total = 0.0
    for e in range(game.m):
        steps = np.arange(1, int(round(load[e])) + 1, dtype=float)
        total += float((steps[:, None] ** np.arange(game.coeffs.shape[1]) @ game.coeffs[e]).sum())
    return total / game.scale


def opt_lower_bound(n: int, m: int, a_min: float) -> float:
    """Cost of spreading n players evenly (fractionally) over m links of slope a_min."""
    return n * n / m * a_min


class StabilizedOpt:
    """Per-round exact optimum that keeps the previous profile among cost ties."""

    def __init__(self, game: CongestionGame):
        self.game = game
        self._cache: dict[tuple[int, ...], tuple[float, np.ndarray]] = {}
        self.current: np.ndarray | None = None

    def optimum(self, types: Sequence[int]) -> tuple[float, np.ndarray]:
        key = tuple(int(t) for t in types)
        if key not in self._cache:
            self._cache[key] = optimal_profiles(self.game, key)
        return self._cache[key]

    def update(self, types: Sequence[int]) -> np.ndarray:
        _, candidates = self.optimum(types)
        if self.current is None:
            self.current = candidates[0].copy()
        else:
            moved = (candidates != self.current[None, :]).sum(axis=1)
            self.current = candidates[int(np.argmin(moved))].copy()
        return self.current


def congestion_bound_check(cost_sum: float, opt_sum: float, *, T: int, n: int, n_strategies: int, c_r: float,
                           k: float, lam: float = 5 / 3, mu: float = 1 / 3, alpha: float = 1.0) -> BoundVerdict:
    rhs = theorem_rhs("cost", lam=lam, mu=mu, alpha=alpha, c_r=c_r, n=n, T=T, N=n_strategies, k=k,
                      opt_sum=opt_sum)
    return BoundVerdict(cost_sum <= rhs + 1e-9, cost_sum, rhs, "cost")


# ----------------------------------------------------------------------------
# instances


def random_linear_game(rng: np.random.Generator, n: int, m: int, n_types: int = 1,
                       max_strategies: int = 3) -> tuple[CongestionGame, np.ndarray]:
    """Random linear game with element subsets as strategies; returns the game and a type profile."""
    coeffs = np.column_stack([rng.integers(0, 3, size=m), rng.integers(1, 4, size=m)]).astype(float)
    type_strategies = []
    for _ in range(n_types):
        k = int(rng.integers(1, max_strategies + 1))
        strategies = []
        for _ in range(k):
            size = int(rng.integers(1, m + 1))
            strategies.append(sorted(rng.choice(m, size=size, replace=False).tolist()))
        type_strategies.append(strategies)
    types = rng.integers(0, n_types, size=n)
    return CongestionGame(coeffs, type_strategies, n), types


def parallel_links(n: int, slopes: Sequence[float], offsets: Sequence[float] | None = None) -> CongestionGame:
    m = len(slopes)
    offsets = [0.0] * m if offsets is None else offsets
    return CongestionGame(np.column_stack([offsets, slopes]), [[[e] for e in range(m)]], n)


@dataclass
class CongestionInstance:
    coeffs: np.ndarray
    type_strategies: list[list[list[int]]]
    players: list[int] | None = None

    def game(self, n: int) -> CongestionGame:
        return CongestionGame(self.coeffs, self.type_strategies, n)

    def to_dict(self) -> dict:
        elements = []
        for row in self.coeffs:
            if len(row) == 2:
                elements.append({"a": float(row[1]), "b": float(row[0])})
            else:
                elements.append({"coeffs": [float(c) for c in row]})
        out = {"elements": elements, "types": [{"strategies": s} for s in self.type_strategies]}
        if self.players is not None:
            out["players"] = list(self.players)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CongestionInstance":
        try:
            rows = []
            for el in data["elements"]:
                rows.append([float(c) for c in el["coeffs"]] if "coeffs" in el else [float(el["b"]), float(el["a"])])
            width = max(len(r) for r in rows)
            coeffs = np.array([r + [0.0] * (width - len(r)) for r in rows])
            types = [[list(map(int, s)) for s in t["strategies"]] for t in data["types"]]
            players = [int(p) for p in data["players"]] if "players" in data else None
            CongestionGame(coeffs, types, 1)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad congestion instance: {exc}") from exc
        if players is not None and any(not 0 <= p < len(types) for p in players):
            raise ConfigError("player type index out of range")
        return cls(coeffs, types, players)

    @classmethod
    def load(cls, path: str | Path) -> "CongestionInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))
