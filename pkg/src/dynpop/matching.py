"""Simultaneous first-price item auctions with unit-demand bidders.

Strategies are integer codes: 0 is the empty bid and ``1 + j*L + (b-1)`` bids
level b (that is, ``b * step``) on item j, where L is the number of positive
grid levels. Values are an (n, m) array with entries in {0} U [rho, 1].
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import MECHANISM, Outcome, StageGame, theorem_rhs
from .errors import ArgumentError, CapacityError, ConfigError

EMPTY = 0
_EPS = 1e-9


def layer_of(value: float, rho: float, eps: float) -> int:
    """Largest l >= 1 with value >= rho (1+eps)^(l-1); 0 for a zero value."""
    if value == 0:
        return 0
    if value < rho * (1 - 1e-12):
        raise ArgumentError(f"value {value} lies in (0, rho={rho})")
    ell = int(math.floor(math.log(value / rho) / math.log1p(eps))) + 1
    while ell > 1 and rho * (1 + eps) ** (ell - 1) > value * (1 + 1e-12):
        ell -= 1
    while rho * (1 + eps) ** ell <= value * (1 + 1e-12):
        ell += 1
    return max(ell, 1)


def layer_table(values: np.ndarray, rho: float, eps: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.vectorize(lambda v: layer_of(float(v), rho, eps), otypes=[np.int64])(values)


def max_layer(rho: float, eps: float) -> int:
    return layer_of(1.0, rho, eps)


def check_values(values: np.ndarray, rho: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ArgumentError("values must be an (n, m) array")
    bad = (values != 0) & ((values < rho - 1e-12) | (values > 1 + 1e-12))
    if np.any(bad) or np.any(values < 0):
        raise ArgumentError(f"values must lie in {{0}} U [{rho}, 1]")
    return values


@dataclass(frozen=True)
class BidGrid:
    step: float

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ArgumentError("grid step must be positive")
        if abs(1.0 / self.step - round(1.0 / self.step)) > 1e-9:
            raise ArgumentError(f"1/step = {1 / self.step} is not integral")

    @classmethod
    def from_delta(cls, delta: float, rho: float) -> "BidGrid":
        return cls(delta * rho)

    @property
    def levels(self) -> int:
        return int(round(1.0 / self.step))

    def level_of(self, bid: float) -> int:
        level = bid / self.step
        if abs(level - round(level)) > 1e-7 or bid < 0 or bid > 1 + 1e-12:
            raise ArgumentError(f"bid {bid} is not on the grid of step {self.step}")
        return int(round(level))

    def floor_level(self, amount: float) -> int:
        return int(math.floor(amount / self.step + _EPS))


def encode(item: int | None, level: int, levels: int) -> int:
    if item is None or level == 0:
        return EMPTY
    return 1 + item * levels + (level - 1)


def decode(strategy: np.ndarray, levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Item (-1 for empty) and bid level for each strategy code."""
    strategy = np.asarray(strategy, dtype=np.int64)
    item = np.where(strategy > 0, (strategy - 1) // levels, -1)
    level = np.where(strategy > 0, (strategy - 1) % levels + 1, 0)
    return item, level


@dataclass
class MatchingAllocation:
    assignment: list[int | None]
    usage: list[int]

    def feasible(self, supply: int) -> bool:
        return all(u <= supply for u in self.usage)


def _winners(item: np.ndarray, level: np.ndarray, supply: int) -> np.ndarray:
    """Boolean (P, n): the s highest positive bids per item win, lower index wins ties."""
    n = item.shape[-1]
    same = item[..., :, None] == item[..., None, :]
    higher = level[..., None, :] > level[..., :, None]
    tie = (level[..., None, :] == level[..., :, None]) & (np.arange(n)[None, :] < np.arange(n)[:, None])
    beaten_by = (same & (higher | tie)).sum(axis=-1)
    return (item >= 0) & (level > 0) & (beaten_by < supply)


def run_first_price(bids: np.ndarray, supply: int = 1, grid: BidGrid | None = None
                    ) -> tuple[MatchingAllocation, np.ndarray]:
    """Allocate items given an (n, m) bid matrix with at most one positive bid per row."""
    bids = np.asarray(bids, dtype=float)
    n, m = bids.shape
    if np.any(bids < 0):
        raise ArgumentError("negative bid")
    if np.any((bids > 0).sum(axis=1) > 1):
        raise ArgumentError("unit-demand bidders place at most one positive bid")
    if grid is not None:
        for b in bids[bids > 0]:
            grid.level_of(float(b))
    item = np.where(bids.max(axis=1) > 0, bids.argmax(axis=1), -1)
    amount = bids.max(axis=1)
    # rank on exact bid values, so use a dense integer ranking of the amounts
    ranks = np.unique(amount, return_inverse=True)[1].reshape(-1)
    win = _winners(item, np.where(item >= 0, ranks + 1, 0), supply)
    assignment = [int(item[i]) if win[i] else None for i in range(n)]
    usage = [sum(1 for a in assignment if a == j) for j in range(m)]
    return MatchingAllocation(assignment, usage), np.where(win, amount, 0.0)


class FirstPriceGame(StageGame):
    """First-price item auctions on a bid grid.

    With ``capped`` set, a player's strategy set only contains bids that do not
    exceed her value for the item, which keeps every utility in [0, 1].
    """

    kind = MECHANISM

    def __init__(self, n: int, m: int, grid: BidGrid, supply: int = 1, capped: bool = True):
        self.n, self.m, self.grid, self.supply, self.capped = n, m, grid, supply, capped
        self.levels = grid.levels
        self.n_strategies = 1 + m * self.levels

    def allowed(self, values: np.ndarray) -> np.ndarray:
        """Boolean (n, N) mask of usable strategies."""
        values = np.asarray(values, dtype=float)
        bids = np.arange(1, self.levels + 1) * self.grid.step
        if self.capped:
            ok = bids[None, None, :] <= values[:, :, None] + _EPS
        else:
            ok = np.ones((values.shape[0], self.m, self.levels), dtype=bool)
        return np.concatenate([np.ones((values.shape[0], 1), dtype=bool), ok.reshape(values.shape[0], -1)], axis=1)

    def strategy_sets(self, values: np.ndarray) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.allowed(values)]

    def evaluate(self, profiles: np.ndarray, values: np.ndarray) -> Outcome:
        values = np.asarray(values, dtype=float)
        item, level = decode(profiles, self.levels)
        win = _winners(item, level, self.supply)
        got = np.where(item >= 0, values[np.arange(self.n), np.maximum(item, 0)], 0.0)
        pay = np.where(win, level * self.grid.step, 0.0)
        gain = np.where(win, got, 0.0)
        return Outcome(gain - pay, pay, gain.sum(axis=1))

    def solution_value(self, x: Sequence[int | None], values: np.ndarray) -> float:
        return float(sum(values[i][j] for i, j in enumerate(x) if j is not None))

    def counterfactual(self, profile: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Utility (n, N) of every alternative strategy with the others held fixed."""
        item, level = decode(profile, self.levels)
        n, m, L = self.n, self.m, self.levels
        on = np.zeros((n, m), dtype=np.int64)
        on[item >= 0, item[item >= 0]] = level[item >= 0]
        b = np.arange(1, L + 1)
        # others[i, k] excludes k == i; earlier[i, k] marks k < i
        others = ~np.eye(n, dtype=bool)
        earlier = np.tri(n, k=-1, dtype=bool)
        above = (on[None, :, :, None] > b[None, None, None, :]) & others[:, :, None, None]
        tied = (on[None, :, :, None] == b[None, None, None, :]) & earlier[:, :, None, None]
        beaten = (above | tied).sum(axis=1)
        wins = beaten < self.supply
        util = np.where(wins, np.asarray(values, dtype=float)[:, :, None] - b * self.grid.step, 0.0)
        return np.concatenate([np.zeros((n, 1)), util.reshape(n, m * L)], axis=1)


def smoothness_deviation(values_i: np.ndarray, x_i: int | None, grid: BidGrid) -> int:
    """Bid half the benchmark item's value, floored to the grid; empty if unallocated."""
    if x_i is None:
        return EMPTY
    return encode(x_i, grid.floor_level(float(values_i[x_i]) / 2.0), grid.levels)


# ----------------------------------------------------------------------------
# optimal matching oracles


def optimal_matching(values: np.ndarray, supply: int = 1) -> tuple[float, list[int | None]]:
    """Maximum-weight unit-demand assignment with ``supply`` copies per item."""
    values = np.asarray(values, dtype=float)
    n, m = values.shape
    if n == 0 or m == 0:
        return 0.0, [None] * n
    expanded = np.repeat(values, supply, axis=1)
    rows, cols = linear_sum_assignment(expanded, maximize=True)
    assignment: list[int | None] = [None] * n
    for r, c in zip(rows, cols):
        if expanded[r, c] > 0:
            assignment[r] = int(c // supply)
    return float(sum(values[i, j] for i, j in enumerate(assignment) if j is not None)), assignment


def enumerate_matchings(n: int, m: int, supply: int = 1, limit: int = 10**6) -> Iterator[tuple[int | None, ...]]:
    """Every feasible assignment of n unit-demand players to m items (None = unassigned)."""
    if (m + 1) ** n > limit * 10:
        raise CapacityError(f"too many assignments for n={n}, m={m}")
    usage = [0] * m
    current: list[int | None] = [None] * n

    def rec(i: int) -> Iterator[tuple[int | None, ...]]:
        if i == n:
            yield tuple(current)
            return
        current[i] = None
        yield from rec(i + 1)
        for j in range(m):
            if usage[j] < supply:
                usage[j] += 1
                current[i] = j
                yield from rec(i + 1)
                usage[j] -= 1
        current[i] = None

    yield from rec(0)


def brute_force_matching(values: np.ndarray, supply: int = 1) -> tuple[float, tuple[int | None, ...]]:
    values = np.asarray(values, dtype=float)
    n, m = values.shape
    best, arg = -1.0, None
    for x in enumerate_matchings(n, m, supply):
        w = sum(values[i, j] for i, j in enumerate(x) if j is not None)
        if w > best + 1e-12:
            best, arg = w, x
    return float(best), arg


# ----------------------------------------------------------------------------
# greedy-layered benchmark


@dataclass(frozen=True)
class Move:
    """One allocation change. ``delta_phi`` is the potential change it caused."""

    player: int
    old: int | None
    new: int | None
    delta_phi: int
    kind: str


@dataclass
class LayeredMatching:
    """Greedy matching on layered values, kept stable under arrivals and departures.

    Each item has ``supply`` interchangeable copies. A player may take a copy
    only if her layer for the item is strictly above the current holder's, and
    may leave her item only for one where her layer is strictly higher, so every
    reassignment raises the potential by at least one.
    """

    values: np.ndarray
    rho: float
    eps: float
    supply: int = 1
    layers: np.ndarray = field(init=False)
    holder: np.ndarray = field(init=False)
    seat: np.ndarray = field(init=False)
    present: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.values = check_values(self.values, self.rho).copy()
        n, m = self.values.shape
        self.layers = layer_table(self.values, self.rho, self.eps)
        self.holder = np.full(m * self.supply, -1, dtype=np.int64)
        self.seat = np.full(n, -1, dtype=np.int64)
        self.present = np.ones(n, dtype=bool)
        pairs = [(-self.layers[i, j], i, j) for i in range(n) for j in range(m) if self.layers[i, j] > 0]
        for _, i, j in sorted(pairs):
            if self.seat[i] >= 0:
                continue
            free = [c for c in self._copies(j) if self.holder[c] < 0]
            if free:
                self._place(i, free[0])

    # helpers -------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def _copies(self, j: int) -> range:
        return range(j * self.supply, (j + 1) * self.supply)

    def _item(self, c: int) -> int:
        return c // self.supply

    def copy_layer(self, c: int) -> int:
        h = self.holder[c]
        return 0 if h < 0 else int(self.layers[h, self._item(c)])

    def own_layer(self, i: int) -> int:
        c = self.seat[i]
        return 0 if c < 0 else int(self.layers[i, self._item(c)])

    def _place(self, i: int, c: int) -> None:
        self.holder[c] = i
        self.seat[i] = c

    @property
    def phi(self) -> int:
        return int(sum(self.copy_layer(c) for c in range(len(self.holder))))

    def item_layers(self) -> np.ndarray:
        """Layer of each item's holder, summed over its copies."""
        return np.array([sum(self.copy_layer(c) for c in self._copies(j)) for j in range(self.m)])

    def assignment(self) -> list[int | None]:
        return [None if c < 0 else self._item(int(c)) for c in self.seat]

    def welfare(self) -> float:
        return float(sum(self.values[i, j] for i, j in enumerate(self.assignment()) if j is not None))

    # dynamics ------------------------------------------------------------

    def _fill(self, c: int, moves: list[Move]) -> None:
        """Hand free copies to the best eligible player until nobody qualifies."""
        while c >= 0:
            j = self._item(c)
            best, key = -1, None
            for i in range(self.n):
                ell = self.layers[i, j]
                if not self.present[i] or ell == 0 or ell <= self.own_layer(i):
                    continue
                k = (-self.values[i, j], i)
                if key is None or k < key:
                    best, key = i, k
            if best < 0:
                return
            before = self.phi
            old = int(self.seat[best])
            if old >= 0:
                self.holder[old] = -1
            self._place(best, c)
            moves.append(Move(best, None if old < 0 else self._item(old), j, self.phi - before, "fill"))
            c = old

    def depart(self, i: int) -> list[Move]:
        moves: list[Move] = []
        c = int(self.seat[i])
        self.present[i] = False
        if c >= 0:
            before = self.phi
            self.holder[c] = -1
            self.seat[i] = -1
            moves.append(Move(i, self._item(c), None, self.phi - before, "depart"))
        self.values[i] = 0.0
        self.layers[i] = 0
        if c >= 0:
            self._fill(c, moves)
        return moves

    def arrive(self, i: int, values_i: np.ndarray) -> list[Move]:
        if self.present[i] and self.seat[i] >= 0:
            raise ArgumentError(f"slot {i} is occupied")
        row = check_values(np.asarray(values_i, dtype=float)[None, :], self.rho)[0]
        self.values[i] = row
        self.layers[i] = layer_table(row[None, :], self.rho, self.eps)[0]
        self.present[i] = True
        moves: list[Move] = []
        pending = i
        while pending >= 0:
            best, key = -1, None
            for c in range(len(self.holder)):
                j = self._item(c)
                ell = self.layers[pending, j]
                if ell == 0 or ell <= self.copy_layer(c):
                    continue
                k = (-self.values[pending, j], j, self.copy_layer(c), c)
                if key is None or k < key:
                    best, key = c, k
            if best < 0:
                break
            before = self.phi
            displaced = int(self.holder[best])
            if displaced >= 0:
                self.seat[displaced] = -1
            self._place(pending, best)
            j = self._item(best)
            moves.append(Move(pending, None, j, self.phi - before, "take"))
            if displaced >= 0:
                moves.append(Move(displaced, j, None, 0, "displaced"))
            pending = displaced
        return moves

    def replace(self, i: int, values_i: np.ndarray) -> list[Move]:
        return self.depart(i) + self.arrive(i, values_i)

    def blocking_pairs(self) -> list[tuple[int, int]]:
        """Pairs (player, copy) that would violate stability; empty when consistent."""
        out = []
        for i in range(self.n):
            if not self.present[i]:
                continue
            for c in range(len(self.holder)):
                ell = self.layers[i, self._item(c)]
                if self.holder[c] != i and ell > self.copy_layer(c) and ell > self.own_layer(i):
                    out.append((i, c))
        return out

    def check(self) -> None:
        for c, h in enumerate(self.holder):
            if h >= 0 and self.seat[h] != c:
                raise RuntimeError("holder and seat tables disagree")
            if h >= 0 and self.layers[h, self._item(c)] == 0:
                raise RuntimeError("zero-layer holder")
        if self.blocking_pairs():
            raise RuntimeError(f"unstable state: {self.blocking_pairs()[:3]}")


def greedy_layered_init(values: np.ndarray, rho: float, eps: float, supply: int = 1) -> LayeredMatching:
    return LayeredMatching(np.asarray(values, dtype=float), rho, eps, supply)


def greedy_layered_update(state: LayeredMatching, event: tuple) -> list[Move]:
    """Apply ("depart", i) or ("arrive", i, values_i) in place and return the moves."""
    kind = event[0]
    if kind == "depart":
        return state.depart(int(event[1]))
    if kind == "arrive":
        return state.arrive(int(event[1]), event[2])
    raise ArgumentError(f"unknown event {kind!r}")


# ----------------------------------------------------------------------------
# bound formulas


def change_bound(m: int, p: float, T: int, rho: float, eps: float) -> float:
    """Bound on the expected total number of allocation changes of greedy-layered matching."""
    log_term = math.log(1 / rho) / math.log1p(eps)
    return m * (2 + 3 * p * T) * log_term + m * p * T


def p_cap(rho: float, eps: float, c_r: float, n_strategies: int, T: int) -> float:
    """Largest turnover rate covered by the matching efficiency guarantee."""
    log_term = math.log(1 / rho) / math.log1p(eps)
    return rho**2 * eps**2 / (96 * (1 + eps) ** 2 * c_r**2 * log_term * math.log(n_strategies * T))


@dataclass
class BoundVerdict:
    holds: bool
    lhs: float
    rhs: float
    name: str

    def as_dict(self) -> dict:
        return {"holds": self.holds, "lhs": self.lhs, "rhs": self.rhs, "name": self.name}


def matching_bound_check(
    welfare_sum: float,
    opt_sum: float,
    *,
    T: int,
    n: int,
    m: int,
    n_strategies: int,
    p: float,
    rho: float,
    eps: float,
    c_r: float,
    kappa: float,
) -> list[BoundVerdict]:
    """Compare realized welfare with the matching guarantee in two forms.

    ``improved`` uses the measured change count kappa; ``turnover`` plugs the
    turnover rate into the closed form (with p raised to 1/T when smaller,
    which is the regime where that form is derived).
    """
    fraction = 1.0 / (4 * (1 + eps))
    improved = theorem_rhs("improved-mech", lam=0.5, mu=1.0, alpha=2 * (1 + eps), c_r=c_r,
                           n=n, m=m, T=T, N=n_strategies, k=kappa, opt_sum=opt_sum)
    log_term = math.log(1 / rho) / math.log1p(eps)
    p_eff = max(p, 1.0 / T)
    turnover = fraction * opt_sum - m * T * c_r * math.sqrt(6 * p_eff * log_term * math.log(n_strategies * T))
    return [
        BoundVerdict(welfare_sum >= improved - 1e-9, welfare_sum, improved, "improved"),
        BoundVerdict(welfare_sum >= turnover - 1e-9, welfare_sum, turnover, "turnover"),
    ]


# ----------------------------------------------------------------------------
# instances and traces


@dataclass
class MatchingInstance:
    m: int
    s: int
    rho: float
    epsilon: float
    players: np.ndarray
    pool: np.ndarray | None = None

    def type_pool(self) -> np.ndarray:
        return self.players if self.pool is None else self.pool

    def to_dict(self) -> dict:
        out = {"m": self.m, "s": self.s, "rho": self.rho, "epsilon": self.epsilon,
               "players": [{"values": [float(v) for v in row]} for row in self.players]}
        if self.pool is not None:
            out["pool"] = [{"values": [float(v) for v in row]} for row in self.pool]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MatchingInstance":
        try:
            m, s, rho, eps = int(data["m"]), int(data["s"]), float(data["rho"]), float(data["epsilon"])
            players = np.array([p["values"] for p in data["players"]], dtype=float)
            pool = np.array([p["values"] for p in data["pool"]], dtype=float) if data.get("pool") else None
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad matching instance: {exc}") from exc
        for arr in (players,) if pool is None else (players, pool):
            if arr.ndim != 2 or arr.shape[1] != m:
                raise ConfigError(f"every player needs {m} values")
            try:
                check_values(arr, rho)
            except ArgumentError as exc:
                raise ConfigError(str(exc)) from exc
        return cls(m, s, rho, eps, players, pool)

    @classmethod
    def load(cls, path: str | Path) -> "MatchingInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def random_values(rng: np.random.Generator, n: int, m: int, rho: float, zero_prob: float = 0.3) -> np.ndarray:
    vals = rng.uniform(rho, 1.0, size=(n, m))
    vals[rng.random((n, m)) < zero_prob] = 0.0
    return vals


def write_allocation_trace(rows: Sequence[tuple[int, int, int | None, int, int]], path: str | Path) -> Path:
    """Rows of (t, player, item, layer, phi); an empty item is written as -1."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "player", "item", "layer", "phi"])
        for t, i, j, ell, phi in rows:
            writer.writerow([t, i, -1 if j is None else j, ell, phi])
    return path
