"""Stage-game abstractions, smoothness verification and stability accounting.

Games are evaluated in batches: a profile array of shape (P, n) holds one
strategy index per player per row, and every game returns per-player values
for all rows at once. Exhaustive checks stream over the joint profile space in
chunks so that memory stays flat up to the enumeration guard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .errors import ArgumentError, CapacityError

PROFILE_GUARD = 10**7
SLACK_TOL = 1e-9
_CHUNK = 1 << 17

COST = "cost"
MECHANISM = "mechanism"


@dataclass(frozen=True)
class Outcome:
    """Batch evaluation result.

    ``values`` are costs for cost games and utilities for mechanisms, shape
    (P, n). ``payments`` is zero for cost games. ``objective`` is C or W per row.
    """

    values: np.ndarray
    payments: np.ndarray
    objective: np.ndarray


@dataclass(frozen=True)
class SmoothnessParams:
    lam: float
    mu: float

    def __post_init__(self) -> None:
        if self.lam < 0 or self.mu < 0:
            raise ArgumentError("smoothness parameters must be non-negative")

    def efficiency_factor(self, kind: str) -> float:
        """Cost games: the PoA factor lam/(1-mu). Mechanisms: the welfare fraction lam/max(1,mu)."""
        if kind == COST:
            if self.mu >= 1:
                raise ArgumentError("cost games need mu < 1")
            return self.lam / (1.0 - self.mu)
        return self.lam / max(1.0, self.mu)


class StageGame:
    """Finite normal-form stage game evaluated in batches.

    Subclasses set ``kind`` and ``n`` and implement ``strategy_sets``,
    ``evaluate`` and ``solution_value``. ``types`` is whatever per-player type
    container the game uses; ``type_of`` extracts player i's entry.
    """

    kind: str = COST
    n: int = 0

    def strategy_sets(self, types: Any) -> list[np.ndarray]:
        raise NotImplementedError

    def evaluate(self, profiles: np.ndarray, types: Any) -> Outcome:
        raise NotImplementedError

    def solution_value(self, x: Sequence[Any], types: Any) -> float:
        raise NotImplementedError

    def type_of(self, types: Any, i: int) -> Any:
        return None if types is None else types[i]


class TableGame(StageGame):
    """Game given by an explicit payoff tensor of shape (S_1, ..., S_n, n)."""

    def __init__(self, payoffs: np.ndarray, kind: str = MECHANISM):
        payoffs = np.asarray(payoffs, dtype=float)
        if payoffs.ndim < 2 or payoffs.shape[-1] != payoffs.ndim - 1:
            raise ArgumentError("payoff tensor must have shape (S_1..S_n, n)")
        self.payoffs = payoffs
        self.kind = kind
        self.n = payoffs.ndim - 1

    def strategy_sets(self, types: Any = None) -> list[np.ndarray]:
        return [np.arange(k) for k in self.payoffs.shape[:-1]]

    def evaluate(self, profiles: np.ndarray, types: Any = None) -> Outcome:
        profiles = np.asarray(profiles)
        values = self.payoffs[tuple(profiles.T)]
        return Outcome(values, np.zeros_like(values), values.sum(axis=1))

    def solution_value(self, x: Sequence[Any], types: Any = None) -> float:
        return float(self.payoffs[tuple(x)].sum())


def _check_profile(game: StageGame, s: Sequence[int], v: Any) -> np.ndarray:
    s = np.asarray(s, dtype=np.int64)
    if s.ndim != 1 or s.shape[0] != game.n:
        raise ArgumentError(f"profile has {s.shape} entries, game has {game.n} players")
    if v is not None and not isinstance(v, dict) and len(v) != game.n:
        raise ArgumentError(f"type profile has {len(v)} entries, game has {game.n} players")
    return s


def social_objective(game: StageGame, s: Sequence[int], v: Any = None) -> float:
    """C(s;v) for cost games, W(s;v) for mechanisms."""
    s = _check_profile(game, s, v)
    return float(game.evaluate(s[None, :], v).objective[0])


def profile_count(sets: Sequence[np.ndarray]) -> int:
    return math.prod(len(s) for s in sets)


def iter_profiles(sets: Sequence[np.ndarray], chunk: int = _CHUNK) -> Iterator[np.ndarray]:
    """Yield the joint profile space in row-major chunks, guarded."""
    total = profile_count(sets)
    if total > PROFILE_GUARD:
        raise CapacityError(f"{total} profiles exceed the guard of {PROFILE_GUARD}")
    shape = tuple(len(s) for s in sets)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        idx = np.unravel_index(flat, shape)
        yield np.stack([np.asarray(sets[i])[idx[i]] for i in range(len(sets))], axis=1)


def _atoms(dev: Any) -> list[tuple[int, float]]:
    if isinstance(dev, (int, np.integer)):
        return [(int(dev), 1.0)]
    atoms = [(int(s), float(q)) for s, q in dev]
    total = sum(q for _, q in atoms)
    if abs(total - 1.0) > 1e-9:
        raise ArgumentError(f"deviation probabilities sum to {total}")
    return atoms


@dataclass
class SmoothnessReport:
    holds: bool
    slack: float
    worst_profile: tuple[int, ...] | None
    violations: int
    checked: int


Deviation = Callable[[int, Any, Any], Any]


def verify_smoothness(
    game: StageGame,
    params: SmoothnessParams,
    x: Sequence[Any],
    deviation: Deviation,
    types: Any = None,
    tol: float = SLACK_TOL,
) -> SmoothnessReport:
    """Exhaustively check the solution-based smoothness inequality.

    ``deviation(i, v_i, x_i)`` returns a strategy index or a finite list of
    (strategy, probability) atoms; expectations are exact over the atoms.
    """
    sets = game.strategy_sets(types)
    bench = game.solution_value(x, types)
    atoms = [_atoms(deviation(i, game.type_of(types, i), x[i])) for i in range(game.n)]
    worst, worst_row, violations, checked = math.inf, None, 0, 0
    for block in iter_profiles(sets):
        base = game.evaluate(block, types)
        dev_total = np.zeros(len(block))
        for i in range(game.n):
            for s_i, q in atoms[i]:
                moved = block.copy()
                moved[:, i] = s_i
                dev_total += q * game.evaluate(moved, types).values[:, i]
        if game.kind == COST:
            slack = params.lam * bench + params.mu * base.objective - dev_total
        else:
            slack = dev_total - (params.lam * bench - params.mu * base.payments.sum(axis=1))
        violations += int(np.count_nonzero(slack < -tol))
        j = int(np.argmin(slack))
        if slack[j] < worst:
            worst, worst_row = float(slack[j]), tuple(int(a) for a in block[j])
        checked += len(block)
    return SmoothnessReport(violations == 0, worst, worst_row, violations, checked)


def minimal_lambda(
    game: StageGame, mu: float, x: Sequence[Any], deviation: Deviation, types: Any = None
) -> float:
    """Tightest lambda making the smoothness inequality hold for the given mu.

    Used to report verified parameters where no closed form is claimed.
    """
    sets = game.strategy_sets(types)
    bench = game.solution_value(x, types)
    if bench <= 0:
        raise ArgumentError("benchmark value must be positive")
    atoms = [_atoms(deviation(i, game.type_of(types, i), x[i])) for i in range(game.n)]
    best = -math.inf if game.kind == COST else math.inf
    for block in iter_profiles(sets):
        base = game.evaluate(block, types)
        dev_total = np.zeros(len(block))
        for i in range(game.n):
            for s_i, q in atoms[i]:
                moved = block.copy()
                moved[:, i] = s_i
                dev_total += q * game.evaluate(moved, types).values[:, i]
        if game.kind == COST:
            best = max(best, float(np.max((dev_total - mu * base.objective) / bench)))
        else:
            best = min(best, float(np.min((dev_total + mu * base.payments.sum(axis=1)) / bench)))
    return best


def enumerate_pure_nash(game: StageGame, types: Any = None, tol: float = SLACK_TOL) -> list[tuple[int, ...]]:
    """All pure profiles where no player has a strictly improving deviation."""
    sets = game.strategy_sets(types)
    shape = tuple(len(s) for s in sets)
    if profile_count(sets) > PROFILE_GUARD:
        raise CapacityError(f"{profile_count(sets)} profiles exceed the guard of {PROFILE_GUARD}")
    values = np.concatenate([game.evaluate(b, types).values for b in iter_profiles(sets)])
    values = values.reshape(shape + (game.n,))
    stable = np.ones(shape, dtype=bool)
    for i in range(game.n):
        vi = values[..., i]
        if game.kind == COST:
            stable &= vi <= vi.min(axis=i, keepdims=True) + tol
        else:
            stable &= vi >= vi.max(axis=i, keepdims=True) - tol
    found = np.argwhere(stable)
    return [tuple(int(sets[i][row[i]]) for i in range(game.n)) for row in found]


def poa_bound_check(
    game: StageGame, types: Any, x: Sequence[Any], params: SmoothnessParams, tol: float = SLACK_TOL
) -> bool:
    """Every pure Nash equilibrium is within the smoothness efficiency factor of x."""
    bench = game.solution_value(x, types)
    factor = params.efficiency_factor(game.kind)
    for s in enumerate_pure_nash(game, types):
        val = social_objective(game, s, types)
        if game.kind == COST and val > factor * bench + tol:
            return False
        if game.kind == MECHANISM and val < factor * bench - tol:
            return False
    return True


# ----------------------------------------------------------------------------
# stability accounting


@dataclass
class StabilityLedger:
    """Per-player change counters over a (type, solution) sequence."""

    k: np.ndarray
    kappa: np.ndarray
    phi: list[float] = field(default_factory=list)

    @property
    def k_mean(self) -> float:
        return float(np.mean(self.k)) if len(self.k) else 0.0

    @property
    def kappa_mean(self) -> float:
        return float(np.mean(self.kappa)) if len(self.kappa) else 0.0


def _differs(a: Any, b: Any) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return not np.array_equal(np.asarray(a), np.asarray(b))
    return a != b


def stability_counts(seq: Sequence[tuple[Sequence[Any], Sequence[Any]]]) -> StabilityLedger:
    """Count k_i and kappa_i over a list of (types, solution) pairs.

    ``None`` marks the empty allocation. A step where both the type and a
    non-empty allocation change counts once toward k and twice toward kappa.
    """
    if not seq:
        raise ArgumentError("empty sequence")
    n = len(seq[0][0])
    k = np.zeros(n, dtype=np.int64)
    kappa = np.zeros(n, dtype=np.int64)
    for (v0, x0), (v1, x1) in zip(seq, seq[1:]):
        if len(v1) != n or len(x1) != n or len(x0) != n:
            raise ArgumentError("inconsistent dimensions in sequence")
        for i in range(n):
            dx = _differs(x0[i], x1[i])
            dv = _differs(v0[i], v1[i])
            k[i] += dx or dv
            kappa[i] += int(dx) + int(dv and x0[i] is not None)
    return StabilityLedger(k, kappa)


def stability_from_arrays(type_ids: np.ndarray, solution: np.ndarray, empty: int = -1) -> StabilityLedger:
    """Vectorized counterpart of ``stability_counts`` on integer-coded arrays of shape (T, n)."""
    type_ids = np.asarray(type_ids)
    solution = np.asarray(solution)
    if type_ids.shape != solution.shape or type_ids.ndim != 2 or type_ids.shape[0] == 0:
        raise ArgumentError("need matching non-empty (T, n) arrays")
    dv = type_ids[1:] != type_ids[:-1]
    dx = solution[1:] != solution[:-1]
    held = solution[:-1] != empty
    k = (dv | dx).sum(axis=0)
    kappa = dx.sum(axis=0) + (dv & held).sum(axis=0)
    return StabilityLedger(k.astype(np.int64), kappa.astype(np.int64))


# ----------------------------------------------------------------------------
# theorem right-hand sides


def theorem_rhs(
    theorem: str,
    *,
    lam: float,
    mu: float,
    alpha: float,
    c_r: float,
    n: int,
    T: int,
    N: int,
    k: float,
    opt_sum: float,
    m: int | None = None,
) -> float:
    """Right-hand side of the dynamic-population efficiency bounds.

    ``cost`` is an upper bound on cumulative cost; ``mech`` and
    ``improved-mech`` are lower bounds on cumulative welfare.
    """
    if min(lam, alpha, n, T, N) <= 0 or mu < 0 or c_r < 0 or k < 0:
        raise ArgumentError("theorem parameters must be positive")
    log_term = math.log(N * T)
    if theorem == "cost":
        if mu >= 1:
            raise ArgumentError("cost bound needs mu < 1")
        return lam * alpha / (1 - mu) * opt_sum + n / (1 - mu) * c_r * math.sqrt(T * (k + 1) * log_term)
    factor = lam / (alpha * max(1.0, mu))
    if theorem == "mech":
        return factor * opt_sum - n * c_r * math.sqrt(T * (k + 1) * log_term)
    if theorem == "improved-mech":
        if m is None or m <= 0:
            raise ArgumentError("improved bound needs m")
        return factor * opt_sum - c_r * math.sqrt(T * m * (k * n + m) * log_term)
    raise ArgumentError(f"unknown theorem {theorem!r}")
