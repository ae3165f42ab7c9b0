"""Full-information online learners and interval-regret evaluation.

Learners hold a weight array of shape (..., N); a leading axis lets one object
drive a whole population of players in lockstep. An optional boolean mask
removes actions that a player may not use (their weight stays at zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError

_LOSS_TOL = 1e-12


def default_eta(n_actions: int, horizon: int, p: float = 0.0) -> float:
    """Rate tuned to the expected lifetime min(T, ceil(1/p))."""
    lifetime = horizon if p <= 0 else min(horizon, math.ceil(1.0 / p))
    return math.sqrt(8.0 * math.log(n_actions) / max(1, lifetime))


def _check_losses(losses: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    losses = np.asarray(losses, dtype=float)
    if losses.shape != shape:
        raise ArgumentError(f"loss shape {losses.shape} does not match learner shape {shape}")
    if losses.size and (losses.min() < -_LOSS_TOL or losses.max() > 1 + _LOSS_TOL):
        raise ArgumentError("losses must lie in [0, 1]")
    return losses


def _as_mask(n_actions: int, mask: np.ndarray | None, rows: int | None) -> np.ndarray:
    shape = (n_actions,) if rows is None else (rows, n_actions)
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), shape).copy()
    if not mask.any(axis=-1).all():
        raise ArgumentError("every player needs at least one allowed action")
    return mask


class Hedge:
    """Exponential weights with a fixed learning rate."""

    name = "hedge"

    def __init__(self, n_actions: int, eta: float | np.ndarray, mask: np.ndarray | None = None,
                 rows: int | None = None):
        if n_actions < 1:
            raise ArgumentError("need at least one action")
        self.n_actions = n_actions
        self.rows = rows
        self.mask = _as_mask(n_actions, mask, rows)
        self.eta = self._per_row(eta)
        self.t = 0
        self.weights = self._uniform()

    def _per_row(self, value: float | np.ndarray) -> np.ndarray | float:
        if self.rows is None or np.ndim(value) == 0:
            return float(value) if np.ndim(value) == 0 else np.asarray(value, dtype=float)
        return np.asarray(value, dtype=float).reshape(self.rows, 1)

    def _uniform(self) -> np.ndarray:
        return self.mask / self.mask.sum(axis=-1, keepdims=True)

    @property
    def distribution(self) -> np.ndarray:
        return self.weights

    def _multiplicative(self, losses: np.ndarray) -> None:
        w = self.weights * np.exp(-self.eta * losses)
        self.weights = w / w.sum(axis=-1, keepdims=True)

    def step(self, losses: np.ndarray) -> np.ndarray:
        """Consume one loss vector and return the next-round distribution."""
        losses = _check_losses(losses, self.weights.shape)
        self._multiplicative(losses)
        self.t += 1
        return self.weights

    def reset(self, rows: Sequence[int] | None = None, mask: np.ndarray | None = None) -> None:
        """Forget everything for the given rows (all rows if None)."""
        if rows is None:
            if mask is not None:
                self.mask = _as_mask(self.n_actions, mask, self.rows)
            self.weights = self._uniform()
            return
        rows = np.asarray(rows, dtype=np.int64)
        if mask is not None:
            self.mask[rows] = np.asarray(mask, dtype=bool)
        fresh = self.mask[rows]
        self.weights[rows] = fresh / fresh.sum(axis=-1, keepdims=True)


class FixedShare(Hedge):
    """Hedge followed by mixing a fraction ``alpha`` of the uniform distribution.

    With ``alpha = 0`` the update is bit-for-bit the Hedge update.
    """

    name = "fixed-share"

    def __init__(self, n_actions: int, eta: float | np.ndarray, alpha: float | np.ndarray,
                 mask: np.ndarray | None = None, rows: int | None = None):
        super().__init__(n_actions, eta, mask, rows)
        if np.any(np.asarray(alpha) < 0) or np.any(np.asarray(alpha) > 1):
            raise ArgumentError("mixing rate must lie in [0, 1]")
        self.alpha = self._per_row(alpha)

    def step(self, losses: np.ndarray) -> np.ndarray:
        losses = _check_losses(losses, self.weights.shape)
        self._multiplicative(losses)
        self.weights = (1.0 - self.alpha) * self.weights + self.alpha * self._uniform()
        self.t += 1
        return self.weights


def _anh_logweight(R: np.ndarray, C: np.ndarray) -> np.ndarray:
    # log of (Phi(R+1, C+1) - Phi(R-1, C+1)) / 2 with Phi(R, C) = exp([R]_+^2 / 3C)
    hi = np.maximum(R + 1.0, 0.0) ** 2 / (3.0 * (C + 1.0))
    lo = np.maximum(R - 1.0, 0.0) ** 2 / (3.0 * (C + 1.0))
    with np.errstate(divide="ignore"):
        return np.where(hi > lo, hi + np.log(-np.expm1(lo - hi)) - math.log(2.0), -np.inf)


def _normalize_log(logw: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    top = np.max(logw)
    if not np.isfinite(top):
        return fallback
    w = np.exp(logw - top)
    return w / w.sum()


class GeometricCovering:
    """Restart ensemble over the dyadic intervals [k 2^j, (k+1) 2^j).

    Level j runs a Hedge instance tuned to length 2^j and restarts at every
    multiple of 2^j. A master with AdaNormalHedge-style weights treats each
    restart as a newly awake expert (its regret counters start from zero), which
    yields low regret on every interval simultaneously.
    """

    name = "covering"

    def __init__(self, n_actions: int, horizon: int, mask: np.ndarray | None = None):
        if n_actions < 1 or horizon < 1:
            raise ArgumentError("need positive action count and horizon")
        self.n_actions = n_actions
        self.mask = _as_mask(n_actions, mask, None)
        self._fresh = self.mask / self.mask.sum()
        self.levels = max(1, math.ceil(math.log2(horizon)) + 1)
        self.lengths = 2 ** np.arange(self.levels)
        self.eta = np.sqrt(8.0 * math.log(max(n_actions, 2)) / self.lengths)[:, None]
        self.sub = np.tile(self._fresh, (self.levels, 1))
        self.reg = np.zeros(self.levels)
        self.absreg = np.zeros(self.levels)
        self.t = 0
        self._restart()
        self.weights = self._combine()

    def _restart(self) -> None:
        due = self.t % self.lengths == 0
        self.sub[due] = self._fresh
        self.reg[due] = 0.0
        self.absreg[due] = 0.0

    def _master(self) -> np.ndarray:
        fallback = np.full(self.levels, 1.0 / self.levels)
        return _normalize_log(_anh_logweight(self.reg, self.absreg), fallback)

    def _combine(self) -> np.ndarray:
        self._q = self._master()
        w = self._q @ self.sub
        return w / w.sum()

    @property
    def distribution(self) -> np.ndarray:
        return self.weights

    def step(self, losses: np.ndarray) -> np.ndarray:
        losses = _check_losses(losses, (self.n_actions,))
        sub_loss = self.sub @ losses
        master_loss = float(self._q @ sub_loss)
        r = master_loss - sub_loss
        self.reg += r
        self.absreg += np.abs(r)
        w = self.sub * np.exp(-self.eta * losses)
        self.sub = w / w.sum(axis=1, keepdims=True)
        self.t += 1
        self._restart()
        self.weights = self._combine()
        return self.weights


def play(learner, losses: np.ndarray) -> np.ndarray:
    """Run a single-row learner over a (T, N) loss stream; row t is the distribution used at step t."""
    losses = np.asarray(losses, dtype=float)
    played = np.empty_like(losses)
    for t in range(losses.shape[0]):
        played[t] = learner.distribution
        learner.step(losses[t])
    return played


# ----------------------------------------------------------------------------
# interval regret


@dataclass(frozen=True)
class RegretReport:
    tau1: int
    tau2: int
    regret: float
    best_action: int


def interval_regret(losses: np.ndarray, played: np.ndarray, tau1: int, tau2: int) -> RegretReport:
    """Regret of the played distributions against the best fixed action on [tau1, tau2).

    Steps are 1-indexed, so row t-1 of the arrays holds step t.
    """
    losses = np.asarray(losses, dtype=float)
    played = np.asarray(played, dtype=float)
    T = losses.shape[0]
    if not (1 <= tau1 < tau2 <= T + 1):
        raise ArgumentError(f"bad interval [{tau1}, {tau2}) for horizon {T}")
    window = slice(tau1 - 1, tau2 - 1)
    incurred = float(np.sum(played[window] * losses[window]))
    per_action = losses[window].sum(axis=0)
    best = int(np.argmin(per_action))
    return RegretReport(tau1, tau2, incurred - float(per_action[best]), best)


def dyadic_intervals(T: int) -> list[tuple[int, int]]:
    """All aligned intervals [k 2^j + 1, (k+1) 2^j + 1) inside steps 1..T."""
    out = []
    length = 1
    while length <= T:
        out.extend((k * length + 1, (k + 1) * length + 1) for k in range(T // length))
        length *= 2
    return out


def interval_regrets(losses: np.ndarray, played: np.ndarray, intervals: Iterable[tuple[int, int]]) -> np.ndarray:
    """Vectorized ``interval_regret`` over many intervals via prefix sums."""
    losses = np.asarray(losses, dtype=float)
    played = np.asarray(played, dtype=float)
    T = losses.shape[0]
    iv = np.asarray(list(intervals), dtype=np.int64).reshape(-1, 2)
    if len(iv) and (iv[:, 0].min() < 1 or iv[:, 1].max() > T + 1 or np.any(iv[:, 0] >= iv[:, 1])):
        raise ArgumentError("interval outside the horizon")
    incurred = np.concatenate([[0.0], np.cumsum(np.sum(played * losses, axis=1))])
    per_action = np.vstack([np.zeros(losses.shape[1]), np.cumsum(losses, axis=0)])
    a, b = iv[:, 0] - 1, iv[:, 1] - 1
    return (incurred[b] - incurred[a]) - (per_action[b] - per_action[a]).min(axis=1)


def envelope(lengths: np.ndarray, ends: np.ndarray, n_actions: int) -> np.ndarray:
    """sqrt(len * ln(N * tau2)) for each interval."""
    return np.sqrt(np.asarray(lengths, dtype=float) * np.log(n_actions * np.asarray(ends, dtype=float)))


@dataclass
class EnvelopeReport:
    holds: bool
    mean_regret: np.ndarray
    bound: np.ndarray
    worst_interval: tuple[int, int] | None
    fitted_constant: float

    def __bool__(self) -> bool:
        return self.holds


def regret_envelope_check(
    stream: Callable[[int], np.ndarray],
    learner: Callable[[int, int], object],
    intervals: Sequence[tuple[int, int]],
    C: float,
    seeds: Iterable[int] = range(30),
) -> EnvelopeReport:
    """Mean interval regret over seeds against C * sqrt(len * ln(N * tau2)).

    ``stream(seed)`` returns a (T, N) loss matrix and ``learner(N, T)`` a fresh
    single-row learner.
    """
    intervals = list(intervals)
    iv = np.asarray(intervals, dtype=np.int64).reshape(-1, 2)
    total, count, n_actions = None, 0, None
    for seed in seeds:
        losses = stream(seed)
        T, n_actions = losses.shape
        regrets = interval_regrets(losses, play(learner(n_actions, T), losses), intervals)
        total = regrets if total is None else total + regrets
        count += 1
    if count == 0:
        raise ArgumentError("need at least one seed")
    mean = total / count
    scale = envelope(iv[:, 1] - iv[:, 0], iv[:, 1], n_actions)
    ratios = mean / scale
    worst = int(np.argmax(ratios)) if len(ratios) else None
    return EnvelopeReport(
        holds=bool(np.all(mean <= C * scale + 1e-12)),
        mean_regret=mean,
        bound=C * scale,
        worst_interval=None if worst is None else tuple(int(a) for a in iv[worst]),
        fitted_constant=float(max(0.0, ratios.max())) if len(ratios) else 0.0,
    )


def single_switch_stream(seed: int, T: int, n_actions: int, good: float = 0.05, bad: float = 0.95) -> np.ndarray:
    """Bernoulli losses where action 0 is best until T/2 and action 1 afterwards."""
    rng = np.random.default_rng(seed)
    rates = np.full((T, n_actions), bad)
    rates[: T // 2, 0] = good
    rates[T // 2 :, 1] = good
    return (rng.random((T, n_actions)) < rates).astype(float)
