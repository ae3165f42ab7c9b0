"""Total-variation couplings, a toy private matcher and privacy measurement."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .core import stability_counts
from .errors import ArgumentError, CapacityError
from .matching import enumerate_matchings

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class FiniteDistribution:
    omega: tuple[Hashable, ...]
    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.shape != (len(self.omega),):
            raise ArgumentError("probability vector does not match the outcome space")
        if np.any(p < -_SUM_TOL) or abs(p.sum() - 1.0) > 1e-9:
            raise ArgumentError("not a probability vector")
        object.__setattr__(self, "p", np.clip(p, 0.0, None))
        object.__setattr__(self, "omega", tuple(self.omega))

    @classmethod
    def point(cls, omega: Sequence[Hashable], outcome: Hashable) -> "FiniteDistribution":
        p = np.zeros(len(omega))
        p[list(omega).index(outcome)] = 1.0
        return cls(tuple(omega), p)

    def mass(self, outcome: Hashable) -> float:
        return float(self.p[self.omega.index(outcome)])

    def to_dict(self) -> dict:
        return {"omega": [list(o) if isinstance(o, tuple) else o for o in self.omega],
                "p": [float(x) for x in self.p]}

    @classmethod
    def from_dict(cls, data: dict) -> "FiniteDistribution":
        omega = tuple(tuple(o) if isinstance(o, list) else o for o in data["omega"])
        return cls(omega, np.asarray(data["p"], dtype=float))


def _same_space(mu: FiniteDistribution, eta: FiniteDistribution) -> None:
    if mu.omega != eta.omega:
        raise ArgumentError("distributions live on different outcome spaces")


def tv_distance(mu: FiniteDistribution, eta: FiniteDistribution) -> float:
    """Half the L1 distance; checked against the largest set-wise gap."""
    _same_space(mu, eta)
    half_l1 = 0.5 * float(np.abs(mu.p - eta.p).sum())
    set_gap = float(np.clip(mu.p - eta.p, 0.0, None).sum())
    if abs(half_l1 - set_gap) > 1e-9:
        raise RuntimeError("total variation forms disagree")
    return half_l1


def maximal_coupling(mu: FiniteDistribution, eta: FiniteDistribution) -> np.ndarray:
    """Joint matrix with marginals mu (rows) and eta (columns) and P[X != Y] = tv."""
    _same_space(mu, eta)
    common = np.minimum(mu.p, eta.p)
    joint = np.diag(common)
    gap = 1.0 - common.sum()
    if gap > _SUM_TOL:
        joint += np.outer(mu.p - common, eta.p - common) / gap
    return joint


def disagreement(joint: np.ndarray) -> float:
    return float(joint.sum() - np.trace(joint))


def stable_sequence_sample(
    sigmas: Sequence[FiniteDistribution], change_steps: Iterable[int], rng: np.random.Generator
) -> list[int]:
    """Outcome indices x^1..x^T with marginals sigma^t that change as rarely as possible.

    ``change_steps`` holds the 1-indexed steps t after which sigma may differ,
    i.e. sigma^{t+1} != sigma^t is allowed only for t in the set.
    """
    changes = set(change_steps)
    x = [int(rng.choice(len(sigmas[0].p), p=sigmas[0].p))]
    for t in range(1, len(sigmas)):
        prev, nxt = sigmas[t - 1], sigmas[t]
        _same_space(prev, nxt)
        if t not in changes:
            if not np.allclose(prev.p, nxt.p, atol=1e-12):
                raise ArgumentError(f"distribution moved at step {t} outside the change set")
            x.append(x[-1])
            continue
        row = maximal_coupling(prev, nxt)[x[-1]]
        x.append(int(rng.choice(len(row), p=row / row.sum())))
    return x


# ----------------------------------------------------------------------------
# exponential mechanism over matchings


def matching_outcomes(n: int, m: int, supply: int = 1, limit: int = 200_000) -> list[tuple[int | None, ...]]:
    if n > 5 or m > 5:
        raise CapacityError("exponential matcher is limited to n, m <= 5")
    out = list(enumerate_matchings(n, m, supply))
    if len(out) > limit:
        raise CapacityError(f"{len(out)} matchings exceed {limit}")
    return out


def exponential_matcher(values: np.ndarray, eps: float, supply: int = 1) -> FiniteDistribution:
    """Pr[x] proportional to exp(eps * W(x) / 2); W changes by at most 1 when one player's values change."""
    values = np.asarray(values, dtype=float)
    n, m = values.shape
    omega = matching_outcomes(n, m, supply)
    w = np.array([sum(values[i, j] for i, j in enumerate(x) if j is not None) for x in omega])
    logits = eps * w / 2.0
    p = np.exp(logits - logits.max())
    return FiniteDistribution(tuple(omega), p / p.sum())


@dataclass
class PrivacyMeasurement:
    epsilon: float
    finite: bool
    worst_pair: int | None


def _eps_for_pair(P: np.ndarray, Q: np.ndarray, delta: float) -> float:
    """Smallest eps with P(S) <= e^eps Q(S) + delta for every event S."""
    if delta <= 0:
        both = (P > 0) & (Q > 0)
        if np.any((P > 0) & (Q == 0)):
            return math.inf
        return float(np.max(np.log(P[both] / Q[both]), initial=0.0))
    # the excess sum_w (P - c Q)_+ falls as c = e^eps grows; between consecutive
    # sorted likelihood ratios it is linear, A - c B, over the prefix above c
    lone = float(P[Q == 0].sum())
    if lone > delta + _SUM_TOL:
        return math.inf
    mask = (Q > 0) & (P > 0)
    ratio = P[mask] / Q[mask]
    order = np.argsort(-ratio)
    r, p, q = ratio[order], P[mask][order], Q[mask][order]
    A, B = lone, 0.0
    for k in range(len(r)):
        A += p[k]
        B += q[k]
        lower = r[k + 1] if k + 1 < len(r) else 0.0
        if A - lower * B > delta:
            return max(0.0, math.log((A - delta) / B))
    return 0.0


def measure_privacy(
    mechanism: Callable[[np.ndarray], FiniteDistribution],
    pairs: Iterable[tuple[np.ndarray, np.ndarray]],
    delta: float = 0.0,
) -> PrivacyMeasurement:
    """Worst privacy loss over neighbor pairs, in both directions."""
    worst, where = 0.0, None
    for k, (d0, d1) in enumerate(pairs):
        a, b = mechanism(d0), mechanism(d1)
        _same_space(a, b)
        loss = max(_eps_for_pair(a.p, b.p, delta), _eps_for_pair(b.p, a.p, delta))
        if loss > worst:
            worst, where = loss, k
    return PrivacyMeasurement(worst, math.isfinite(worst), where)


def neighbor_pairs(values: np.ndarray, alternatives: Sequence[np.ndarray]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Every instance that differs from ``values`` in one player's row, drawn from ``alternatives``."""
    values = np.asarray(values, dtype=float)
    out = []
    for i in range(values.shape[0]):
        for row in alternatives:
            other = values.copy()
            other[i] = row
            if not np.array_equal(other, values):
                out.append((values, other))
    return out


def failure_patch(dist: FiniteDistribution, flags: Sequence[bool], beta: float, opt_outcome: Hashable
                  ) -> FiniteDistribution:
    """Move the mass of flagged (failed) outcomes onto the optimal outcome."""
    flags = np.asarray(flags, dtype=bool)
    failed = float(dist.p[flags].sum())
    if failed > beta + _SUM_TOL:
        raise ArgumentError(f"flagged mass {failed} exceeds beta={beta}")
    p = dist.p.copy()
    p[flags] = 0.0
    p[dist.omega.index(opt_outcome)] += failed
    return FiniteDistribution(dist.omega, p)


# ----------------------------------------------------------------------------
# stability through privacy


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0
    beta: float = 0.0

    def __post_init__(self) -> None:
        if self.epsilon < 0 or not 0 <= self.delta <= 1 or not 0 <= self.beta <= 1:
            raise ArgumentError("privacy parameters out of range")


def stability_bound(p: float, T: int, n: int, params: PrivacyParams) -> float:
    return p * T * (1 + n * (2 * params.epsilon + 2 * params.beta + params.delta))


@dataclass
class PrivacyStabilityReport:
    mean_changes: float
    bound: float
    holds: bool
    per_seed: list[float]


def coupled_solutions(
    mechanism: Callable[[np.ndarray], FiniteDistribution],
    type_rows: np.ndarray,
    rng: np.random.Generator,
) -> list[tuple[int | None, ...]]:
    """Coupled per-round solutions for a sequence of (n, m) value profiles.

    A round where several players changed is split into one-player steps in
    slot order; the intermediate samples are dropped afterwards.
    """
    cache: dict[bytes, FiniteDistribution] = {}

    def sigma(v: np.ndarray) -> FiniteDistribution:
        key = v.tobytes()
        if key not in cache:
            cache[key] = mechanism(v)
        return cache[key]

    first = sigma(type_rows[0])
    x = int(rng.choice(len(first.p), p=first.p))
    out = [first.omega[x]]
    current = type_rows[0].copy()
    for t in range(1, len(type_rows)):
        for i in np.flatnonzero(np.any(type_rows[t] != current, axis=1)):
            before = sigma(current)
            current = current.copy()
            current[i] = type_rows[t][i]
            after = sigma(current)
            row = maximal_coupling(before, after)[x]
            x = int(rng.choice(len(row), p=row / row.sum()))
        out.append(sigma(current).omega[x])
    return out


def privacy_stability_check(
    mechanism: Callable[[np.ndarray], FiniteDistribution],
    runs: Sequence[tuple[np.ndarray, np.ndarray]],
    params: PrivacyParams,
    p: float,
    seeds: Sequence[int],
) -> PrivacyStabilityReport:
    """Mean per-player change count of coupled solutions against pT(1 + n(2eps + 2beta + delta)).

    Each run is (participant ids of shape (T, n), values of shape (T, n, m)).
    """
    if params.epsilon > 0.5:
        raise ArgumentError("the stability bound needs epsilon <= 1/2")
    per_seed = []
    T = n = 0
    for (ids, rows), seed in zip(runs, seeds):
        T, n = ids.shape
        sols = coupled_solutions(mechanism, rows, np.random.default_rng(seed))
        seq = [(list(ids[t]), list(sols[t])) for t in range(T)]
        per_seed.append(stability_counts(seq).k_mean)
    mean = float(np.mean(per_seed))
    bound = stability_bound(p, T, n, params)
    return PrivacyStabilityReport(mean, bound, mean <= bound, per_seed)


def load_distribution(path: str | Path) -> FiniteDistribution:
    return FiniteDistribution.from_dict(json.loads(Path(path).read_text()))
