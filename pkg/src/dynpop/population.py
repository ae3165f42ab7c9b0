"""Player turnover: each slot is independently replaced with probability p per round."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError

POLICIES = ("scripted", "rotation", "iid-pool", "adversarial-worst")


@dataclass(frozen=True)
class PopulationConfig:
    n: int
    p: float
    T: int
    seed: int = 0
    arrival_policy: str = "iid-pool"

    def __post_init__(self) -> None:
        if self.n < 1 or self.T < 1:
            raise ArgumentError("n and T must be at least 1")
        if not 0.0 <= self.p <= 1.0:
            raise ArgumentError(f"turnover probability {self.p} outside [0, 1]")
        if self.arrival_policy not in POLICIES:
            raise ArgumentError(f"unknown arrival policy {self.arrival_policy!r}")


@dataclass(frozen=True)
class TurnoverEvent:
    t: int
    slot: int
    type_id: int


@dataclass
class PopulationRun:
    """Type sequence as pool indices, plus a participant serial per slot and round.

    ``participant`` changes on every replacement, even when the newcomer draws
    the same pool type, so it identifies who is actually playing.
    """

    types: np.ndarray
    participant: np.ndarray
    events: list[TurnoverEvent] = field(default_factory=list)

    def events_at(self, t: int) -> list[TurnoverEvent]:
        return [e for e in self.events if e.t == t]


def expected_lifetime(p: float) -> float:
    """Mean number of rounds a participant stays; infinite when p = 0 (no turnover)."""
    if not 0.0 <= p <= 1.0:
        raise ArgumentError(f"turnover probability {p} outside [0, 1]")
    return math.inf if p == 0 else 1.0 / p


class _Arrivals:
    def __init__(self, config: PopulationConfig, pool_size: int, rng: np.random.Generator,
                 script: Sequence[Sequence[int]] | None,
                 badness: Callable[[np.ndarray, int, int], float] | None):
        self.config = config
        self.pool_size = pool_size
        self.rng = rng
        self.script = script
        self.badness = badness
        self.draws = np.zeros(config.n, dtype=np.int64)

    def initial(self) -> np.ndarray:
        policy, n = self.config.arrival_policy, self.config.n
        if policy == "scripted":
            return np.array([self._scripted(i) for i in range(n)], dtype=np.int64)
        if policy == "rotation":
            return np.array([self._rotation(i) for i in range(n)], dtype=np.int64)
        return self.rng.integers(0, self.pool_size, size=n)

    def draw(self, current: np.ndarray, slot: int) -> int:
        policy = self.config.arrival_policy
        if policy == "scripted":
            return self._scripted(slot)
        if policy == "rotation":
            return self._rotation(slot)
        if policy == "iid-pool":
            return int(self.rng.integers(0, self.pool_size))
        # one-step greedy adversary: the pool type that makes the benchmark worst
        scores = [self.badness(current, slot, c) for c in range(self.pool_size)]
        return int(np.argmax(scores))

    def _scripted(self, slot: int) -> int:
        k = self.draws[slot]
        if slot >= len(self.script) or k >= len(self.script[slot]):
            raise ArgumentError(f"script for slot {slot} ran out after {k} entries")
        self.draws[slot] += 1
        return int(self.script[slot][k])

    def _rotation(self, slot: int) -> int:
        k = self.draws[slot]
        self.draws[slot] += 1
        return int((slot + k) % self.pool_size)


def simulate_population(
    config: PopulationConfig,
    pool_size: int,
    script: Sequence[Sequence[int]] | None = None,
    badness: Callable[[np.ndarray, int, int], float] | None = None,
    initial: Sequence[int] | None = None,
) -> PopulationRun:
    """Draw the type sequence v^1..v^T as indices into a pool of ``pool_size`` types.

    ``script[i]`` lists the types slot i takes, the first entry being its initial
    type. ``badness(current, slot, candidate)`` scores how much a candidate type
    hurts the benchmark; the adversarial policy picks the highest score.
    ``initial`` fixes the round-one profile for the non-scripted policies.
    """
    if config.arrival_policy == "scripted":
        if script is None:
            raise ArgumentError("scripted policy needs a script")
        pool_size = max(pool_size, 1 + max((max(s) for s in script if len(s)), default=0))
    if pool_size < 1:
        raise ArgumentError("empty type pool")
    if config.arrival_policy == "adversarial-worst" and badness is None:
        raise ArgumentError("adversarial policy needs a badness function")
    rng = np.random.default_rng(config.seed)
    arrivals = _Arrivals(config, pool_size, rng, script, badness)
    n, T = config.n, config.T
    types = np.empty((T, n), dtype=np.int64)
    participant = np.empty((T, n), dtype=np.int64)
    if initial is not None and config.arrival_policy != "scripted":
        if len(initial) != n or min(initial) < 0 or max(initial) >= pool_size:
            raise ArgumentError("initial profile does not fit the pool")
        types[0] = np.asarray(initial, dtype=np.int64)
    else:
        types[0] = arrivals.initial()
    participant[0] = np.arange(n)
    serial = n
    events: list[TurnoverEvent] = []
    leaving = rng.random((T - 1, n)) < config.p if T > 1 else np.zeros((0, n), dtype=bool)
    for t in range(1, T):
        types[t] = types[t - 1]
        participant[t] = participant[t - 1]
        for slot in np.flatnonzero(leaving[t - 1]):
            new = arrivals.draw(types[t], int(slot))
            types[t, slot] = new
            participant[t, slot] = serial
            serial += 1
            events.append(TurnoverEvent(t + 1, int(slot), new))
    return PopulationRun(types, participant, events)


def write_events_csv(events: Sequence[TurnoverEvent], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "slot", "new_type_id"])
        for e in events:
            writer.writerow([e.t, e.slot, e.type_id])
    return path
