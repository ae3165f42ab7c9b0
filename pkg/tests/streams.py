"""Shared event-stream driver for the greedy-layered benchmark tests."""

import numpy as np

from dynpop import matching as mt
from dynpop.core import stability_from_arrays
from dynpop.population import PopulationConfig, simulate_population


def layered_stream(seed, n=8, m=5, p=0.05, T=2000, rho=0.1, eps=0.25, pool=32, check_every_event=True):
    """Drive LayeredMatching through a turnover stream, asserting the potential law per event.

    Returns (total kappa, total k, departures of holders, total phi increase).
    """
    rng = np.random.default_rng(seed)
    values = mt.random_values(rng, pool, m, rho)
    values = np.round(values, 6)
    values[(values > 0) & (values < rho)] = rho
    run = simulate_population(PopulationConfig(n, p, T, seed=seed + 10_000), pool, initial=np.arange(n))
    state = mt.LayeredMatching(values[run.types[0]], rho, eps)
    solutions = np.empty((T, n), dtype=np.int64)
    solutions[0] = [-1 if j is None else j for j in state.assignment()]
    by_round = {}
    for e in run.events:
        by_round.setdefault(e.t, []).append(e)
    holder_departures = 0
    phi_increase = 0
    changes = 0
    for t in range(1, T):
        for e in by_round.get(t + 1, []):
            held = state.seat[e.slot] >= 0
            before = state.phi
            moves = state.depart(e.slot)
            for mv in moves:
                if mv.kind == "depart":
                    assert mv.delta_phi < 0
                else:
                    assert mv.delta_phi >= 1, mv
                    phi_increase += mv.delta_phi
            if not held:
                assert state.phi >= before
            holder_departures += held
            changes += sum(1 for mv in moves if mv.kind != "depart")
            before = state.phi
            moves = state.arrive(e.slot, values[e.type_id])
            for mv in moves:
                if mv.kind == "take":
                    assert mv.delta_phi >= 1, mv
                    phi_increase += mv.delta_phi
            assert state.phi >= before
            changes += sum(1 for mv in moves if mv.kind == "take")
            if check_every_event:
                state.check()
        solutions[t] = [-1 if j is None else j for j in state.assignment()]
    ledger = stability_from_arrays(run.participant, solutions)
    return float(ledger.kappa.sum()), float(ledger.k.sum()), holder_departures, phi_increase, changes
