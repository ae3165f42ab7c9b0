import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynpop import CapacityError
from dynpop import congestion as cg
from dynpop import matching as mt
from dynpop.core import (
    COST,
    MECHANISM,
    PROFILE_GUARD,
    SmoothnessParams,
    TableGame,
    enumerate_pure_nash,
    iter_profiles,
    poa_bound_check,
    social_objective,
    stability_counts,
    stability_from_arrays,
    theorem_rhs,
    verify_smoothness,
)


def one_link(n=2):
    return cg.CongestionGame(np.array([[0.0, 1.0]]), [[[0]]], n)


def two_links(n=2):
    return cg.parallel_links(n, [1.0, 1.0])


def first_price(values, step=0.05, supply=1):
    values = np.asarray(values, dtype=float)
    return mt.FirstPriceGame(values.shape[0], values.shape[1], mt.BidGrid(step), supply, capped=False)


# --- social objective -------------------------------------------------------


def test_congestion_both_on_one_link():
    assert social_objective(one_link(), [0, 0], [0, 0]) == 4.0


def test_first_price_winner_value_is_welfare():
    values = np.array([[0.8], [0.3]])
    game = first_price(values, step=0.1)
    bid = mt.encode(0, 5, game.levels)
    assert social_objective(game, [bid, 0], values) == pytest.approx(0.8)


def test_all_empty_bids_have_zero_welfare():
    values = np.array([[0.8, 0.2], [0.3, 0.9]])
    assert social_objective(first_price(values), [0, 0], values) == 0.0


def test_mechanism_welfare_is_utility_plus_payments():
    rng = np.random.default_rng(0)
    values = mt.random_values(rng, 3, 2, 0.2)
    game = first_price(values, step=0.25)
    profiles = np.array(list(itertools.product(range(game.n_strategies), repeat=3)))
    out = game.evaluate(profiles, values)
    assert np.allclose(out.objective, out.values.sum(axis=1) + out.payments.sum(axis=1))


def test_anonymous_game_is_permutation_invariant():
    game = cg.parallel_links(3, [1.0, 2.0], [0.0, 1.0])
    for s in itertools.product(range(2), repeat=3):
        for perm in itertools.permutations(range(3)):
            permuted = [s[i] for i in perm]
            assert social_objective(game, permuted, [0, 0, 0]) == social_objective(game, s, [0, 0, 0])


# --- smoothness -------------------------------------------------------------


def single_item_setup(step=0.05):
    values = np.array([[1.0], [0.5]])
    grid = mt.BidGrid(step)
    game = mt.FirstPriceGame(2, 1, grid, capped=False)
    x = [0, None]

    def deviation(i, v_i, x_i):
        return mt.smoothness_deviation(v_i, x_i, grid)

    return game, values, x, deviation


def test_first_price_smoothness_holds_at_half_minus_delta():
    game, values, x, deviation = single_item_setup()
    report = verify_smoothness(game, SmoothnessParams(0.5 - 0.05, 1.0), x, deviation, values)
    assert report.holds and report.violations == 0
    assert report.checked == game.n_strategies ** 2


def test_first_price_smoothness_fails_at_inflated_lambda():
    game, values, x, deviation = single_item_setup()
    report = verify_smoothness(game, SmoothnessParams(0.9, 1.0), x, deviation, values)
    assert not report.holds
    assert report.worst_profile is not None
    # the witness really violates the inequality
    s = np.array(report.worst_profile)
    base = game.evaluate(s[None, :], values)
    dev = 0.0
    for i in range(2):
        moved = s.copy()
        moved[i] = deviation(i, values[i], x[i])
        dev += game.evaluate(moved[None, :], values).values[0, i]
    assert dev < 0.9 * 1.0 - base.payments.sum()


def test_two_link_congestion_smoothness_at_five_thirds():
    game = two_links()
    _, x = cg.brute_force_opt(game, [0, 0])
    report = verify_smoothness(game, SmoothnessParams(5 / 3, 1 / 3), list(x), lambda i, v, xi: xi, [0, 0])
    assert report.holds


# --- pure Nash --------------------------------------------------------------


def test_matching_pennies_has_no_pure_equilibrium():
    payoffs = np.zeros((2, 2, 2))
    for a, b in itertools.product(range(2), repeat=2):
        win = 1.0 if a == b else 0.0
        payoffs[a, b] = [win, 1.0 - win]
    assert enumerate_pure_nash(TableGame(payoffs, MECHANISM)) == []


def test_coordination_game_has_two_equilibria():
    payoffs = np.zeros((2, 2, 2))
    payoffs[0, 0] = [1, 1]
    payoffs[1, 1] = [0.5, 0.5]
    assert sorted(enumerate_pure_nash(TableGame(payoffs, MECHANISM))) == [(0, 0), (1, 1)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_congestion_games_always_have_a_pure_equilibrium(seed):
    game, types = cg.random_linear_game(np.random.default_rng(seed), 3, 3, n_types=2)
    equilibria = enumerate_pure_nash(game, list(types))
    assert equilibria
    # the potential minimizer is one of them
    profiles = np.concatenate(list(iter_profiles(game.strategy_sets(list(types)))))
    pots = [cg.rosenthal_potential(game, p, list(types)) for p in profiles]
    assert tuple(int(a) for a in profiles[int(np.argmin(pots))]) in equilibria


def test_two_link_poa_within_five_halves():
    game = two_links()
    _, x = cg.brute_force_opt(game, [0, 0])
    assert poa_bound_check(game, [0, 0], list(x), SmoothnessParams(5 / 3, 1 / 3))


def test_symmetric_game_with_efficient_equilibrium():
    payoffs = np.zeros((2, 2, 2))
    for a, b in itertools.product(range(2), repeat=2):
        payoffs[a, b] = [1 - 0.5 * a, 1 - 0.5 * b]
    game = TableGame(payoffs, MECHANISM)
    assert enumerate_pure_nash(game) == [(0, 0)]
    assert poa_bound_check(game, None, [0, 0], SmoothnessParams(1.0, 0.0))


def test_first_price_equilibria_within_half_minus_delta():
    game, values, _, _ = single_item_setup()
    opt = 1.0
    for s in enumerate_pure_nash(game, values):
        assert social_objective(game, s, values) >= (0.5 - 0.05) * opt - 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_smoothness_implies_poa_on_random_congestion_games(seed):
    game, types = cg.random_linear_game(np.random.default_rng(seed), 2, 3, n_types=2)
    types = list(types)
    _, x = cg.brute_force_opt(game, types)
    params = SmoothnessParams(5 / 3, 1 / 3)
    if verify_smoothness(game, params, list(x), lambda i, v, xi: xi, types).holds:
        assert poa_bound_check(game, types, list(x), params)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_capped_first_price_utilities_lie_in_unit_interval(seed):
    values = mt.random_values(np.random.default_rng(seed), 2, 2, 0.25)
    game = mt.FirstPriceGame(2, 2, mt.BidGrid(0.25), capped=True)
    for block in iter_profiles(game.strategy_sets(values)):
        u = game.evaluate(block, values).values
        assert u.min() >= -1e-12 and u.max() <= 1 + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_scaled_congestion_costs_lie_in_unit_interval(seed):
    game, types = cg.random_linear_game(np.random.default_rng(seed), 3, 3, n_types=2)
    game = game.scaled()
    for block in iter_profiles(game.strategy_sets(list(types))):
        c = game.evaluate(block, list(types)).values
        assert c.min() >= 0 and c.max() <= 1 + 1e-12


def test_profile_guard_raises_capacity_error():
    sets = [np.arange(100)] * 4
    assert 100 ** 4 > PROFILE_GUARD
    with pytest.raises(CapacityError):
        next(iter_profiles(sets))


# --- stability counters -----------------------------------------------------


def test_constant_sequence_has_no_changes():
    led = stability_counts([([0, 1], [None, 2])] * 5)
    assert led.k.tolist() == [0, 0] and led.kappa.tolist() == [0, 0]


def test_unallocated_type_change_counts_for_k_only():
    seq = [(["a"], [None]), (["a"], [None]), (["b"], [None]), (["b"], [None])]
    led = stability_counts(seq)
    assert led.k.tolist() == [1] and led.kappa.tolist() == [0]


def test_simultaneous_change_counts_twice_for_kappa():
    led = stability_counts([(["a"], [0]), (["b"], [1])])
    assert led.k.tolist() == [1] and led.kappa.tolist() == [2]


def _replay(types, sols, empty):
    # definitional counting, one comparison at a time
    T, n = types.shape
    k, kappa = [0] * n, [0] * n
    for t in range(T - 1):
        for i in range(n):
            dv = types[t, i] != types[t + 1, i]
            dx = sols[t, i] != sols[t + 1, i]
            if dv or dx:
                k[i] += 1
            if dx:
                kappa[i] += 1
            if dv and sols[t, i] != empty:
                kappa[i] += 1
    return k, kappa


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_vectorized_counters_match_replay(seed):
    rng = np.random.default_rng(seed)
    types = rng.integers(0, 2, size=(12, 3))
    sols = rng.integers(-1, 2, size=(12, 3))
    led = stability_from_arrays(types, sols)
    k, kappa = _replay(types, sols, -1)
    assert led.k.tolist() == k and led.kappa.tolist() == kappa
    assert np.all(led.kappa <= 2 * led.k)
    seq = [(list(types[t]), [None if a == -1 else int(a) for a in sols[t]]) for t in range(12)]
    slow = stability_counts(seq)
    assert slow.k.tolist() == k and slow.kappa.tolist() == kappa


# --- theorem right-hand sides ----------------------------------------------


def test_cost_rhs_with_no_changes_and_zero_opt():
    rhs = theorem_rhs("cost", lam=5 / 3, mu=1 / 3, alpha=1, c_r=0.5, n=4, T=100, N=3, k=0, opt_sum=0)
    assert rhs == pytest.approx(4 / (2 / 3) * 0.5 * math.sqrt(100 * math.log(300)))


def test_improved_rhs_with_square_market():
    rhs = theorem_rhs("improved-mech", lam=0.5, mu=1, alpha=1, c_r=1.0, n=3, T=50, N=7, k=0, opt_sum=0, m=3)
    assert rhs == pytest.approx(-math.sqrt(50 * 3 * 3 * math.log(350)))


def test_improved_rhs_matching_numbers():
    eps, k, opt_sum = 0.25, 0.37, 24000.0
    rhs = theorem_rhs("improved-mech", lam=0.5, mu=1.0, alpha=2 * (1 + eps), c_r=0.2, n=8, T=10_000, N=60,
                      k=k, opt_sum=opt_sum, m=3)
    # independent re-evaluation
    welfare_part = opt_sum / (4 * 1.25)
    regret_part = 0.2 * (10_000 * 3 * (k * 8 + 3) * math.log(600_000)) ** 0.5
    assert rhs == pytest.approx(welfare_part - regret_part, rel=1e-12)


def test_mech_rhs_uses_max_of_one_and_mu():
    a = theorem_rhs("mech", lam=0.5, mu=0.5, alpha=1, c_r=0, n=1, T=10, N=2, k=0, opt_sum=10)
    b = theorem_rhs("mech", lam=0.5, mu=2.0, alpha=1, c_r=0, n=1, T=10, N=2, k=0, opt_sum=10)
    assert a == pytest.approx(5.0) and b == pytest.approx(2.5)


def test_efficiency_factors():
    assert SmoothnessParams(5 / 3, 1 / 3).efficiency_factor(COST) == pytest.approx(2.5)
    assert SmoothnessParams(0.5, 1.0).efficiency_factor(MECHANISM) == pytest.approx(0.5)
