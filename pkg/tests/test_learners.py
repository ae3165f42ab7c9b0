import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynpop.errors import ArgumentError
from dynpop.learners import (
    FixedShare,
    GeometricCovering,
    Hedge,
    default_eta,
    dyadic_intervals,
    envelope,
    interval_regret,
    interval_regrets,
    play,
    regret_envelope_check,
    single_switch_stream,
)

loss_streams = st.integers(0, 10_000).map(lambda s: np.random.default_rng(s).random((40, 4)))


def test_single_action_is_certain_forever():
    learner = FixedShare(1, 0.5, 0.1)
    for _ in range(20):
        assert learner.step(np.array([0.7])).tolist() == [1.0]


def test_full_mixing_is_always_uniform():
    learner = FixedShare(3, 2.0, 1.0)
    rng = np.random.default_rng(1)
    for _ in range(30):
        assert np.allclose(learner.step(rng.random(3)), 1 / 3)


def test_fixed_share_concentrates_on_the_good_action():
    # reference recurrence computed by hand: weights w_a <- w_a e^{-eta l_a}, then mix alpha
    w = np.array([0.5, 0.5])
    for _ in range(100):
        w = w * np.exp(-np.array([0.0, 1.0]))
        w = w / w.sum()
        w = 0.99 * w + 0.01 * 0.5
    learner = FixedShare(2, 1.0, 0.01)
    for _ in range(100):
        learner.step(np.array([0.0, 1.0]))
    assert learner.distribution[0] >= 0.95
    assert learner.distribution == pytest.approx(w, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(loss_streams)
def test_zero_mixing_is_bit_identical_to_hedge(losses):
    a, b = Hedge(4, 0.3), FixedShare(4, 0.3, 0.0)
    for row in losses:
        assert np.array_equal(a.step(row), b.step(row))


@settings(max_examples=30, deadline=None)
@given(loss_streams, st.sampled_from(["hedge", "fixed-share", "covering"]))
def test_distributions_are_probability_vectors(losses, kind):
    learner = {"hedge": Hedge(4, 0.5), "fixed-share": FixedShare(4, 0.5, 0.05),
               "covering": GeometricCovering(4, 40)}[kind]
    for row in losses:
        d = learner.step(row)
        assert d.min() >= 0 and abs(d.sum() - 1) < 1e-12


def test_masked_actions_get_no_mass():
    mask = np.array([True, False, True])
    for learner in (Hedge(3, 0.5, mask=mask), FixedShare(3, 0.5, 0.2, mask=mask), GeometricCovering(3, 16, mask)):
        for _ in range(16):
            d = learner.step(np.array([0.9, 0.0, 0.1]))
            assert d[1] == 0.0


def test_batched_reset_restores_uniform_rows():
    learner = FixedShare(3, 1.0, 0.0, rows=2)
    for _ in range(10):
        learner.step(np.array([[0, 1, 1], [1, 0, 1.0]]))
    learner.reset([1])
    assert np.allclose(learner.distribution[1], 1 / 3)
    assert learner.distribution[0, 0] > 0.9


def test_losses_outside_unit_interval_are_rejected():
    with pytest.raises(ArgumentError):
        Hedge(2, 0.1).step(np.array([1.5, 0.0]))


def test_default_rate_uses_expected_lifetime():
    assert default_eta(10, 1000, 0.0) == pytest.approx(np.sqrt(8 * np.log(10) / 1000))
    assert default_eta(10, 1000, 0.01) == pytest.approx(np.sqrt(8 * np.log(10) / 100))


# --- interval regret -------------------------------------------------------


def test_point_mass_on_interval_best_has_zero_regret():
    losses = np.random.default_rng(2).random((30, 3))
    best = int(np.argmin(losses[5:20].sum(axis=0)))
    played = np.zeros_like(losses)
    played[:, best] = 1.0
    assert interval_regret(losses, played, 6, 21).regret == pytest.approx(0.0)


def test_uniform_play_against_split_losses():
    losses = np.tile([0.0, 1.0], (10, 1))
    played = np.full_like(losses, 0.5)
    assert interval_regret(losses, played, 1, 11).regret == pytest.approx(5.0)


def _brute_regret(losses, played, tau1, tau2):
    incurred = sum(float(played[t] @ losses[t]) for t in range(tau1 - 1, tau2 - 1))
    return incurred - min(sum(losses[t, a] for t in range(tau1 - 1, tau2 - 1)) for a in range(losses.shape[1]))


def test_regret_matches_enumeration_of_fixed_actions():
    rng = np.random.default_rng(3)
    losses = rng.random((20, 3))
    played = play(FixedShare(3, 0.4, 0.05), losses)
    for tau1, tau2 in itertools.combinations(range(1, 22), 2):
        assert interval_regret(losses, played, tau1, tau2).regret == pytest.approx(
            _brute_regret(losses, played, tau1, tau2), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(loss_streams)
def test_vectorized_regrets_match_single_interval(losses):
    played = play(Hedge(4, 0.5), losses)
    ivs = dyadic_intervals(40)
    fast = interval_regrets(losses, played, ivs)
    slow = [interval_regret(losses, played, a, b).regret for a, b in ivs]
    assert np.allclose(fast, slow, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(loss_streams)
def test_full_horizon_point_play_is_classical_regret(losses):
    actions = np.random.default_rng(int(losses[0, 0] * 1e6)).integers(0, 4, size=40)
    played = np.eye(4)[actions]
    classical = losses[np.arange(40), actions].sum() - losses.sum(axis=0).min()
    assert interval_regret(losses, played, 1, 41).regret == pytest.approx(classical)


@settings(max_examples=30, deadline=None)
@given(loss_streams, st.integers(0, 39), st.floats(0.0, 0.5))
def test_shifting_one_step_leaves_regret_unchanged(losses, step, shift):
    played = play(FixedShare(4, 0.5, 0.01), losses)
    shifted = losses.copy()
    shifted[step] += shift
    ivs = dyadic_intervals(40)
    assert np.allclose(interval_regrets(losses, played, ivs), interval_regrets(shifted, played, ivs), atol=1e-10)


def test_dyadic_intervals_tile_each_level():
    ivs = dyadic_intervals(8)
    assert (1, 9) in ivs and (5, 9) in ivs and (8, 9) in ivs
    assert len(ivs) == 8 + 4 + 2 + 1


def test_constant_losses_have_zero_regret_everywhere():
    report = regret_envelope_check(lambda s: np.full((64, 3), 0.4), lambda n, t: Hedge(n, 0.3),
                                   dyadic_intervals(64), 0.01, seeds=range(2))
    assert report.holds and np.allclose(report.mean_regret, 0.0)


def test_envelope_shape():
    assert envelope(np.array([4]), np.array([8]), 2)[0] == pytest.approx(np.sqrt(4 * np.log(16)))


def test_single_switch_stream_switches_at_half():
    losses = single_switch_stream(0, 2000, 4)
    assert losses[:1000, 0].mean() < 0.1 and losses[1000:, 1].mean() < 0.1
    assert losses[1000:, 0].mean() > 0.9


def test_covering_tracks_a_switch_on_a_short_stream():
    T = 2 ** 10

    def stream(s):
        return single_switch_stream(s, T, 4)

    ivs = [(T // 2 + 1, T + 1)]
    covering = regret_envelope_check(stream, lambda n, t: GeometricCovering(n, t), ivs, 10.0, seeds=range(3))
    hedge = regret_envelope_check(stream, lambda n, t: Hedge(n, default_eta(n, t)), ivs, 10.0, seeds=range(3))
    assert covering.mean_regret[0] < hedge.mean_regret[0]
