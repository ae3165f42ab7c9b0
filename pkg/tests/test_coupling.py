import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dynpop import coupling as cp
from dynpop.errors import ArgumentError, CapacityError
from dynpop.population import PopulationConfig, simulate_population

OMEGA2 = ("a", "b")


def dist(p, omega=None):
    p = np.asarray(p, dtype=float)
    return cp.FiniteDistribution(tuple(range(len(p))) if omega is None else omega, p / p.sum())


def same_length_pair(k):
    return st.tuples(*(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k).filter(lambda p: sum(p) > 1e-3)
                       for _ in range(3)))


# --- total variation ------------------------------------------------------------


@pytest.mark.parametrize("mu, eta, tv", [([0.5, 0.5], [1, 0], 0.5), ([0.3, 0.7], [0.3, 0.7], 0.0),
                                         ([0.7, 0.3], [0.2, 0.8], 0.5)])
def test_tv_examples(mu, eta, tv):
    assert cp.tv_distance(dist(mu), dist(eta)) == pytest.approx(tv)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5).flatmap(same_length_pair))
def test_tv_triangle_inequality(triple):
    a, b, c = (dist(p) for p in triple)
    assert cp.tv_distance(a, c) <= cp.tv_distance(a, b) + cp.tv_distance(b, c) + 1e-12


def test_mismatched_spaces_rejected():
    with pytest.raises(ArgumentError):
        cp.tv_distance(dist([1, 1]), dist([1, 1], omega=OMEGA2))


# --- maximal coupling -----------------------------------------------------------


def test_identical_marginals_stay_on_the_diagonal():
    joint = cp.maximal_coupling(dist([0.2, 0.8]), dist([0.2, 0.8]))
    assert cp.disagreement(joint) == 0.0 and np.allclose(np.diag(joint), [0.2, 0.8])


def test_disjoint_supports_always_disagree():
    assert cp.disagreement(cp.maximal_coupling(dist([1, 0]), dist([0, 1]))) == pytest.approx(1.0)


def test_half_against_point_mass():
    joint = cp.maximal_coupling(dist([0.5, 0.5]), dist([1, 0]))
    assert cp.disagreement(joint) == pytest.approx(0.5)
    assert joint.sum(axis=1) == pytest.approx([0.5, 0.5]) and joint.sum(axis=0) == pytest.approx([1, 0])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5).flatmap(same_length_pair))
def test_coupling_marginals_exact_and_disagreement_is_tv(triple):
    mu, eta = dist(triple[0]), dist(triple[1])
    joint = cp.maximal_coupling(mu, eta)
    assert np.all(joint >= 0)
    assert np.allclose(joint.sum(axis=1), mu.p, atol=1e-12)
    assert np.allclose(joint.sum(axis=0), eta.p, atol=1e-12)
    assert cp.disagreement(joint) == pytest.approx(cp.tv_distance(mu, eta), abs=1e-12)


# --- stable sequences -------------------------------------------------------------


def test_constant_sequence_never_moves():
    sigmas = [dist([0.3, 0.3, 0.4])] * 20
    xs = cp.stable_sequence_sample(sigmas, set(range(1, 20)), np.random.default_rng(0))
    assert len(set(xs)) == 1


def test_moving_outside_change_set_rejected():
    with pytest.raises(ArgumentError):
        cp.stable_sequence_sample([dist([1, 1]), dist([1, 3])], set(), np.random.default_rng(0))


def test_change_frequency_equals_tv():
    a, b = dist([0.5, 0.3, 0.2]), dist([0.2, 0.3, 0.5])
    assert cp.tv_distance(a, b) == pytest.approx(0.3)
    rng = np.random.default_rng(1)
    runs = 10_000
    moved = sum(len(set(cp.stable_sequence_sample([a, b], {1}, rng))) > 1 for _ in range(runs))
    assert abs(moved / runs - 0.3) <= 0.015


def test_per_step_marginals_pass_chi_square():
    sigmas = [dist([0.5, 0.3, 0.2]), dist([0.2, 0.3, 0.5]), dist([0.2, 0.3, 0.5]), dist([0.1, 0.8, 0.1])]
    rng = np.random.default_rng(2)
    runs = 10_000
    counts = np.zeros((4, 3))
    for _ in range(runs):
        for t, x in enumerate(cp.stable_sequence_sample(sigmas, {1, 3}, rng)):
            counts[t, x] += 1
    for t in range(4):
        expected = sigmas[t].p * runs
        chi2 = float(((counts[t] - expected) ** 2 / expected).sum())
        # 3 sigma upper tail with two degrees of freedom
        assert chi2 <= stats.chi2.ppf(0.99865, df=2)


# --- exponential mechanism --------------------------------------------------------


def test_zero_epsilon_is_uniform():
    d = cp.exponential_matcher(np.array([[0.9, 0.2], [0.4, 0.6]]), 0.0)
    assert np.allclose(d.p, 1 / len(d.p))
    assert len(d.p) == 7


def test_large_epsilon_concentrates_on_the_optimum():
    values = np.array([[1.0, 0.0], [0.0, 1.0]])
    d = cp.exponential_matcher(values, 200.0)
    assert d.mass((0, 1)) >= 0.99


def test_matcher_capacity_guard():
    with pytest.raises(CapacityError):
        cp.exponential_matcher(np.zeros((6, 2)), 1.0)


def _alternatives():
    return [np.array(v) for v in itertools.product([0.0, 0.5, 1.0], repeat=2)]


@pytest.mark.parametrize("eps", [0.2, 0.5, 1.0])
def test_measured_privacy_within_epsilon(eps):
    values = np.array([[0.9, 0.2], [0.4, 0.6]])
    pairs = cp.neighbor_pairs(values, _alternatives())
    measured = cp.measure_privacy(lambda v: cp.exponential_matcher(v, eps), pairs)
    assert measured.finite and measured.epsilon <= eps + 1e-12


def test_constant_mechanism_leaks_nothing():
    pairs = cp.neighbor_pairs(np.array([[0.5, 0.5]]), _alternatives())
    const = lambda v: dist([0.25, 0.75])
    assert cp.measure_privacy(const, pairs).epsilon == 0.0


def test_deterministic_mechanism_is_not_private():
    pairs = [(np.array([[0.0]]), np.array([[1.0]]))]
    mech = lambda v: cp.FiniteDistribution.point((0, 1), int(v[0, 0] > 0.5))
    measured = cp.measure_privacy(mech, pairs)
    assert not measured.finite and measured.worst_pair == 0


def _eps_by_subsets(P, Q, delta):
    # smallest eps with P(S) <= e^eps Q(S) + delta over every subset, found by bisection
    subsets = [np.array(s, dtype=bool) for s in itertools.product([0, 1], repeat=len(P))]

    def ok(eps):
        return all(P[s].sum() <= math.exp(eps) * Q[s].sum() + delta + 1e-12 for s in subsets)

    if not ok(50.0):
        return math.inf
    lo, hi = 0.0, 50.0
    if ok(0.0):
        return 0.0
    for _ in range(80):
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.01, 0.05, 0.2]))
def test_approximate_privacy_matches_subset_oracle(seed, delta):
    rng = np.random.default_rng(seed)
    P, Q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    assert cp._eps_for_pair(P, Q, delta) == pytest.approx(_eps_by_subsets(P, Q, delta), abs=1e-9)


# --- failure patch ----------------------------------------------------------------


def test_zero_beta_patch_is_identity():
    d = dist([0.2, 0.3, 0.5])
    assert np.array_equal(cp.failure_patch(d, [False] * 3, 0.0, 0).p, d.p)


def test_fully_flagged_patch_is_a_point_mass():
    d = dist([0.2, 0.3, 0.5])
    assert cp.failure_patch(d, [True] * 3, 1.0, 2).p.tolist() == [0.0, 0.0, 1.0]


def test_flagged_mass_above_beta_rejected():
    with pytest.raises(ArgumentError):
        cp.failure_patch(dist([0.5, 0.5]), [True, False], 0.1, 1)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_patched_neighbors_stay_close(seed):
    rng = np.random.default_rng(seed)
    beta = 0.05
    a, b = dist(rng.dirichlet(np.ones(5))), dist(rng.dirichlet(np.ones(5)))

    def flags(d):
        order = np.argsort(d.p)
        f = np.zeros(5, dtype=bool)
        mass = 0.0
        for k in order:
            if mass + d.p[k] <= beta:
                f[k] = True
                mass += d.p[k]
        return f

    opt = int(rng.integers(0, 5))
    pa, pb = cp.failure_patch(a, flags(a), beta, opt), cp.failure_patch(b, flags(b), beta, opt)
    assert cp.tv_distance(pa, pb) <= cp.tv_distance(a, b) + 2 * beta + 1e-12


# --- stability through privacy ------------------------------------------------------


def _runs(n, m, p, T, seeds, pool_size=6):
    rng = np.random.default_rng(99)
    pool = np.round(rng.uniform(0, 1, size=(pool_size, m)), 3)
    out = []
    for s in seeds:
        run = simulate_population(PopulationConfig(n, p, T, seed=s), pool_size)
        out.append((run.participant, pool[run.types]))
    return out


def test_no_turnover_means_no_changes():
    runs = _runs(3, 2, 0.0, 50, range(3))
    mech = lambda v: cp.exponential_matcher(v, 0.2)
    report = cp.privacy_stability_check(mech, runs, cp.PrivacyParams(0.2), 0.0, range(3))
    assert report.mean_changes == 0.0 and report.holds


def test_uniform_mechanism_only_counts_type_changes():
    runs = _runs(3, 2, 0.1, 100, range(3))
    mech = lambda v: cp.exponential_matcher(v, 0.0)
    report = cp.privacy_stability_check(mech, runs, cp.PrivacyParams(0.0), 0.1, range(3))
    type_changes = [float((np.diff(ids, axis=0) != 0).sum(axis=0).mean()) for ids, _ in runs]
    assert report.per_seed == pytest.approx(type_changes)


def test_exponential_matcher_is_stable_enough():
    runs = _runs(3, 2, 0.1, 200, range(10))
    mech = lambda v: cp.exponential_matcher(v, 0.2)
    report = cp.privacy_stability_check(mech, runs, cp.PrivacyParams(0.2), 0.1, range(10))
    assert report.bound == pytest.approx(0.1 * 200 * (1 + 3 * 0.4))
    assert report.holds


def test_large_epsilon_rejected():
    with pytest.raises(ArgumentError):
        cp.privacy_stability_check(lambda v: None, [], cp.PrivacyParams(0.8), 0.1, [])


def test_distribution_json_round_trip(tmp_path):
    d = cp.exponential_matcher(np.array([[0.9, 0.2]]), 1.0)
    path = tmp_path / "d.json"
    path.write_text(json.dumps(d.to_dict()))
    back = cp.load_distribution(path)
    assert back.omega == d.omega and np.allclose(back.p, d.p)
