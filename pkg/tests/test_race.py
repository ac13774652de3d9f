import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mining_auction.model import AllocationSpec, CostProfile, difficulty
from mining_auction.qre import BeliefDensity, BidGrid
from mining_auction.race import (
    EXACT_AT_K,
    FIRST_SUCCESS,
    MissingSeedError,
    exact_win_prob,
    expected_win_prob,
    first_success_win_prob,
    rationality_check,
    run_race,
    simulate_races,
    utility,
    win_prob_matrix,
)

from oracles import closed_form_q, enumerate_exact_at_k, enumerate_first_success

probs = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=3)


def test_exact_two_miner_example():
    # p = (0.3, 0.2), K = 2: 0.3 * 0.7 * 0.8**2 and 0.2 * 0.8 * 0.7**2
    q = exact_win_prob([0.3, 0.2], 2).q
    np.testing.assert_allclose(q, [0.1344, 0.0784], rtol=0, atol=1e-15)


def test_exact_single_attempt():
    q = exact_win_prob([0.5, 0.5], 1).q
    np.testing.assert_allclose(q, [0.25, 0.25], atol=1e-16)


def test_exact_edge_probabilities():
    q = exact_win_prob([1.0, 0.0, 0.4], 1).q
    np.testing.assert_array_equal(q, [0.6, 0.0, 0.0])
    q = exact_win_prob([1.0, 0.0], 2).q
    np.testing.assert_array_equal(q, [0.0, 0.0])


def test_exact_rejects_bad_input():
    with pytest.raises(ValueError):
        exact_win_prob([0.5, 1.2], 2)
    with pytest.raises(ValueError):
        exact_win_prob([0.5, 0.5], 0)


@settings(max_examples=150)
@given(probs, st.integers(1, 3))
def test_exact_matches_enumeration(p, k):
    np.testing.assert_allclose(exact_win_prob(p, k).q, enumerate_exact_at_k(p, k), rtol=0, atol=1e-12)


@settings(max_examples=150)
@given(probs, st.integers(1, 3))
def test_first_success_matches_enumeration(p, k):
    np.testing.assert_allclose(first_success_win_prob(p, k).q, enumerate_first_success(p, k),
                               rtol=0, atol=1e-12)


@given(probs, st.integers(1, 6))
def test_win_probabilities_are_subprobability(p, k):
    for fn in (exact_win_prob, first_success_win_prob):
        q = fn(p, k).q
        assert np.all(q >= 0)
        assert q.sum() <= 1 + 1e-12


def test_first_success_dominates_exact():
    p = [0.3, 0.2, 0.1]
    assert np.all(first_success_win_prob(p, 3).q >= exact_win_prob(p, 3).q)


def test_first_success_certain_tie_split():
    np.testing.assert_allclose(first_success_win_prob([1.0, 1.0], 4).q, [0.5, 0.5])


def test_difficulty_vector_accepted():
    dv = difficulty(AllocationSpec.constant(0.5), CostProfile([3, 2]))
    np.testing.assert_allclose(exact_win_prob(dv, 2).q, [0.1344, 0.0784], atol=1e-15)


def test_run_race_certain_outcomes():
    rng = np.random.default_rng(0)
    out = run_race([1.0, 0.0], 1, rng)
    assert out.winner == 0 and out.attempt_of_success == 1
    out = run_race([1.0, 0.0], 2, rng)
    assert out.winner is None
    out = run_race([1.0, 0.0], 3, rng, FIRST_SUCCESS)
    assert out.winner == 0 and out.attempt_of_success == 1
    assert run_race([0.0, 0.0], 3, rng, FIRST_SUCCESS).winner is None


def test_run_race_frequencies_agree_with_closed_form():
    rng = np.random.default_rng(7)
    p, k, n = [0.3, 0.2], 2, 20000
    wins = np.zeros(2)
    for _ in range(n):
        w = run_race(p, k, rng).winner
        if w is not None:
            wins[w] += 1
    q = exact_win_prob(p, k).q
    se = np.sqrt(q * (1 - q) / n)
    assert np.all(np.abs(wins / n - q) <= 4 * se)


@pytest.mark.parametrize("semantics", [EXACT_AT_K, FIRST_SUCCESS])
def test_simulation_within_three_stderr(semantics):
    p, k = [0.15, 0.1, 0.05], 3
    q = (exact_win_prob if semantics == EXACT_AT_K else first_success_win_prob)(p, k).q
    res = simulate_races(p, k, 200_000, seed=11, semantics=semantics)
    se = np.sqrt(q * (1 - q) / res.trials)
    assert np.all(np.abs(res.q_hat - q) <= 3 * se)


def test_simulation_independent_of_workers():
    a = simulate_races([0.3, 0.2], 2, 100_001, seed=3, workers=1, chunk_size=4096)
    b = simulate_races([0.3, 0.2], 2, 100_001, seed=3, workers=4, chunk_size=4096)
    np.testing.assert_array_equal(a.wins, b.wins)


def test_simulation_requires_seed():
    with pytest.raises(MissingSeedError):
        simulate_races([0.3, 0.2], 2, 100, seed=None)


def test_simulation_zero_probability_miner_never_wins():
    res = simulate_races([0.0, 0.5], 2, 5000, seed=1)
    assert res.wins[0] == 0


def test_win_prob_matrix_matches_closed_form():
    alloc = AllocationSpec.constant(0.5)
    m = win_prob_matrix(alloc, [0.5, 1.0], [[0.25], [0.5]], 2)
    for a, own in enumerate([0.5, 1.0]):
        for b, opp in enumerate([0.25, 0.5]):
            assert m[a, b] == pytest.approx(closed_form_q([own, opp], 0.5, 2, 0), rel=1e-14)


def test_expected_win_prob_two_point_belief():
    grid = BidGrid.uniform(1.0, 17)
    w = np.zeros(17)
    w[4] = w[8] = 0.5  # opponent bids 0.25 or 0.5
    belief = BeliefDensity(grid, w)
    alloc = AllocationSpec.constant(0.5)
    Q = expected_win_prob(alloc, 0.5, [belief], 2)
    expected = 0.5 * closed_form_q([0.5, 0.25], 0.5, 2, 0) + 0.5 * closed_form_q([0.5, 0.5], 0.5, 2, 0)
    assert Q == pytest.approx(expected, rel=1e-14)
    # hand arithmetic: p = (1/3, 1/6) and p = (1/4, 1/4)
    assert expected == pytest.approx(0.5 * 50 / 324 + 0.5 * 0.10546875, rel=1e-14)


def test_expected_win_prob_point_mass_equals_exact():
    grid = BidGrid.uniform(2.0, 17)
    alloc = AllocationSpec.saturating_linear(0.3)
    beliefs = [BeliefDensity.point_mass(grid, 0.5), BeliefDensity.point_mass(grid, 1.25)]
    Q = expected_win_prob(alloc, 0.75, beliefs, 3)
    dv = difficulty(alloc, CostProfile([0.75, 0.5, 1.25]))
    assert Q == pytest.approx(exact_win_prob(dv, 3).q[0], rel=1e-13)


def test_expected_win_prob_zero_own_cost():
    grid = BidGrid.uniform(1.0, 17)
    Q = expected_win_prob(AllocationSpec.constant(0.5), 0.0, [BeliefDensity.uniform(grid)], 2)
    assert Q == 0.0


def test_expected_win_prob_monte_carlo_needs_seed():
    grid = BidGrid.uniform(1.0, 17)
    beliefs = [BeliefDensity.uniform(grid)] * 3
    with pytest.raises(MissingSeedError):
        expected_win_prob(AllocationSpec.constant(0.5), 0.5, beliefs, 2)


def test_expected_win_prob_monte_carlo_close_to_exact():
    grid = BidGrid.uniform(1.0, 17)
    beliefs = [BeliefDensity.uniform(grid)] * 2
    alloc = AllocationSpec.constant(0.5)
    exact = expected_win_prob(alloc, 0.5, beliefs, 2)
    mc, se = expected_win_prob(alloc, 0.5, beliefs, 2, mc_samples=20000, seed=5, return_stderr=True)
    assert se > 0
    assert abs(mc - exact) <= 4 * se


def test_utility_and_rationality():
    U = utility(1.0, 2, 0.4, 0.144)
    assert U == pytest.approx(-0.656)
    assert utility(50.0, 1, 0.5, 0.5) == pytest.approx(24.5)
    flags = rationality_check([-0.656, 24.5, 0.0])
    assert flags.tolist() == [True, False, False]
