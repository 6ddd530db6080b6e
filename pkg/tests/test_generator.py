"""Q-matrix validation, stationary laws and exact chain simulation."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, null_space

from rsem.exceptions import HorizonExceeded, NegativeRate, NonConservative, Reducible
from rsem.generator import (
    ChainPath,
    chain_at_grid,
    coupling_tail,
    is_reversible,
    meeting_time,
    simulate_chain,
    stationary_distribution,
    validate_generator,
)

Q25 = [[-4.0, 4.0], [1.0, -1.0]]


def q35(nu):
    return [[-(3.0 + nu), nu, 3.0], [1.0, -3.0, 2.0], [1.0, 2.0, -3.0]]


def random_generator(rng, n, density=0.7):
    """Random irreducible Q-matrix: a directed cycle plus random extra edges."""
    off = rng.uniform(0.1, 3.0, (n, n)) * (rng.random((n, n)) < density)
    for i in range(n):
        off[i, (i + 1) % n] = rng.uniform(0.1, 3.0)
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return off


class TestValidation:
    def test_example_2_5_generator(self):
        Q = validate_generator(Q25)
        assert Q.q0 == 4.0
        assert Q.n == 2

    def test_absorbing_state_is_reducible(self):
        with pytest.raises(Reducible):
            validate_generator([[-1.0, 1.0], [0.0, 0.0]])

    def test_row_sum_nonzero(self):
        with pytest.raises(NonConservative):
            validate_generator([[-1.0, 2.0], [1.0, -1.0]])

    def test_negative_off_diagonal(self):
        with pytest.raises(NegativeRate):
            validate_generator([[1.0, -1.0], [1.0, -1.0]])

    def test_not_square(self):
        with pytest.raises(ValueError):
            validate_generator([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0]])

    def test_rates_are_read_only(self):
        Q = validate_generator(Q25)
        with pytest.raises(ValueError):
            Q.rates[0, 0] = 1.0

    def test_input_is_not_repaired(self):
        # a row off by 1e-9 is rejected rather than rebalanced
        with pytest.raises(NonConservative):
            validate_generator([[-4.0, 4.0 + 1e-9], [1.0, -1.0]])


class TestStationary:
    def test_example_2_5(self):
        for gamma in (0.5, 1.0, 3.0):
            mu = stationary_distribution(validate_generator([[-4.0, 4.0], [gamma, -gamma]]))
            np.testing.assert_allclose(mu, [gamma / (4 + gamma), 4 / (4 + gamma)], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("nu", [0, 1, 5, 2.5])
    def test_example_3_5_closed_form(self, nu):
        nu_f = Fraction(nu)
        den = 20 + 5 * nu_f
        expected = [float(5 / den), float((6 + 3 * nu_f) / den), float((9 + 2 * nu_f) / den)]
        mu = stationary_distribution(validate_generator(q35(float(nu))))
        np.testing.assert_allclose(mu, expected, rtol=0, atol=1e-15)

    def test_example_3_5_nu0_exact_values(self):
        mu = stationary_distribution(validate_generator(q35(0.0)))
        np.testing.assert_allclose(mu, [0.25, 0.30, 0.45], rtol=0, atol=1e-15)

    def test_symmetric_chain(self):
        mu = stationary_distribution(validate_generator([[-1.0, 1.0], [1.0, -1.0]]))
        np.testing.assert_allclose(mu, [0.5, 0.5], atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 7), st.integers(0, 2**32 - 1))
    def test_matches_null_space_oracle(self, n, seed):
        raw = random_generator(np.random.default_rng(seed), n)
        mu = stationary_distribution(validate_generator(raw))
        v = null_space(raw.T)[:, 0]
        np.testing.assert_allclose(mu, v / v.sum(), atol=1e-10)


class TestReversibility:
    def test_birth_death_chain(self):
        a, b = 3.0, 1.0
        Q = validate_generator([[-b, b, 0.0], [2 * a, -2 * (a + b), 2 * b], [0.0, 3 * a, -3 * a]])
        mu = stationary_distribution(Q)
        assert is_reversible(Q, mu)
        # entrywise detailed balance, checked directly
        assert mu[0] * b == pytest.approx(mu[1] * 2 * a, abs=1e-14)
        assert mu[1] * 2 * b == pytest.approx(mu[2] * 3 * a, abs=1e-14)

    def test_example_3_5_nu1_is_not_reversible(self):
        Q = validate_generator(q35(1.0))
        mu = stationary_distribution(Q)
        assert abs(mu[0] * 3.0 - mu[2] * 1.0) > 1e-3
        assert not is_reversible(Q, mu)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 50), st.floats(0.01, 50))
    def test_two_state_always_reversible(self, a, b):
        Q = validate_generator([[-a, a], [b, -b]])
        assert is_reversible(Q, stationary_distribution(Q))


class TestSimulateChain:
    def test_reproducible(self):
        Q = validate_generator(Q25)
        p1 = simulate_chain(Q, 1, 10.0, seed=123)
        p2 = simulate_chain(Q, 1, 10.0, seed=123)
        np.testing.assert_array_equal(p1.jump_times, p2.jump_times)
        np.testing.assert_array_equal(p1.states, p2.states)

    def test_distinct_paths_differ(self):
        Q = validate_generator(Q25)
        p1 = simulate_chain(Q, 1, 10.0, seed=123, path_id=0)
        p2 = simulate_chain(Q, 1, 10.0, seed=123, path_id=1)
        assert not np.array_equal(p1.jump_times[:3], p2.jump_times[:3])

    def test_occupation_fraction(self):
        Q = validate_generator(Q25)
        path = simulate_chain(Q, 0, 1e4, seed=7)
        edges = np.concatenate(([0.0], path.jump_times, [path.horizon]))
        visited = np.concatenate(([path.initial_state], path.states))
        frac = np.diff(edges)[visited == 1].sum() / path.horizon
        assert frac == pytest.approx(0.8, abs=0.02)

    def test_holding_times_and_jump_law(self):
        Q = validate_generator(q35(1.0))
        path = simulate_chain(Q, 0, 2e4, seed=11)
        edges = np.concatenate(([0.0], path.jump_times))
        visited = np.concatenate(([0], path.states))[:-1]
        hold = np.diff(edges)
        # state 0 leaves at rate 4 and goes to 1 w.p. 1/4, to 2 w.p. 3/4
        h0 = hold[visited == 0]
        assert h0.mean() == pytest.approx(0.25, rel=4 / np.sqrt(len(h0)))
        nxt = path.states[visited == 0]
        assert np.mean(nxt == 1) == pytest.approx(0.25, abs=4 * np.sqrt(0.1875 / len(nxt)))
        assert not np.any(path.states[:-1] == path.states[1:])

    def test_one_step_law_matches_matrix_exponential(self):
        Q = validate_generator(Q25)
        delta, n = 0.1, 20_000
        moved = sum(chain_at_grid(simulate_chain(Q, 0, delta, seed=5, path_id=k), delta, 1)[1] != 0 for k in range(n))
        exact = expm(np.array(Q25) * delta)[0, 1]
        frac = moved / n
        assert frac == pytest.approx(exact, abs=4 * np.sqrt(exact * (1 - exact) / n))
        assert frac <= Q.q0 * delta

    def test_bad_arguments(self):
        Q = validate_generator(Q25)
        with pytest.raises(ValueError):
            simulate_chain(Q, 2, 1.0, seed=0)
        with pytest.raises(ValueError):
            simulate_chain(Q, 0, 0.0, seed=0)


class TestChainAtGrid:
    def test_no_jumps(self):
        path = ChainPath(1, np.array([]), np.array([], dtype=int), 5.0)
        np.testing.assert_array_equal(chain_at_grid(path, 0.5, 10), np.ones(11, dtype=int))

    def test_jump_between_gridpoints(self):
        path = ChainPath(0, np.array([0.15]), np.array([1]), 1.0)
        np.testing.assert_array_equal(chain_at_grid(path, 0.1, 4), [0, 0, 1, 1, 1])

    def test_right_continuous_at_jump(self):
        path = ChainPath(0, np.array([0.25]), np.array([1]), 1.0)
        np.testing.assert_array_equal(chain_at_grid(path, 0.25, 2), [0, 1, 1])

    def test_horizon(self):
        path = ChainPath(0, np.array([]), np.array([], dtype=int), 1.0)
        assert len(chain_at_grid(path, 0.1, 10)) == 11  # 10 * 0.1 rounds above 1.0
        with pytest.raises(HorizonExceeded):
            chain_at_grid(path, 0.1, 11)


class TestCoupling:
    def test_meeting_time(self):
        a = ChainPath(0, np.array([1.0, 2.0]), np.array([1, 0]), 5.0)
        b = ChainPath(1, np.array([1.5]), np.array([0]), 5.0)
        # a is in 1 on [1, 2) while b sits in 1 until 1.5
        assert meeting_time(a, b) == 1.0

    def test_meeting_never(self):
        a = ChainPath(0, np.array([]), np.array([], dtype=int), 5.0)
        b = ChainPath(1, np.array([]), np.array([], dtype=int), 5.0)
        assert meeting_time(a, b) == np.inf

    def test_example_2_5_tail_decays(self):
        Q = validate_generator(Q25)
        curve = coupling_tail(Q, 0, 1, 3.0, 2000, seed=1)
        assert curve.survival[0] == 1.0
        assert np.all(np.diff(curve.survival) <= 0)
        assert curve.log_slope() < 0

    def test_preconditions(self):
        Q = validate_generator(Q25)
        with pytest.raises(ValueError):
            coupling_tail(Q, 0, 0, 1.0, 10, seed=0)
        with pytest.raises(ValueError):
            coupling_tail(Q, 0, 1, 1.0, 0, seed=0)
