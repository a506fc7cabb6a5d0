import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipmix import analytics as an
from ipmix.couplings import (CoupledState, QUEUE_CAP, check_thinning, coalescence_tail,
                             d_jump_probabilities, drift, empirical_drift, fit_tail_exponent,
                             initial_state, step_coupled_bl, step_triple)
from ipmix.lumped import InvariantViolation


def test_drift_zero_on_diagonal():
    E = an.edge_mass(20, 5)
    assert drift(20, 5, E, 17, 17) == 0.0
    up, down = d_jump_probabilities(20, 5, E, 18, 16)
    assert abs((up - down) - drift(20, 5, E, 18, 16)) < 1e-15


def test_empirical_drift_matches():
    n, m = 200, 50
    E = an.edge_mass(n, m)
    rng = np.random.default_rng(0)
    states = []
    while len(states) < 20:
        x, y = sorted(rng.integers(n - m, n + 1, 2))[::-1]
        if x > y:
            states.append((int(x), int(y)))
    mean, se = empirical_drift(n, m, E, states, 10 ** 6, seed=1)
    want = np.array([drift(n, m, E, x, y) for x, y in states])
    assert np.all(np.abs(mean - want) <= 4 * se)


@settings(max_examples=25)
@given(st.integers(1, 8), st.integers(0, 10), st.integers(0, 2 ** 32))
def test_triple_keeps_order(m, extra, seed):
    n = 3 * m + extra
    E = an.edge_mass(n, m)
    rng = np.random.default_rng(seed)
    st_ = initial_state(n, n - m)
    prev = (st_.d, st_.s, st_.l)
    for _ in range(3000):
        step_triple(st_, n, m, E, rng)
        assert st_.valid()
        cur = (st_.d, st_.s, st_.l)
        assert all(abs(a - b) <= 1 for a, b in zip(cur, prev))
        prev = cur


def test_marginal_is_count_chain():
    # each of X and Y alone is the count chain: compare a step's law with the rates
    n, m = 12, 4
    E = an.edge_mass(n, m)
    z = 2 * E * n * m
    rng = np.random.default_rng(5)
    T = 200000
    moves = {1: 0, -1: 0}
    x0 = 10
    for _ in range(T):
        s = CoupledState(x0, 9, 1, 1)
        step_coupled_bl(s, n, m, E, rng)
        if s.x != x0:
            moves[s.x - x0] += 1
    for mv, w in ((1, (n - x0) ** 2), (-1, x0 * (m - n + x0))):
        p = w / z
        assert abs(moves[mv] - T * p) < 4 * math.sqrt(T * p * (1 - p))


def test_symmetrized_walk_is_symmetric():
    n, m = 60, 10
    E = an.edge_mass(n, m)
    rng = np.random.default_rng(7)
    ups = downs = 0
    for _ in range(200):
        st_ = initial_state(n, n - m)
        for _ in range(2000):
            step_triple(st_, n, m, E, rng)
            if st_.s_stopped:
                break
            ups += st_.last_s_move == 1
            downs += st_.last_s_move == -1
    tot = ups + downs
    assert abs(ups - tot / 2) < 4 * math.sqrt(tot / 4)


def test_copycat_move_rate():
    n, m = 60, 10
    E = an.edge_mass(n, m)
    rng = np.random.default_rng(9)
    st_ = initial_state(n, n - m, s0=10 ** 6)
    T = 200000
    for _ in range(T):
        step_triple(st_, n, m, E, rng)
    p = m / (E * n)
    assert abs(st_.l_moves - T * p) < 4 * math.sqrt(T * p * (1 - p))


def test_thinning_requires_three_m():
    check_thinning(30, 10)
    with pytest.raises(InvariantViolation):
        check_thinning(29, 10)
    with pytest.raises(ValueError):
        check_thinning(3, 5)
    with pytest.raises(InvariantViolation):
        coalescence_tail(20, 10, an.edge_mass(20, 10), 20, 10, 100, 10)


def test_initial_state_checks():
    assert initial_state(5, 5).s_stopped
    with pytest.raises(ValueError):
        initial_state(3, 4)
    with pytest.raises(ValueError):
        initial_state(5, 3, s0=1)


@pytest.fixture(scope="module")
def tail_200_50():
    n, m = 200, 50
    E = an.edge_mass(n, m)
    M = E * n / m
    return coalescence_tail(n, m, E, n, n - m, int(1000 * M), 10 ** 4, seed=3), M


def test_coalescence_contracts(tail_200_50):
    c, _ = tail_200_50
    assert c.bound_violations == 0
    assert c.ordering_violations == 0 and c.replay_violations == 0 and c.thinning_violations == 0
    assert c.order_violations_of_hitting_times() == 0
    assert np.all(np.diff(c.p_tauD_gt) <= 0) and np.all(np.diff(c.p_tauL_gt) <= 0)
    assert np.all(c.p_tauD_gt <= c.p_tauL_gt)


def test_copycat_tail_exponent():
    n, m = 200, 50
    E = an.edge_mass(n, m)
    M = E * n / m
    c = coalescence_tail(n, m, E, n, n - 1, int(1000 * M), 10 ** 4, seed=4)
    slope, _ = fit_tail_exponent(c.tauL, M)
    assert -0.65 <= slope <= -0.35


def test_coalesced_start():
    n, m = 30, 5
    c = coalescence_tail(n, m, an.edge_mass(n, m), 28, 28, 1000, 50)
    assert np.all(c.tauD == 0) and np.all(c.mean_D == 0)


def test_reproducible():
    n, m = 30, 5
    E = an.edge_mass(n, m)
    a = coalescence_tail(n, m, E, 30, 25, 10 ** 5, 200, seed=1)
    b = coalescence_tail(n, m, E, 30, 25, 10 ** 5, 200, seed=1)
    assert np.array_equal(a.tauL, b.tauL) and np.array_equal(a.mean_D, b.mean_D)
    assert QUEUE_CAP == 10 ** 8
