import math
from itertools import permutations

import numpy as np
import pytest

from ipmix import analytics as an
from ipmix.mixing import (ProcessSpec, count_projection_chain, cutoff_scan, exact_profile,
                          exact_tv_at, exclusion_mixing_experiment, first_crossing, geometric_grid,
                          hitting_time_scale, lower_bound_certificate, moment_check,
                          partial_fixed_point_law, plugin_tv, statistic_tv_curve,
                          statistic_tv_lower)


def test_geometric_grid_brackets_center():
    g = geometric_grid(1000.0)
    assert g[0] <= 250 and g[-1] >= 4000 and np.all(np.diff(g) > 0)


def test_exact_profile_monotone():
    p = exact_profile(2000, 50, (0.1, 0.25, 0.4, 0.6), times=np.geomspace(1, 10 ** 9, 80).astype(int))
    assert np.all(np.diff(p.d_exact) <= 1e-12)
    tm = [p.tmix[e] for e in (0.1, 0.25, 0.4, 0.6)]
    assert tm == sorted(tm, reverse=True)
    assert p.prediction.regime == an.SMALL_M or p.prediction.regime == an.LARGE_M
    assert p.ratio_to_prediction(0.1) > 0


def test_degenerate_eps_pair():
    s = cutoff_scan([(100, 10), (300, 15)], eps_pair=(0.5, 0.5))
    assert s.ratios == [1.0, 1.0]


def test_exact_cutoff_ratio_decreases():
    s = cutoff_scan([(10 * m * m, m) for m in (5, 10, 20, 40)])
    assert all(b < a for a, b in zip(s.ratios, s.ratios[1:]))
    assert all(r > 1 for r in s.ratios)


def test_plugin_tv_noise_floor():
    rng = np.random.default_rng(0)
    support = np.arange(5)
    pmf = np.full(5, 0.2)
    x = rng.integers(0, 5, 4000)
    est, se, raw = plugin_tv(x, support, pmf, rng)
    assert 0 <= est <= raw and se > 0
    assert est <= 2 * se
    x = np.zeros(4000, dtype=int)
    est, se, raw = plugin_tv(x, support, pmf, rng)
    assert raw == pytest.approx(0.8) and est > 0.75
    e0, s0, r0 = plugin_tv(x, support, pmf, rng, boot=0)
    assert e0 == r0 and math.isnan(s0)


def test_statistic_tv_at_start_is_large():
    est = statistic_tv_lower(ProcessSpec("symmetrized", 400, 30), "L", 0, 500)
    h = an.stationary_L(400, 30)
    assert abs(est.plugin - (1 - h.pmf()[0])) < 1e-12


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kind,n,m", [("symmetrized", 400, 30), ("half_symmetrized", 40, 4)])
def test_statistic_tv_vanishes_at_stationarity(seed, kind, n, m):
    E = an.edge_mass(n, m)
    # far past the slower of the log-scale mixing and the bridge-crossing scale E m^2
    t = 20 * max(an.regime_prediction(n, m).predicted_tmix, float(E) * m * m)
    est = statistic_tv_lower(ProcessSpec(kind, n, m), "L", int(t), 4000, seed=seed)
    assert est.estimate <= 2 * est.se


def test_statistic_tv_below_exact_tv():
    # on the symmetrized graph the count chain is the exact law of L
    n, m = 400, 30
    E = an.edge_mass(n, m)
    times = [int(E * f) for f in (50, 150, 300, 600, 1200)]
    est = statistic_tv_curve(ProcessSpec("symmetrized", n, m), "L", times, 4000, seed=3)
    for e in est:
        assert e.estimate <= exact_tv_at(n, m, e.t) + 3 * e.se
        assert abs(e.plugin - exact_tv_at(n, m, e.t)) < 0.1


def test_statistic_tv_before_small_m_mixing():
    n, m = 10 ** 7, 300
    E = an.edge_mass(n, m)
    t = int(2 * E * m * math.log(m) - 10 * E * m)
    assert statistic_tv_lower(ProcessSpec("symmetrized", n, m), "L", t, 2000, seed=1).estimate >= 0.6


def test_fixed_point_statistic_stationary_law():
    N, k = 6, 3
    counts = np.zeros(k + 1)
    for p in permutations(range(N)):
        counts[sum(p[i] == i for i in range(k))] += 1
    assert np.allclose(partial_fixed_point_law(N, k), counts / counts.sum(), atol=1e-14)
    assert np.allclose(partial_fixed_point_law(7, 7), an.fixed_point_law(7), atol=1e-14)


def test_fixed_point_curve_runs():
    est = statistic_tv_curve(ProcessSpec("dumbbell", 8, 3), "fixed_points", [0, 10 ** 4], 2000, seed=2)
    assert est[0].plugin > 0.99
    assert est[1].estimate <= 2 * est[1].se + 0.02


def test_first_crossing():
    t = np.array([1, 2, 3, 4])
    assert first_crossing(t, [0.9, 0.5, 0.2, 0.1], 0.25) == 3
    assert first_crossing(t, [0.9, 0.5, 0.4, 0.3], 0.25) is None


def test_exclusion_experiment():
    r = exclusion_mixing_experiment(200, 20, eps=0.25, replicas=4000, seed=1, purple_factor=1.1)
    assert abs(r.count_ratio - 1) <= 0.15
    assert abs(r.purple_z) < 3
    d = exclusion_mixing_experiment(30, 30, replicas=100)
    assert d.count_tmix == 0 and d.count_ratio is None and d.note
    with pytest.raises(ValueError):
        exclusion_mixing_experiment(10, 1)


def test_count_projection_rates():
    n, k = 12, 4
    ch = count_projection_chain(n, k)
    # one K-origin particle leaves K: a site pair with one end in each side, carrying it out
    j = k
    i = ch.index(j)
    out = ch.P[i, ch.index(j - 1)]
    assert out == pytest.approx(0.5 * j * (n - k) / math.comb(n, 2) * (n - k - (k - j)) / (n - k))


def test_certificate_below_exact_tv():
    rng = np.random.default_rng(1)
    n, m = 10 ** 4, 200
    E = an.edge_mass(n, m)
    for lam in (1.0, 5.0, 20.0, 50.0):
        t0 = an.t_n_lambda(n, m, E, lam)
        for f in (0.8, 1.0, 1.2):
            c = lower_bound_certificate(n, m, int(t0 * f), lam)
            assert c.value <= exact_tv_at(n, m, int(t0 * f)) + 1e-12
    assert lower_bound_certificate(n, m, an.t_n_lambda(n, m, E, 1e-6), 1e-6).value == 0.0


def test_moment_check_small():
    rows = moment_check(6, 3, [10, 100, 1000], 20000, seed=5)
    assert len(rows) == 12
    assert all(abs(r.z) < 4 for r in rows)
    with pytest.raises(ValueError):
        moment_check(6, 3, [1], 1)


def test_hitting_scale_matches_exact(oracles):
    ns = [r["n"] for r in oracles["hitting"]]
    for (n, v), r in zip(hitting_time_scale(ns), oracles["hitting"]):
        assert abs(v * n * n - r["value"]) < 1e-6 * r["value"]
