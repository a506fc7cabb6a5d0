from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipmix.graphs import (COMPLETE, DUMBBELL, HALF_SYMMETRIZED, KINDS, SYMMETRIZED, WeightedGraph,
                          build_complete, build_dumbbell, build_half_symmetrized, build_symmetrized,
                          make_graph, sample_edge, sample_edges)
from oracles.brute import edge_list, total_mass

nm = st.integers(1, 12).flatmap(lambda m: st.tuples(st.integers(m, 14), st.just(m)))
kinds = st.sampled_from([DUMBBELL, SYMMETRIZED, HALF_SYMMETRIZED])


@given(nm, kinds)
def test_edges_match_reference(p, kind):
    n, m = p
    g = make_graph(kind, n, m)
    ref = {(u, v): w for u, v, w in edge_list(kind, n, m)}
    got = {(u, v): w for u, v, w in g.edges()}
    assert got == ref
    assert g.edge_count == len(ref)
    assert g.edge_mass_total == total_mass(edge_list(kind, n, m))


@given(nm, kinds)
def test_degrees_sum_to_twice_mass(p, kind):
    g = make_graph(kind, *p)
    assert sum(g.weighted_degree(v) for v in range(1, g.N + 1)) == 2 * g.edge_mass_total


@given(nm, kinds)
def test_weight_symmetric_and_degree_consistent(p, kind):
    g = make_graph(kind, *p)
    for v in range(1, g.N + 1):
        assert g.weighted_degree(v) == sum(g.weight(v, u) for u in range(1, g.N + 1))
        for u in range(1, g.N + 1):
            assert g.weight(u, v) == g.weight(v, u)


def test_symmetrized_small_example():
    g = build_symmetrized(3, 2)
    assert g.edge_mass_total == 5
    assert g.edge_count == 3 + 1 + 6
    # one thin bridge is applied with probability w / (2E) = 1/60
    assert g.bridge_weight / (2 * g.edge_mass_total) == Fraction(1, 60)


def test_builders_and_complete():
    assert build_dumbbell(4, 2).n_bridges == 1
    assert build_half_symmetrized(4, 2).bridge_weight == Fraction(1, 4)
    k = build_complete(6)
    assert k.edge_mass_total == comb(6, 2) and k.N == 6
    with pytest.raises(ValueError):
        build_dumbbell(2, 3)
    with pytest.raises(ValueError):
        make_graph("ring", 3, 2)
    with pytest.raises(ValueError):
        build_complete(1)


def test_boundary_of_small_clique():
    g = build_dumbbell(10, 3)
    assert g.boundary([11, 12, 13]) == 1
    assert build_symmetrized(10, 3).boundary([11, 12, 13]) == 1
    assert g.boundary(range(1, 14)) == 0


@pytest.mark.parametrize("kind", [DUMBBELL, SYMMETRIZED])
def test_bridge_frequency(kind):
    g = make_graph(kind, 3, 2)
    rng = np.random.default_rng(11)
    R = 10 ** 6
    idx = sample_edges(g, rng, R)
    is_bridge = g.edge_arrays[3]
    frac = is_bridge[idx].mean()
    p = 1 / 5
    assert abs(frac - p) < 4 * np.sqrt(p * (1 - p) / R)


def test_sample_edge_returns_an_edge():
    g = build_half_symmetrized(5, 3)
    rng = np.random.default_rng(1)
    for _ in range(200):
        u, v = sample_edge(g, rng)
        assert g.weight(u, v) > 0


@given(nm, st.sampled_from(KINDS))
def test_json_roundtrip(p, kind):
    n, m = p
    if kind == COMPLETE:
        n, m = n + 1, 0
    g = make_graph(kind, n, m)
    assert WeightedGraph.from_json(g.to_json()) == g


def test_adjacency_rows_match_weights():
    g = build_half_symmetrized(6, 3)
    indptr, nbr, cumw, deg = g.adjacency
    for v in range(1, g.N + 1):
        lo, hi = indptr[v], indptr[v + 1]
        assert np.isclose(cumw[hi - 1], float(g.weighted_degree(v)))
        assert np.isclose(deg[v], float(g.weighted_degree(v)))
        for u in nbr[lo:hi]:
            assert g.weight(v, int(u)) > 0
