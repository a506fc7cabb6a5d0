"""Parametric graph families carrying the transposition-selection weights.

Vertices are labelled ``1..N`` with ``K1 = {1..n}`` and ``K2 = {n+1..n+m}``;
the dumbbell bridge is ``(n, n+1)``.  An edge of weight ``w`` is attempted
with probability ``w / edge_mass_total`` and applied with probability
``w / (2 * edge_mass_total)``.  The total mass is always the edge count of the
plain dumbbell, so the symmetrized variants only redistribute the bridge.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Iterator

import numpy as np

DUMBBELL = "dumbbell"
SYMMETRIZED = "symmetrized"
HALF_SYMMETRIZED = "half_symmetrized"
COMPLETE = "complete"
KINDS = (DUMBBELL, SYMMETRIZED, HALF_SYMMETRIZED, COMPLETE)

ONE = Fraction(1)
ZERO = Fraction(0)


def binom2(k: int) -> int:
    return k * (k - 1) // 2


@dataclass(frozen=True)
class WeightedGraph:
    kind: str
    n: int
    m: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if self.kind == COMPLETE:
            if self.m != 0:
                raise ValueError("complete graph carries m = 0")
            if self.n < 2:
                raise ValueError(f"complete graph needs n >= 2, got {self.n}")
        elif not 1 <= self.m <= self.n:
            raise ValueError(f"need 1 <= m <= n, got n={self.n}, m={self.m}")

    # -- sizes -------------------------------------------------------------
    @property
    def N(self) -> int:
        return self.n + self.m

    @property
    def edge_mass_total(self) -> int:
        if self.kind == COMPLETE:
            return binom2(self.n)
        return binom2(self.n) + binom2(self.m) + 1

    @property
    def bridge_weight(self) -> Fraction:
        if self.kind == DUMBBELL:
            return ONE
        if self.kind == SYMMETRIZED:
            return Fraction(1, self.n * self.m)
        if self.kind == HALF_SYMMETRIZED:
            return Fraction(1, self.n)
        return ZERO

    @property
    def n_bridges(self) -> int:
        return {DUMBBELL: 1, SYMMETRIZED: self.n * self.m,
                HALF_SYMMETRIZED: self.n, COMPLETE: 0}[self.kind]

    @property
    def edge_count(self) -> int:
        return binom2(self.n) + binom2(self.m) + self.n_bridges

    def clique(self, v: int) -> int:
        self._check_vertex(v)
        return 1 if v <= self.n else 2

    def _check_vertex(self, v: int) -> None:
        if not 1 <= v <= self.N:
            raise ValueError(f"vertex {v} outside 1..{self.N}")

    # -- weights -----------------------------------------------------------
    def is_bridge(self, u: int, v: int) -> bool:
        u, v = min(u, v), max(u, v)
        if self.kind == COMPLETE or not (u <= self.n < v):
            return False
        if self.kind == DUMBBELL:
            return u == self.n and v == self.n + 1
        if self.kind == HALF_SYMMETRIZED:
            return v == self.n + 1
        return True

    def weight(self, u: int, v: int) -> Fraction:
        """Exact weight of the unordered pair ``{u, v}`` (zero if absent)."""
        self._check_vertex(u)
        self._check_vertex(v)
        if u == v:
            return ZERO
        if (u <= self.n) == (v <= self.n):
            return ONE
        return self.bridge_weight if self.is_bridge(u, v) else ZERO

    def weighted_degree(self, v: int) -> Fraction:
        self._check_vertex(v)
        n, m = self.n, self.m
        if v <= n:
            deg = Fraction(n - 1)
            if self.kind == DUMBBELL and v == n:
                deg += 1
            elif self.kind == SYMMETRIZED:
                deg += Fraction(1, n)
            elif self.kind == HALF_SYMMETRIZED:
                deg += Fraction(1, n)
            return deg
        deg = Fraction(m - 1)
        if self.kind == DUMBBELL and v == n + 1:
            deg += 1
        elif self.kind == SYMMETRIZED:
            deg += Fraction(1, m)
        elif self.kind == HALF_SYMMETRIZED and v == n + 1:
            deg += 1
        return deg

    def boundary(self, W) -> Fraction:
        """Weighted size of the edge boundary of the vertex set ``W``."""
        W = sorted(set(W))
        inner = sum((self.weight(u, v) for u, v in combinations(W, 2)), ZERO)
        return sum((self.weighted_degree(v) for v in W), ZERO) - 2 * inner

    def edges(self) -> Iterator[tuple[int, int, Fraction]]:
        """Edges as ``(u, v, weight)`` with ``u < v``: K1, then K2, then bridges."""
        n, m = self.n, self.m
        for u, v in combinations(range(1, n + 1), 2):
            yield u, v, ONE
        for u, v in combinations(range(n + 1, n + m + 1), 2):
            yield u, v, ONE
        w = self.bridge_weight
        if self.kind == DUMBBELL:
            yield n, n + 1, w
        elif self.kind == SYMMETRIZED:
            for u in range(1, n + 1):
                for v in range(n + 1, n + m + 1):
                    yield u, v, w
        elif self.kind == HALF_SYMMETRIZED:
            for u in range(1, n + 1):
                yield u, n + 1, w

    def vertex_classes(self) -> list[list[int]]:
        """Vertex orbits under the family's automorphisms (used by bottleneck search)."""
        n, m = self.n, self.m
        K1 = list(range(1, n + 1))
        K2 = list(range(n + 1, n + m + 1))
        if self.kind == COMPLETE or self.kind == SYMMETRIZED:
            return [c for c in (K1, K2) if c]
        if self.kind == HALF_SYMMETRIZED:
            return [c for c in (K1, [n + 1], K2[1:]) if c]
        return [c for c in (K1[:-1], [n], [n + 1], K2[1:]) if c]

    # -- array views used by the samplers and kernels -----------------------
    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(u, v, weight, is_bridge)`` arrays, in :meth:`edges` order."""
        count = self.edge_count
        eu = np.empty(count, dtype=np.int64)
        ev = np.empty(count, dtype=np.int64)
        w = np.empty(count, dtype=np.float64)
        for i, (u, v, wt) in enumerate(self.edges()):
            eu[i], ev[i], w[i] = u, v, float(wt)
        bridge = (eu <= self.n) & (ev > self.n)
        for a in (eu, ev, w, bridge):
            a.setflags(write=False)
        return eu, ev, w, bridge

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Normalised cumulative edge masses for inverse-CDF sampling."""
        w = self.edge_arrays[2]
        cum = np.cumsum(w) / self.edge_mass_total
        cum[-1] = 1.0
        cum.setflags(write=False)
        return cum

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """CSR adjacency ``(indptr, neighbours, cumulative weights, degree)``.

        Row ``v`` (1-based) spans ``indptr[v]:indptr[v+1]``; the cumulative
        weights restart in every row.
        """
        eu, ev, w, _ = self.edge_arrays
        N = self.N
        src = np.concatenate([eu, ev])
        dst = np.concatenate([ev, eu])
        ww = np.concatenate([w, w])
        order = np.lexsort((dst, src))
        src, dst, ww = src[order], dst[order], ww[order]
        counts = np.bincount(src, minlength=N + 1)
        indptr = np.zeros(N + 2, dtype=np.int64)
        indptr[1:] = np.cumsum(counts)
        cumw = np.empty_like(ww)
        deg = np.zeros(N + 1)
        for v in range(1, N + 1):
            lo, hi = indptr[v], indptr[v + 1]
            cumw[lo:hi] = np.cumsum(ww[lo:hi])
            deg[v] = cumw[hi - 1] if hi > lo else 0.0
        return indptr, dst.astype(np.int64), cumw, deg

    # -- serialisation ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "m": self.m}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "WeightedGraph":
        return make_graph(d["kind"], int(d["n"]), int(d.get("m", 0)))

    @classmethod
    def from_json(cls, s: str) -> "WeightedGraph":
        return cls.from_dict(json.loads(s))


def _check_nm(n: int, m: int) -> None:
    if m < 1 or m > n:
        raise ValueError(f"need 1 <= m <= n, got n={n}, m={m}")


def build_dumbbell(n: int, m: int) -> WeightedGraph:
    _check_nm(n, m)
    return WeightedGraph(DUMBBELL, n, m)


def build_symmetrized(n: int, m: int) -> WeightedGraph:
    """Dumbbell with the bridge split into ``n*m`` thin bridges of weight ``1/(nm)``."""
    _check_nm(n, m)
    return WeightedGraph(SYMMETRIZED, n, m)


def build_half_symmetrized(n: int, m: int) -> WeightedGraph:
    """Dumbbell with the bridge split into ``(i, n+1)``, ``i <= n``, each of weight ``1/n``."""
    _check_nm(n, m)
    return WeightedGraph(HALF_SYMMETRIZED, n, m)


def build_complete(n: int) -> WeightedGraph:
    if n < 2:
        raise ValueError(f"complete graph needs n >= 2, got {n}")
    return WeightedGraph(COMPLETE, n, 0)


def make_graph(kind: str, n: int, m: int = 0) -> WeightedGraph:
    builders = {DUMBBELL: build_dumbbell, SYMMETRIZED: build_symmetrized,
                HALF_SYMMETRIZED: build_half_symmetrized}
    if kind == COMPLETE:
        return build_complete(n)
    if kind not in builders:
        raise ValueError(f"unknown graph kind {kind!r}")
    return builders[kind](n, m)


def sample_edge(graph: WeightedGraph, rng: np.random.Generator) -> tuple[int, int]:
    """Draw one edge with probability ``weight / edge_mass_total``."""
    i = int(np.searchsorted(graph.cumulative, rng.random(), side="right"))
    eu, ev = graph.edge_arrays[:2]
    i = min(i, len(eu) - 1)
    return int(eu[i]), int(ev[i])


def sample_edges(graph: WeightedGraph, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorised :func:`sample_edge`; returns edge indices into :attr:`edge_arrays`."""
    idx = np.searchsorted(graph.cumulative, rng.random(size), side="right")
    return np.minimum(idx, graph.edge_count - 1)
