"""The 1/2-lazy interchange process and labelled exclusion on the complete graph.

Python-level single steps are provided for clarity and testing; the
replica batches run in numba kernels with one splitmix stream per replica.

Conventions: particle ``p`` starts at vertex ``p``.  ``occ[v]`` is the
particle at vertex ``v`` (``0`` for an empty exclusion site) and ``pos[p]``
is the vertex of particle ``p``; index 0 of both arrays is unused.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from math import comb

import numpy as np
from numba import njit, prange

from .graphs import WeightedGraph
from .rng import geometric_skip, randbelow, replica_seeds, uniform

OBSERVABLES = ("L", "bridge", "fixed_points", "purple")
CSV_SCHEMA = "ipmix-trajectory/1"


@dataclass
class Configuration:
    occ: np.ndarray
    pos: np.ndarray
    t: int = 0
    purple: np.ndarray | None = None
    home: int = 0

    @property
    def exclusion(self) -> bool:
        return self.purple is not None

    @property
    def n_sites(self) -> int:
        return len(self.occ) - 1

    @property
    def n_particles(self) -> int:
        return len(self.pos) - 1

    def copy(self) -> "Configuration":
        return Configuration(self.occ.copy(), self.pos.copy(), self.t,
                             None if self.purple is None else self.purple.copy(),
                             self.home)

    def is_valid(self) -> bool:
        """Bijectivity (or injectivity) and agreement of the two maps."""
        p = np.arange(1, self.n_particles + 1)
        v = self.pos[1:]
        if v.min(initial=1) < 1 or v.max(initial=1) > self.n_sites:
            return False
        if not np.array_equal(self.occ[v], p):
            return False
        return int(np.count_nonzero(self.occ[1:])) == self.n_particles

    def L(self, n: int) -> int:
        """Number of particles with label ``<= n`` sitting at a vertex ``> n``."""
        return int(np.count_nonzero(self.pos[1:n + 1] > n))


def identity_configuration(N: int) -> Configuration:
    a = np.arange(N + 1, dtype=np.int64)
    return Configuration(a, a.copy())


def exclusion_configuration(n: int, k: int) -> Configuration:
    """``k`` labelled particles on sites ``1..k`` of ``n``; all start purple."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")
    occ = np.zeros(n + 1, dtype=np.int64)
    occ[1:k + 1] = np.arange(1, k + 1)
    pos = np.arange(k + 1, dtype=np.int64)
    purple = np.ones(k + 1, dtype=bool)
    purple[0] = False
    return Configuration(occ, pos, 0, purple, k)


def _swap_sites(c: Configuration, u: int, v: int) -> None:
    a, b = c.occ[u], c.occ[v]
    c.occ[u], c.occ[v] = b, a
    if a:
        c.pos[a] = v
    if b:
        c.pos[b] = u


def step_interchange(config: Configuration, graph: WeightedGraph, rng: np.random.Generator,
                     edge: tuple[int, int] | None = None,
                     apply: bool | None = None) -> Configuration:
    """One lazy step; ``edge`` and ``apply`` force the random choices."""
    from .graphs import sample_edge
    c = config.copy()
    c.t += 1
    if apply is None:
        apply = rng.random() < 0.5
    if edge is None:
        edge = sample_edge(graph, rng)
    if apply:
        _swap_sites(c, *edge)
    return c


def step_exclusion(config: Configuration, n: int, k: int, rng: np.random.Generator,
                   pair: tuple[int, int] | None = None,
                   apply: bool | None = None) -> Configuration:
    """One lazy step of labelled exclusion on ``K_n``.

    Swapping the contents of a uniform site pair covers every case at once:
    two particles exchange, a particle hops to an empty site, or nothing.
    """
    if config.n_sites != n or config.n_particles != k:
        raise ValueError("configuration does not match (n, k)")
    c = config.copy()
    c.t += 1
    if apply is None:
        apply = rng.random() < 0.5
    if pair is None:
        pair = tuple(int(x) + 1 for x in rng.choice(n, size=2, replace=False))
    if apply:
        u, v = pair
        _swap_sites(c, u, v)
        for s in (u, v):
            p = c.occ[s]
            if p and s > c.home:
                c.purple[p] = False
    return c


def within_clique_fixed_point_statistic(config: Configuration, clique) -> int:
    """Particles of the clique sitting at their own starting vertex."""
    vs = np.asarray(list(clique), dtype=np.int64)
    return int(np.count_nonzero(config.occ[vs] == vs))


# -- single trajectory ---------------------------------------------------------

@dataclass
class TrajectoryStats:
    t: int
    L: int
    bridge_count: int
    fixed_points: int
    purple_count: int = 0
    snapshots: np.ndarray = field(default_factory=lambda: np.zeros((0, 5), dtype=np.int64))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"# schema={CSV_SCHEMA}"])
        w.writerow(["t", "L_t", "bridge_count", "purple_count", "fixed_points"])
        w.writerows(self.snapshots.tolist())
        return buf.getvalue()


@njit(cache=True)
def _interchange_path(occ, pos, cum, eu, ev, n, T, state, stride, fp_lo, fp_hi, t0):
    L = 0
    for p in range(1, n + 1):
        if pos[p] > n:
            L += 1
    fp = 0
    for v in range(fp_lo, fp_hi + 1):
        if occ[v] == v:
            fp += 1
    nb = 0
    nsnap = T // stride + 1 if stride > 0 else 0
    snaps = np.zeros((nsnap, 5), dtype=np.int64)
    if stride > 0:
        snaps[0, 0] = t0
        snaps[0, 1] = L
        snaps[0, 4] = fp
    for s in range(1, T + 1):
        u01 = uniform(state)
        if u01 < 0.5:
            x = 2.0 * u01
            i = np.searchsorted(cum, x, side="right")
            if i >= len(cum):
                i = len(cum) - 1
            u = eu[i]
            v = ev[i]
            a = occ[u]
            b = occ[v]
            if u <= n and v > n:
                nb += 1
                L += (a <= n) - (b <= n)
            if fp_lo <= u <= fp_hi:
                fp -= (a == u)
                fp += (b == u)
            if fp_lo <= v <= fp_hi:
                fp -= (b == v)
                fp += (a == v)
            occ[u] = b
            occ[v] = a
            pos[a] = v
            pos[b] = u
        if stride > 0 and s % stride == 0:
            r = s // stride
            snaps[r, 0] = t0 + s
            snaps[r, 1] = L
            snaps[r, 2] = nb
            snaps[r, 4] = fp
    return L, nb, fp, snaps


def _seed_from(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2 ** 63))
    return int(rng)


def run_trajectory(config0: Configuration, graph: WeightedGraph, T: int,
                   observers=OBSERVABLES, rng=0, stride: int = 0,
                   clique: tuple[int, int] | None = None) -> tuple[Configuration, TrajectoryStats]:
    """Run ``T`` steps of the interchange process from ``config0``.

    ``rng`` is an integer seed or a Generator (one seed is drawn from it).
    Observables are updated in O(1) per applied swap; ``stride > 0`` records
    a snapshot row every ``stride`` steps.  ``clique`` is the inclusive vertex
    range used for the fixed-point count (default: K1).
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if config0.exclusion:
        raise ValueError("use run_exclusion for exclusion configurations")
    unknown = set(observers) - set(OBSERVABLES)
    if unknown:
        raise ValueError(f"unknown observables {sorted(unknown)}")
    c = config0.copy()
    eu, ev, _, _ = graph.edge_arrays
    lo, hi = clique if clique else (1, graph.n)
    state = replica_seeds(_seed_from(rng), 1)
    L, nb, fp, snaps = _interchange_path(c.occ, c.pos, graph.cumulative, eu, ev,
                                         graph.n, int(T), state, int(stride), lo, hi, c.t)
    c.t += int(T)
    return c, TrajectoryStats(t=c.t, L=int(L), bridge_count=int(nb),
                              fixed_points=int(fp), snapshots=snaps)


# -- replica batches -----------------------------------------------------------

@njit(cache=True, parallel=True)
def _interchange_batch(cum, eu, ev, n, N, checkpoints, seeds, fp_lo, fp_hi):
    R = len(seeds)
    C = len(checkpoints)
    Ls = np.zeros((R, C), dtype=np.int64)
    pair = np.zeros((R, C, 2), dtype=np.bool_)
    bridges = np.zeros((R, C), dtype=np.int64)
    fps = np.zeros((R, C), dtype=np.int64)
    for r in prange(R):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[r]
        occ = np.arange(N + 1)
        pos = np.arange(N + 1)
        L = 0
        nb = 0
        fp = fp_hi - fp_lo + 1
        s = 0
        for j in range(C):
            while s < checkpoints[j]:
                s += 1
                u01 = uniform(state)
                if u01 < 0.5:
                    i = np.searchsorted(cum, 2.0 * u01, side="right")
                    if i >= len(cum):
                        i = len(cum) - 1
                    u = eu[i]
                    v = ev[i]
                    a = occ[u]
                    b = occ[v]
                    if u <= n and v > n:
                        nb += 1
                        L += (a <= n) - (b <= n)
                    if fp_lo <= u <= fp_hi:
                        fp += (b == u) - (a == u)
                    if fp_lo <= v <= fp_hi:
                        fp += (a == v) - (b == v)
                    occ[u] = b
                    occ[v] = a
                    pos[a] = v
                    pos[b] = u
            Ls[r, j] = L
            bridges[r, j] = nb
            fps[r, j] = fp
            pair[r, j, 0] = pos[1] > n
            pair[r, j, 1] = pos[2] > n
    return Ls, pair, bridges, fps


@dataclass
class BatchResult:
    checkpoints: np.ndarray
    L: np.ndarray
    pair: np.ndarray | None = None
    bridges: np.ndarray | None = None
    fixed_points: np.ndarray | None = None


def _checkpoints(times) -> np.ndarray:
    c = np.asarray(sorted(int(t) for t in times), dtype=np.int64)
    if len(c) == 0 or c[0] < 0:
        raise ValueError("need at least one non-negative checkpoint")
    return c


def interchange_replicas(graph: WeightedGraph, times, replicas: int, seed: int,
                         clique: tuple[int, int] | None = None) -> BatchResult:
    """Independent full-permutation runs from the identity, observed at ``times``.

    Returns ``L`` per replica and checkpoint, the K2 indicators of particles
    1 and 2, bridge-swap counts and fixed points in ``clique`` (default K1).
    """
    cp = _checkpoints(times)
    eu, ev, _, _ = graph.edge_arrays
    lo, hi = clique if clique else (1, graph.n)
    Ls, pair, nb, fp = _interchange_batch(graph.cumulative, eu, ev, graph.n, graph.N,
                                          cp, replica_seeds(seed, replicas), lo, hi)
    return BatchResult(cp, Ls, pair, nb, fp)


@njit(cache=True, parallel=True)
def _tagged_batch(indptr, nbr, cumw, deg, E2, n, start, checkpoints, seeds):
    R = len(seeds)
    C = len(checkpoints)
    k = len(start)
    N = len(deg) - 1
    inK1 = np.zeros((R, C), dtype=np.int64)
    events = np.zeros(R, dtype=np.int64)
    for r in prange(R):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[r]
        tpos = start.copy()
        owner = -np.ones(N + 1, dtype=np.int64)
        for j in range(k):
            owner[tpos[j]] = j
        cnt = 0
        for j in range(k):
            if tpos[j] <= n:
                cnt += 1
        t = 0
        c = 0
        last = checkpoints[C - 1]
        while c < C:
            D = 0.0
            for j in range(k):
                D += deg[tpos[j]]
            p = D / E2
            t_next = t + geometric_skip(state, p) + 1
            while c < C and checkpoints[c] < t_next:
                inK1[r, c] = cnt
                c += 1
            if t_next > last:
                break
            t = t_next
            events[r] += 1
            # choose a tagged particle by degree, then an incident edge by weight
            x = uniform(state) * D
            j = 0
            while j < k - 1 and x >= deg[tpos[j]]:
                x -= deg[tpos[j]]
                j += 1
            v = tpos[j]
            lo = indptr[v]
            hi = indptr[v + 1]
            y = uniform(state) * cumw[hi - 1]
            i = lo + np.searchsorted(cumw[lo:hi], y, side="right")
            if i >= hi:
                i = hi - 1
            u = nbr[i]
            o = owner[u]
            if o >= 0:
                if uniform(state) < 0.5:
                    tpos[j] = u
                    tpos[o] = v
                    owner[u] = j
                    owner[v] = o
            else:
                tpos[j] = u
                owner[v] = -1
                owner[u] = j
                cnt += (u <= n) - (v <= n)
    return inK1, events


def tagged_replicas(graph: WeightedGraph, tagged, times, replicas: int, seed: int) -> BatchResult:
    """Exact event-driven simulation of the particles started at ``tagged``.

    Only steps that move a tagged particle are simulated; the gaps are
    geometric.  Returns the number of tagged particles in K1 (vertices
    ``<= n``) at each checkpoint.  With ``tagged`` = the K2 vertices this
    gives ``L = m - (tagged in K2)`` for the full process.
    """
    cp = _checkpoints(times)
    indptr, nbr, cumw, deg = graph.adjacency
    start = np.asarray(list(tagged), dtype=np.int64)
    if len(set(start.tolist())) != len(start) or start.min() < 1 or start.max() > graph.N:
        raise ValueError("tagged vertices must be distinct vertices of the graph")
    inK1, _ = _tagged_batch(indptr, nbr, cumw, deg, 2.0 * graph.edge_mass_total,
                            graph.n, start, cp, replica_seeds(seed, replicas))
    return BatchResult(cp, inK1)



@njit(cache=True, parallel=True)
def _red_count_batch(n, m, bw, adjK2, k2_moves, E2, checkpoints, seeds):
    R = len(seeds)
    C = len(checkpoints)
    out = np.zeros((R, C), dtype=np.int64)
    for r in prange(R):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[r]
        red = np.ones(m, dtype=np.bool_)
        k1 = 0
        t = 0
        c = 0
        last = checkpoints[C - 1]
        rates = np.zeros(2 * m)
        while c < C:
            # event j < m: red at K2 vertex j moves; j >= m: a K1 red enters vertex j - m
            tot = 0.0
            for v in range(m):
                if red[v]:
                    free2 = 0.0
                    if k2_moves:
                        for w in range(m):
                            if w != v and not red[w]:
                                free2 += adjK2[v, w]
                    rates[v] = free2 + (n - k1) * bw[v]
                    rates[m + v] = 0.0
                else:
                    rates[v] = 0.0
                    rates[m + v] = k1 * bw[v]
                tot += rates[v] + rates[m + v]
            if tot <= 0.0:
                while c < C:
                    out[r, c] = k1
                    c += 1
                break
            t_next = t + geometric_skip(state, tot / E2) + 1
            while c < C and checkpoints[c] < t_next:
                out[r, c] = k1
                c += 1
            if t_next > last:
                break
            t = t_next
            x = uniform(state) * tot
            j = 0
            while j < 2 * m - 1 and x >= rates[j]:
                x -= rates[j]
                j += 1
            if j >= m:
                red[j - m] = True
                k1 -= 1
            else:
                v = j
                y = uniform(state) * rates[v]
                if y < (n - k1) * bw[v]:
                    red[v] = False
                    k1 += 1
                else:
                    y -= (n - k1) * bw[v]
                    for w in range(m):
                        if w != v and not red[w]:
                            if y < adjK2[v, w]:
                                red[v] = False
                                red[w] = True
                                break
                            y -= adjK2[v, w]
    return out


def red_count_replicas(graph: WeightedGraph, times, replicas: int, seed: int) -> BatchResult:
    """Number of K2-origin particles in K1 (which equals ``L``), with K1 lumped.

    Valid when every permutation of K1 is a graph automorphism, as for the
    symmetrized and half-symmetrized families.  The start is invariant too,
    so given the occupancy of K2 the red particles in K1 sit on a uniform
    set of K1 vertices; bridges from K1 into a K2 vertex then carry a red
    out of K1 at total weight ``(reds in K1) * bridge weight`` and a swap
    between two reds never changes the occupancy.  Only occupancy-changing
    events are simulated.  On the symmetrized graph every K2 vertex carries
    the same bridge weight, so moves inside K2 are dropped as well.
    """
    from .graphs import HALF_SYMMETRIZED, SYMMETRIZED
    if graph.kind not in (SYMMETRIZED, HALF_SYMMETRIZED):
        raise ValueError("K1 can only be lumped for the symmetrized families")
    n, m = graph.n, graph.m
    cp = _checkpoints(times)
    bw = np.array([float(graph.weight(1, n + 1 + j)) for j in range(m)])
    k2_moves = graph.kind != SYMMETRIZED
    adj = np.ones((m, m)) - np.eye(m)
    out = _red_count_batch(n, m, bw, adj, k2_moves, 2.0 * graph.edge_mass_total, cp,
                           replica_seeds(seed, replicas))
    return BatchResult(cp, out)


@njit(cache=True, parallel=True)
def _exclusion_batch(n, k, checkpoints, seeds):
    R = len(seeds)
    C = len(checkpoints)
    purple = np.zeros((R, C), dtype=np.int64)
    within = np.zeros((R, C), dtype=np.int64)
    exited = np.zeros((R, k), dtype=np.bool_)
    for r in prange(R):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[r]
        occ = np.zeros(n + 1, dtype=np.int64)
        for p in range(1, k + 1):
            occ[p] = p
        pur = np.ones(k + 1, dtype=np.bool_)
        npur = k
        g = 0
        s = 0
        for c in range(C):
            while s < checkpoints[c]:
                s += 1
                u01 = uniform(state)
                a = randbelow(state, n) + 1
                b = randbelow(state, n - 1) + 1
                if b >= a:
                    b += 1
                if a <= k and b <= k:
                    g += 1
                if u01 < 0.5:
                    pa = occ[a]
                    pb = occ[b]
                    occ[a] = pb
                    occ[b] = pa
                    if pa > 0 and b > k and pur[pa]:
                        pur[pa] = False
                        npur -= 1
                    if pb > 0 and a > k and pur[pb]:
                        pur[pb] = False
                        npur -= 1
            purple[r, c] = npur
            within[r, c] = g
        for p in range(1, k + 1):
            exited[r, p - 1] = not pur[p]
    return purple, within, exited


@dataclass
class ExclusionBatch:
    checkpoints: np.ndarray
    purple: np.ndarray
    within: np.ndarray
    exited: np.ndarray


def exclusion_replicas(n: int, k: int, times, replicas: int, seed: int) -> ExclusionBatch:
    """Labelled exclusion from particles on ``1..k``.

    Per replica and checkpoint: purple count and the number of attempted
    transpositions with both sites in ``K = {1..k}``; per replica and
    particle, whether it has left ``K`` by the last checkpoint.
    """
    if not 1 <= k <= n or n < 2:
        raise ValueError(f"need 1 <= k <= n and n >= 2, got n={n}, k={k}")
    cp = _checkpoints(times)
    pur, within, exited = _exclusion_batch(n, k, cp, replica_seeds(seed, replicas))
    return ExclusionBatch(cp, pur, within, exited)


def attempted_within_probability(n: int, k: int) -> float:
    return comb(k, 2) / comb(n, 2)
