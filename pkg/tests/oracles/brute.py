"""Brute-force references built without the library.

Graphs are rebuilt from their definitions, the interchange process is
enumerated over all of S_N, and the exclusion process over all labelled
placements.  Everything here is slow and only meant for tiny instances.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations, permutations
from math import comb

import mpmath as mp
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def edge_list(kind: str, n: int, m: int):
    """``[(u, v, weight)]`` with vertices 1..n+m; K1 = 1..n, K2 = n+1..n+m."""
    K1 = range(1, n + 1)
    K2 = range(n + 1, n + m + 1)
    E = [(u, v, Fraction(1)) for u, v in combinations(K1, 2)]
    E += [(u, v, Fraction(1)) for u, v in combinations(K2, 2)]
    if kind == "dumbbell":
        E.append((n, n + 1, Fraction(1)))
    elif kind == "symmetrized":
        E += [(u, v, Fraction(1, n * m)) for u in K1 for v in K2]
    elif kind == "half_symmetrized":
        E += [(u, n + 1, Fraction(1, n)) for u in K1]
    elif kind != "complete":
        raise ValueError(kind)
    return E


def total_mass(edges) -> Fraction:
    return sum((w for _, _, w in edges), Fraction(0))


def interchange_matrix(kind: str, n: int, m: int):
    """Sparse lazy transition matrix on S_N; ``perm[v-1]`` is the particle at vertex v."""
    edges = edge_list(kind, n, m)
    E = total_mass(edges)
    N = n + m
    perms = list(permutations(range(1, N + 1)))
    index = {p: i for i, p in enumerate(perms)}
    rows, cols, vals = [], [], []
    for i, p in enumerate(perms):
        rows.append(i)
        cols.append(i)
        vals.append(0.5)
        for u, v, w in edges:
            q = list(p)
            q[u - 1], q[v - 1] = q[v - 1], q[u - 1]
            rows.append(i)
            cols.append(index[tuple(q)])
            vals.append(float(w / (2 * E)))
    P = sp.csr_matrix((vals, (rows, cols)), shape=(len(perms), len(perms)))
    return perms, P, E


def interchange_observables(kind: str, n: int, m: int, times):
    """Exact laws of ``L`` and the K2 indicators of particles 1 and 2 from the identity."""
    perms, P, E = interchange_matrix(kind, n, m)
    N = n + m
    L = np.array([sum(1 for v in range(n) if p[v] > n) for p in perms])
    in2 = np.array([[p.index(1) >= n, p.index(2) >= n] for p in perms], dtype=float)
    x = np.zeros(len(perms))
    x[perms.index(tuple(range(1, N + 1)))] = 1.0
    PT = P.T.tocsr()
    out, t = {}, 0
    for target in sorted(times):
        while t < target:
            x = PT @ x
            t += 1
        law = np.bincount(L, weights=x, minlength=n + 1)[: min(n, m) + 1]
        out[target] = dict(L_law=law.tolist(),
                           p1=float(x @ in2[:, 0]),
                           p12=float(x @ (in2[:, 0] * in2[:, 1])))
    return out, E


def single_walk_matrix(kind: str, n: int, m: int):
    """Lazy walk of one particle on the vertices (sparse, float)."""
    edges = edge_list(kind, n, m)
    E = float(total_mass(edges))
    N = n + m
    rows, cols, vals = [], [], []
    deg = np.zeros(N)
    for u, v, w in edges:
        p = float(w) / (2 * E)
        rows += [u - 1, v - 1]
        cols += [v - 1, u - 1]
        vals += [p, p]
        deg[u - 1] += p
        deg[v - 1] += p
    rows += list(range(N))
    cols += list(range(N))
    vals += list(1.0 - deg)
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


def hitting_time_to_K1(kind: str, n: int, m: int, start: int) -> float:
    """Expected steps for one particle started at ``start`` to reach K1."""
    P = single_walk_matrix(kind, n, m)
    out = list(range(n, n + m))  # K2 vertices, 0-based
    A = sp.identity(m, format="csr") - P[out][:, out]
    h = spla.spsolve(A.tocsc(), np.ones(m))
    return float(h[start - 1 - n])


def exclusion_exact(n: int, k: int, T: int):
    """Exact purple mean, P(all left K) and the per-particle exit probabilities.

    State: positions of the k labelled particles and which have left K =
    {1..k}.  A lazy step picks a uniform pair of sites with probability 1/2.
    """
    pairs = list(combinations(range(1, n + 1), 2))
    start = (tuple(range(1, k + 1)), (False,) * k)
    dist = {start: 1.0}
    for _ in range(T):
        new = {}
        for (pos, ex), pr in dist.items():
            new[(pos, ex)] = new.get((pos, ex), 0.0) + 0.5 * pr
            share = 0.5 * pr / len(pairs)
            for a, b in pairs:
                p2 = list(pos)
                e2 = list(ex)
                for j, s in enumerate(pos):
                    if s == a:
                        p2[j] = b
                    elif s == b:
                        p2[j] = a
                    if p2[j] > k:
                        e2[j] = True
                key = (tuple(p2), tuple(e2))
                new[key] = new.get(key, 0.0) + share
        dist = new
    purple = sum(pr * ex.count(False) for (_, ex), pr in dist.items())
    all_left = sum(pr for (_, ex), pr in dist.items() if all(ex))
    marg = [sum(pr for (_, ex), pr in dist.items() if ex[j]) for j in range(k)]
    return purple, all_left, marg


def bl_dense_tv(n: int, m: int, E, start: int, t: int, dps: int = 40) -> float:
    """TV of the count chain after ``t`` naive multiplications at ``dps`` digits."""
    mp.mp.dps = dps
    lo = max(0, n - m)
    ks = list(range(lo, n + 1))
    z = 2 * mp.mpf(E) * n * m
    P = mp.zeros(len(ks))
    for i, k in enumerate(ks):
        up = mp.mpf((n - k) ** 2) / z
        down = mp.mpf(k * (m - n + k)) / z
        if i + 1 < len(ks):
            P[i, i + 1] = up
        if i > 0:
            P[i, i - 1] = down
        P[i, i] = 1 - up - down
    x = mp.zeros(1, len(ks))
    x[0, ks.index(start)] = 1
    for _ in range(t):
        x = x * P
    # stationary law: hypergeometric count of K1-origin particles left in K1
    pi = [mp.mpf(comb(n, k) * comb(m, n - k)) / comb(n + m, n) for k in ks]
    return float(sum(abs(x[0, i] - pi[i]) for i in range(len(ks))) / 2)


def pair_class_chain(n: int, m: int, E):
    """Classes of two K1-origin particles on the symmetrized graph, derived by hand.

    States (both in K1, split, both in K2).  A particle changes clique only
    along a thin bridge of weight 1/(nm); the bridge joining the two
    particles swaps them and keeps the split.
    """
    z = 2 * mp.mpf(E)
    b = mp.mpf(1) / (n * m)
    P = mp.zeros(3)
    P[0, 1] = 2 * m * b / z
    P[1, 2] = (m - 1) * b / z
    P[1, 0] = (n - 1) * b / z
    P[2, 1] = 2 * n * b / z
    for i in range(3):
        P[i, i] = 1 - sum(P[i, j] for j in range(3) if j != i)
    return P


def mat_pow(P, t: int):
    R = mp.eye(P.rows)
    B = P
    while t:
        if t & 1:
            R = R * B
        B = B * B
        t >>= 1
    return R


def chebyshev_certificate(n: int, m: int, E, t: int, lam: float, dps: int = 50):
    """Certificate ``1 - P_t(L >= h) - P_inf(L <= h)`` from class-chain moments."""
    mp.mp.dps = dps
    Pt = mat_pow(pair_class_chain(n, m, E), int(t))
    # single-particle law from the pair chain marginal
    mu = Pt[0, 1] / 2 + Pt[0, 2]
    both = Pt[0, 2]
    mean_t = n * mu
    var_t = n * mu * (1 - mu) + n * (n - 1) * (both - mu * mu)
    N = n + m
    mean_inf = mp.mpf(n * m) / N
    var_inf = mp.mpf(n) * m / N * n / N * (N - n) / (N - 1)
    h = mp.mpf(m * n) / (m + n) - mp.sqrt(lam) / 2 * m * mp.sqrt(n) / (m + n)
    p_chain = min(1, var_t / (h - mean_t) ** 2)
    p_stat = min(1, var_inf / (mean_inf - h) ** 2)
    return dict(p_chain=float(p_chain), p_stationary=float(p_stat),
                certificate=float(max(0, 1 - p_chain - p_stat)),
                mean_t=float(mean_t), var_t=float(var_t))
