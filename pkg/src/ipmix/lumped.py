"""Small projected chains, handled exactly.

A chain is stored through its *rate matrix* ``Q = P - I`` rather than ``P``.
The chains here are extremely lazy (holding probabilities like
``1 - 1e-15``), and writing the diagonal of ``P`` in floating point throws
away most of the digits of the off-diagonal mass.  Keeping ``Q`` and
squaring via ``(I + Q)^2 = I + (2Q + Q @ Q)`` never forms ``1 - tiny``, so
plain float64 keeps full relative accuracy on every entry.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Sequence

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import logsumexp

log = logging.getLogger(__name__)

DEFAULT_CAP = 2 ** 72
DRIFT_TOL = 1e-9


class InvariantViolation(RuntimeError):
    """A numerical or pathwise invariant failed during a computation."""


class Unmixed(RuntimeError):
    """The bracketing search passed its cap without reaching the threshold."""


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(eq=False)
class LumpedChain:
    states: tuple
    Q: np.ndarray
    pi: np.ndarray
    meta: dict = field(default_factory=dict)
    Q_exact: list | None = field(default=None, repr=False)
    _squares: list = field(default_factory=list, repr=False)
    drift: float = 0.0

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=np.float64)
        self.pi = np.asarray(self.pi, dtype=np.float64)
        self.Q.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def P(self) -> np.ndarray:
        return np.eye(self.size) + self.Q

    def index(self, state: Hashable) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise ValueError(f"{state!r} is not a state of this chain") from None

    def point_mass(self, state: Hashable) -> np.ndarray:
        r = np.zeros(self.size)
        r[self.index(state)] = 1.0
        return r

    # -- invariants ------------------------------------------------------------
    def row_sum_error(self) -> float:
        return float(np.abs(self.Q.sum(axis=1)).max())

    def stationarity_error(self) -> float:
        return float(np.abs(self.pi @ self.Q).max())

    def detailed_balance_error(self) -> float:
        F = self.pi[:, None] * self.Q
        return float(np.abs(F - F.T).max())

    # -- powers ----------------------------------------------------------------
    def square(self, k: int) -> np.ndarray:
        """Rate form ``P^(2^k) - I``, computed by repeated squaring and cached."""
        sq = self._squares
        if not sq:
            sq.append(np.array(self.Q))
        while len(sq) <= k:
            G = sq[-1]
            G2 = 2.0 * G + G @ G
            drift = float(np.abs(G2.sum(axis=1)).max())
            self.drift = max(self.drift, drift)
            if drift > DRIFT_TOL:
                raise InvariantViolation(
                    f"row-sum drift {drift:.3e} after squaring {len(sq)}")
            np.fill_diagonal(G2, 0.0)
            np.maximum(G2, 0.0, out=G2)
            np.fill_diagonal(G2, -G2.sum(axis=1))
            sq.append(G2)
        return sq[k]

    def clear_cache(self) -> None:
        self._squares.clear()

    def advance(self, row: np.ndarray, t: int) -> np.ndarray:
        """``row @ P^t`` via the binary expansion of ``t``."""
        if t < 0:
            raise ValueError("t must be non-negative")
        r = np.array(row, dtype=np.float64)
        k = 0
        while t:
            if t & 1:
                r = r + r @ self.square(k)
            t >>= 1
            k += 1
        return r

    def tv(self, row: np.ndarray) -> float:
        return 0.5 * float(np.abs(row - self.pi).sum())


# -- constructors ---------------------------------------------------------------

def _from_rates(states, rates: dict, pi, meta, exact: bool = False) -> LumpedChain:
    """Build a chain from off-diagonal rates ``{(i, j): Fraction}``."""
    s = len(states)
    Q = np.zeros((s, s))
    Qx = [[Fraction(0)] * s for _ in range(s)] if exact else None
    for (i, j), r in rates.items():
        Q[i, j] = float(r)
        if exact:
            Qx[i][j] = r
    np.fill_diagonal(Q, -Q.sum(axis=1))
    if exact:
        for i in range(s):
            Qx[i][i] = -sum(Qx[i][j] for j in range(s) if j != i)
    return LumpedChain(tuple(states), Q, np.asarray(pi, dtype=np.float64), meta, Qx)


def single_particle_chain(n: int, m: int, E_mass) -> LumpedChain:
    """Clique membership of one particle on the symmetrized dumbbell."""
    if m < 1 or n < 1:
        raise ValueError("need n, m >= 1")
    E = _frac(E_mass)
    rates = {(0, 1): 1 / (2 * E * n), (1, 0): 1 / (2 * E * m)}
    pi = [n / (n + m), m / (n + m)]
    meta = dict(kind="single_particle", n=n, m=m, E_mass=E)
    return _from_rates(("K1", "K2"), rates, pi, meta, exact=True)


def pair_chain(n: int, m: int, E_mass) -> LumpedChain:
    """Joint clique membership of two particles: both in K1, split, both in K2."""
    if n < 2 or m < 2:
        raise ValueError("pair chain needs n >= 2 and m >= 2")
    E = _frac(E_mass)
    d = 2 * E * m * n
    rates = {
        (0, 1): 1 / (E * n),
        (1, 0): Fraction(n - 1) / d,
        (1, 2): Fraction(m - 1) / d,
        (2, 1): 1 / (E * m),
    }
    tot = n * (n - 1) // 2 + n * m + m * (m - 1) // 2
    pi = [n * (n - 1) / 2 / tot, n * m / tot, m * (m - 1) / 2 / tot]
    meta = dict(kind="pair", n=n, m=m, E_mass=E)
    return _from_rates(("K1K1", "split", "K2K2"), rates, pi, meta, exact=True)


def bl_rates(n: int, m: int, E_mass, k: int) -> tuple[Fraction, Fraction]:
    """Up/down probabilities of the count chain at ``k`` K1-origin particles in K1."""
    E = _frac(E_mass)
    d = 2 * E * n * m
    return Fraction((n - k) ** 2) / d, Fraction(k * (m - n + k)) / d


def bernoulli_laplace_chain(n: int, m: int, E_mass) -> LumpedChain:
    """Birth-death chain of the number of K1-origin particles still in K1.

    Urn sizes ``n`` and ``m`` need not be ordered; the state space is
    ``max(0, n-m) .. n`` and is indexed densely from its lower end.
    """
    if n < 1 or m < 1:
        raise ValueError("need n, m >= 1")
    E = _frac(E_mass)
    lo = max(0, n - m)
    ks = list(range(lo, n + 1))
    s = len(ks)
    up = np.zeros(s)
    down = np.zeros(s)
    for i, k in enumerate(ks):
        u, dn = bl_rates(n, m, E, k)
        up[i], down[i] = float(u), float(dn)
    Q = np.zeros((s, s))
    idx = np.arange(s - 1)
    Q[idx, idx + 1] = up[:-1]
    Q[idx + 1, idx] = down[1:]
    np.fill_diagonal(Q, -Q.sum(axis=1))
    # stationary law from detailed balance, in log space
    logpi = np.zeros(s)
    if s > 1:
        logpi[1:] = np.cumsum(np.log(up[:-1]) - np.log(down[1:]))
    pi = np.exp(logpi - logsumexp(logpi))
    meta = dict(kind="bernoulli_laplace", n=n, m=m, E_mass=E, offset=lo,
                up=up, down=down)
    return LumpedChain(tuple(ks), Q, pi, meta)


def g_prime_single_particle_chain(n: int, m: int, E_mass) -> LumpedChain:
    """One particle on the half-symmetrized dumbbell: K1, vertex ``n+1``, rest of K2."""
    if n < 1 or m < 1:
        raise ValueError("need n, m >= 1")
    E = _frac(E_mass)
    rates = {(0, 1): 1 / (2 * E * n), (1, 0): 1 / (2 * E)}
    states = ["K1", "bridge"]
    pi = [n / (n + m), 1 / (n + m)]
    if m >= 2:
        rates[(1, 2)] = Fraction(m - 1) / (2 * E)
        rates[(2, 1)] = 1 / (2 * E)
        states.append("rest")
        pi.append((m - 1) / (n + m))
    meta = dict(kind="g_prime", n=n, m=m, E_mass=E)
    return _from_rates(tuple(states), rates, pi, meta, exact=True)


# -- exact TV -------------------------------------------------------------------

def matrix_power_tv(chain: LumpedChain, start, t: int) -> float:
    """Exact ``|| P^t(start, .) - pi ||_TV``."""
    return chain.tv(chain.advance(chain.point_mass(start), int(t)))


def tv_curve(chain: LumpedChain, start, times: Sequence[int]) -> np.ndarray:
    """TV at increasing ``times``, advancing one row incrementally."""
    times = [int(t) for t in times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be non-decreasing")
    r = chain.point_mass(start)
    out = np.empty(len(times))
    prev = 0
    for i, t in enumerate(times):
        r = chain.advance(r, t - prev)
        prev = t
        out[i] = chain.tv(r)
    return out


def tmix_exact(chain: LumpedChain, start, eps: float, cap: int = DEFAULT_CAP) -> int:
    """Smallest ``t`` with TV from ``start`` at most ``eps``.

    TV from a fixed start is non-increasing, so the answer is found by
    doubling until the threshold is crossed and then fixing the bits of
    ``t`` from the top down.  Raises :class:`Unmixed` past ``cap``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    r0 = chain.point_mass(start)
    if chain.tv(r0) <= eps:
        return 0
    K = 0
    while chain.tv(r0 + r0 @ chain.square(K)) > eps:
        K += 1
        if 2 ** K > cap:
            raise Unmixed(f"TV still above {eps} at t = 2^{K}")
    t = 0
    r = r0
    for k in range(K - 1, -1, -1):
        cand = r + r @ chain.square(k)
        if chain.tv(cand) > eps:
            r = cand
            t += 2 ** k
    return t + 1


def tmix_worst(chain: LumpedChain, eps: float, starts=None, cap: int = DEFAULT_CAP) -> tuple[int, Any]:
    """Max of :func:`tmix_exact` over ``starts`` (default: both end states)."""
    if starts is None:
        starts = (chain.states[0], chain.states[-1])
    best = None
    for s in starts:
        t = tmix_exact(chain, s, eps, cap)
        if best is None or t > best[0]:
            best = (t, s)
    return best


# -- spectra --------------------------------------------------------------------

@dataclass(frozen=True)
class GapResult:
    gap: float
    lambda2: float
    closed_form: float | None = None


def rate_eigenvalues(chain: LumpedChain) -> np.ndarray:
    """Eigenvalues of ``Q`` (so ``1 + mu`` are those of ``P``), descending.

    Reversibility lets ``Q`` be symmetrised entrywise as
    ``sqrt(Q_ij Q_ji)`` without dividing by the (possibly underflowing)
    stationary weights.
    """
    Q = chain.Q
    s = chain.size
    if chain.meta.get("kind") == "bernoulli_laplace":
        off = np.sqrt(np.diag(Q, 1) * np.diag(Q, -1))
        if s == 1:
            return np.array([0.0])
        # eigenvalues of -Q are tiny; scale to unit size for the solver
        scale = float(np.abs(np.diag(Q)).max()) or 1.0
        mu = eigvalsh_tridiagonal(np.diag(Q) / scale, off / scale) * scale
    else:
        S = np.sqrt(Q * Q.T)
        np.fill_diagonal(S, np.diag(Q))
        scale = float(np.abs(np.diag(Q)).max()) or 1.0
        mu = np.linalg.eigvalsh(S / scale) * scale
    return np.sort(mu)[::-1]


def eigenvalues(chain: LumpedChain) -> np.ndarray:
    return 1.0 + rate_eigenvalues(chain)


def closed_form_eigenvalues(chain: LumpedChain) -> list[Fraction] | None:
    """Exact spectrum for the two- and three-state families, else ``None``."""
    kind = chain.meta.get("kind")
    if kind not in ("single_particle", "pair"):
        return None
    n, m, E = chain.meta["n"], chain.meta["m"], chain.meta["E_mass"]
    g = Fraction(n + m) / (2 * E * n * m)
    if kind == "single_particle":
        return [Fraction(1), 1 - g]
    return [Fraction(1), 1 - g, 1 - Fraction(m + n - 1) / (E * m * n)]


def spectral_gap(chain: LumpedChain) -> GapResult:
    mu = rate_eigenvalues(chain)
    gap = float(-mu[1]) if len(mu) > 1 else 1.0
    cf = closed_form_eigenvalues(chain)
    closed = float(1 - cf[1]) if cf else None
    return GapResult(gap=gap, lambda2=1.0 - gap, closed_form=closed)


# -- hitting times --------------------------------------------------------------

def _solve_exact(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    n = len(b)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for c in range(n):
        p = next(r for r in range(c, n) if M[r][c] != 0)
        M[c], M[p] = M[p], M[c]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c] / M[c][c]
                M[r] = [a - f * x for a, x in zip(M[r], M[c])]
    return [M[i][n] / M[i][i] for i in range(n)]


def expected_hitting_time(chain: LumpedChain, start, targets) -> float | Fraction:
    """Expected steps to reach ``targets`` from ``start``.

    Solves ``Q_AA h = -1`` on the non-target block, in exact rationals when
    the chain carries exact rates.
    """
    tgt = {chain.index(t) for t in ([targets] if not isinstance(targets, (list, tuple, set)) else targets)}
    i0 = chain.index(start)
    if i0 in tgt:
        return Fraction(0) if chain.Q_exact is not None else 0.0
    A = [i for i in range(chain.size) if i not in tgt]
    pos = A.index(i0)
    if chain.Q_exact is not None:
        Qa = [[chain.Q_exact[i][j] for j in A] for i in A]
        h = _solve_exact(Qa, [Fraction(-1)] * len(A))
        return h[pos]
    h = np.linalg.solve(chain.Q[np.ix_(A, A)], -np.ones(len(A)))
    return float(h[pos])


def exact_log_tv(chain: LumpedChain, start, t: int) -> float:
    """log of the TV distance; convenience for plotting tails."""
    d = matrix_power_tv(chain, start, t)
    return math.log(d) if d > 0 else -math.inf
