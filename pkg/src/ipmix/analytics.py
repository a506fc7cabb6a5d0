"""Closed-form moments, bounds and regime predictions for the dumbbell family.

Every ``(1 - x)^t`` is evaluated as ``exp(t * log1p(-x))``: the relevant
``x`` can be ``1e-14`` while ``t`` reaches ``1e14``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as iproduct
from math import comb, log, log1p, expm1, sqrt

import numpy as np
from scipy import stats

from .graphs import COMPLETE, WeightedGraph, binom2

CONST_M_CAP = 20
SQRT_N_CONSTANT = 1.0

LARGE_M = "large_m"
SMALL_M = "small_m"
CONST_M = "const_m"


def edge_mass(n: int, m: int) -> int:
    return binom2(n) + binom2(m) + 1


def _pow1m(x: float, t: float) -> float:
    """``(1 - x)^t`` for small ``x`` and huge ``t``."""
    if t == 0:
        return 1.0
    if x >= 1.0:
        return 0.0
    return math.exp(t * log1p(-x))


def _one_minus_pow1m(x: float, t: float) -> float:
    """``1 - (1 - x)^t`` without cancellation."""
    if t == 0:
        return 0.0
    if x >= 1.0:
        return 1.0
    return -expm1(t * log1p(-x))


def single_gap(n: int, m: int, E_mass) -> float:
    return (n + m) / (2 * float(E_mass) * n * m)


# -- stationary laws ------------------------------------------------------------

@dataclass(frozen=True)
class Hypergeometric:
    N: int
    marked: int
    sample: int

    def __post_init__(self):
        if not (0 <= self.marked <= self.N and 0 <= self.sample <= self.N):
            raise ValueError("need 0 <= marked, sample <= N")

    @property
    def support(self) -> np.ndarray:
        lo = max(0, self.sample + self.marked - self.N)
        return np.arange(lo, min(self.marked, self.sample) + 1)

    @property
    def _dist(self):
        return stats.hypergeom(self.N, self.marked, self.sample)

    def pmf(self, k=None) -> np.ndarray:
        k = self.support if k is None else np.asarray(k)
        return np.exp(self._dist.logpmf(k))

    def cdf(self, k) -> np.ndarray:
        return self._dist.cdf(k)

    @property
    def mean(self) -> float:
        return self.sample * self.marked / self.N

    @property
    def var(self) -> float:
        N, K, s = self.N, self.marked, self.sample
        if N <= 1:
            return 0.0
        return s * K * (N - K) * (N - s) / (N * N * (N - 1))


def hypgeom(N: int, marked: int, sample: int) -> Hypergeometric:
    """Number of marked items in a uniform ``sample`` from a population of ``N``."""
    return Hypergeometric(int(N), int(marked), int(sample))


def stationary_L(n: int, m: int) -> Hypergeometric:
    """Law of the K1-origin count in K2 under the uniform permutation."""
    return hypgeom(n + m, m, n)


def fixed_point_law(k: int) -> np.ndarray:
    """pmf of the number of fixed points of a uniform permutation of ``k``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    out = np.zeros(k + 1)
    for j in range(k + 1):
        s = Fraction(0)
        term = Fraction(1)
        for i in range(k - j + 1):
            s += term
            term = -term / (i + 1)
        out[j] = float(s / math.factorial(j))
    return out


# -- moments ------------------------------------------------------------------------

def indicator_mean(n: int, m: int, E_mass, t) -> float:
    """P(a K1-origin particle sits in K2 at time ``t``) on the symmetrized graph."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return m / (m + n) * _one_minus_pow1m(single_gap(n, m, E_mass), t)


def pair_both_in_K2(n: int, m: int, E_mass, t) -> float:
    """P(two given K1-origin particles are both in K2 at time ``t``)."""
    E = float(E_mass)
    N = m + n
    # N - 2 + N a^t - 2 (N-1) b^t, rewritten in terms of 1 - a^t and 1 - b^t
    A = _one_minus_pow1m((N - 1) / (E * m * n), t)
    B = _one_minus_pow1m(N / (2 * E * m * n), t)
    return m * (m - 1) / (N * (N - 1) * (N - 2)) * (2 * (N - 1) * B - N * A)


def pair_cov(n: int, m: int, E_mass, t) -> float:
    """Covariance of the K2 indicators of two distinct K1-origin particles."""
    if n < 2 or m < 2:
        raise ValueError("pair covariance needs n >= 2 and m >= 2")
    if t < 0:
        raise ValueError("t must be non-negative")
    mu = indicator_mean(n, m, E_mass, t)
    return pair_both_in_K2(n, m, E_mass, t) - mu * mu


def stationary_pair_cov(n: int, m: int) -> float:
    N = n + m
    return m * (m - 1) / (N * (N - 1)) - (m / N) ** 2


def Lt_moments(n: int, m: int, E_mass, t) -> tuple[float, float]:
    """Mean and variance of ``L`` at time ``t`` from the identity start."""
    mu = indicator_mean(n, m, E_mass, t)
    mean = n * mu
    var = n * (n - 1) * pair_cov(n, m, E_mass, t) + n * (mu - mu * mu)
    return mean, max(var, 0.0)


def power_inequality(a: float, b: float, t: float) -> bool:
    """Whether ``(a + b)^t <= a^t + t b`` (tolerating rounding at equality)."""
    if a < 0 or b < 0 or a + b > 1 + 1e-15 or t < 1:
        raise ValueError("need a, b >= 0, a + b <= 1 and t >= 1")
    lhs = (a + b) ** t
    rhs = a ** t + t * b
    return lhs <= rhs * (1 + 4e-16) + 1e-300


# -- lower bounds -----------------------------------------------------------------

@dataclass(frozen=True)
class WilsonBound:
    value: float
    raw: float
    vacuous: bool
    asymptotic: float


def wilson_bound(n: int, m: int, E_mass) -> WilsonBound:
    """Wilson's eigenfunction lower bound lifted from the single-particle chain."""
    if m < 1:
        raise ValueError("m must be >= 1")
    E = float(E_mass)
    gap = single_gap(n, m, E)
    R = (1 + m / n) ** 2 / (2 * E)
    arg = m * m * gap / (2 * R)
    raw = log(arg) / (2 * -log1p(-gap))
    N = n * m / (n + m)
    asym = E * N * log(N) if N > 1 else 0.0
    return WilsonBound(value=max(raw, 0.0), raw=raw, vacuous=raw <= 0, asymptotic=asym)


def wilson_closed_form(n: int, m: int, E_mass) -> float:
    """The same bound with the log argument simplified to ``nm / (2(n+m))``; unclamped."""
    E = float(E_mass)
    gap = single_gap(n, m, E)
    return log(n * m / (2 * (n + m))) / (2 * -log1p(-gap))


def bottleneck_relaxation_bound(graph: WeightedGraph, v: int) -> Fraction:
    """``edge_mass_total / deg_w(v)``: relaxation-time lower bound from a one-vertex test function."""
    return Fraction(graph.edge_mass_total) / graph.weighted_degree(v)


def t_n_lambda(n: int, m: int, E_mass, lam: float) -> float:
    return float(E_mass) * n * m / (n + m) * (log(n) - log(lam))


@dataclass(frozen=True)
class Separation:
    p_chain: float
    p_stationary: float
    threshold: float
    mean_t: float
    var_t: float
    mean_inf: float
    var_inf: float

    @property
    def certificate(self) -> float:
        return max(0.0, 1.0 - self.p_chain - self.p_stationary)


def _cheb(var: float, dist: float) -> float:
    if dist <= 0:
        return 1.0
    return min(1.0, var / (dist * dist))


def chebyshev_separation(n: int, m: int, E_mass, t, lam: float) -> Separation:
    """Chebyshev bounds on ``P_t(L >= h)`` and ``P_inf(L <= h)``.

    ``h = mn/(m+n) - (sqrt(lam)/2) m sqrt(n)/(m+n)``; exact moments are used
    on both sides.  Each bound is clamped to 1 when ``h`` is on the wrong
    side of the corresponding mean.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    h = m * n / (m + n) - sqrt(lam) / 2 * m * sqrt(n) / (m + n)
    mt, vt = Lt_moments(n, m, E_mass, t)
    st = stationary_L(n, m)
    return Separation(p_chain=_cheb(vt, h - mt), p_stationary=_cheb(st.var, st.mean - h),
                      threshold=h, mean_t=mt, var_t=vt, mean_inf=st.mean, var_inf=st.var)


# -- regimes --------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimePrediction:
    regime: str
    predicted_tmix: float
    window: float
    scale_only: bool = False
    params: dict = field(default_factory=dict)


def classify(n: int, m: int, cap: int = CONST_M_CAP, c: float = SQRT_N_CONSTANT) -> str:
    if m <= cap:
        return CONST_M
    if m < c * sqrt(n):
        return SMALL_M
    return LARGE_M


def regime_prediction(n: int, m: int, eps: float = 0.25, cap: int = CONST_M_CAP,
                      c: float = SQRT_N_CONSTANT) -> RegimePrediction:
    """Leading-order mixing time; ``eps`` only matters through unknown constants."""
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got n={n}, m={m}")
    E = edge_mass(n, m)
    regime = classify(n, m, cap, c)
    params = dict(n=n, m=m, eps=eps, cap=cap, c=c)
    if regime == LARGE_M:
        return RegimePrediction(regime, E * n * m / (n + m) * log(n), E * n * m / (n + m), params=params)
    if regime == SMALL_M:
        return RegimePrediction(regime, 2 * E * m * log(m), E * m, params=params)
    return RegimePrediction(regime, float(E), float(E), scale_only=True, params=params)


def product_condition(gap: float, tmix: float) -> float:
    if not 0 < gap <= 1 or tmix < 0:
        raise ValueError("need gap in (0, 1] and tmix >= 0")
    return gap * tmix


# -- bottleneck search -------------------------------------------------------------

@dataclass(frozen=True)
class BottleneckReport:
    W: tuple
    boundary_size: Fraction
    K_used: int
    relaxation_lower_bound: Fraction
    threshold: float


def _connected(graph: WeightedGraph, W) -> bool:
    W = list(W)
    seen = {W[0]}
    stack = [W[0]]
    rest = set(W[1:])
    while stack:
        u = stack.pop()
        for v in list(rest):
            if graph.weight(u, v) > 0:
                rest.discard(v)
                seen.add(v)
                stack.append(v)
    return not rest


def bbb_search(graph: WeightedGraph, tmix_estimate: float, K: int) -> BottleneckReport | None:
    """Smallest-boundary connected set of at most ``K`` vertices that is a bad bottleneck.

    A set qualifies when its weighted edge boundary is at most
    ``K * edge_mass_total / tmix_estimate``.  Sets are enumerated up to the
    family's symmetry: one representative per vector of counts taken from
    each vertex orbit.  Ties go to the smaller set, then the lexicographically
    smaller one.
    """
    if not 1 <= K <= 6:
        raise ValueError("K must lie in 1..6")
    if tmix_estimate <= 0:
        raise ValueError("tmix_estimate must be positive")
    classes = graph.vertex_classes()
    thr = K * graph.edge_mass_total / float(tmix_estimate)
    best = None
    for counts in iproduct(*(range(min(K, len(c)) + 1) for c in classes)):
        size = sum(counts)
        if not 1 <= size <= K:
            continue
        W = tuple(sorted(v for c, k in zip(classes, counts) for v in c[:k]))
        if size == graph.N or not _connected(graph, W):
            continue
        b = graph.boundary(W)
        if b > thr:
            continue
        key = (b, size, W)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    b, _, W = best
    relax = max(bottleneck_relaxation_bound(graph, v) for v in W)
    return BottleneckReport(W=W, boundary_size=b, K_used=K,
                            relaxation_lower_bound=relax, threshold=thr)


# -- exclusion process ----------------------------------------------------------------

def purple_mean(n: int, k: int, T) -> float:
    """Expected number of particles that have never left ``K`` after ``T`` steps."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    return k * _pow1m((n - k) / (2 * comb(n, 2)), T)


@dataclass(frozen=True)
class GammaLaw:
    trials: int
    p: float
    threshold: float

    @property
    def mean(self) -> float:
        return self.trials * self.p

    @property
    def var(self) -> float:
        return self.trials * self.p * (1 - self.p)


def gamma_law(n: int, k: int, T: int, eps: float = 0.25) -> GammaLaw:
    """Binomial law of attempted transpositions with both sites in ``K``."""
    if not 2 <= k <= n:
        raise ValueError("need 2 <= k <= n")
    return GammaLaw(int(T), comb(k, 2) / comb(n, 2), (1 + eps / 2) * k * k * log(k) / n)


def exit_probability(n: int, k: int, T) -> float:
    """P(a given particle has left ``K`` by time ``T``)."""
    return _one_minus_pow1m((n - k) / (2 * comb(n, 2)), T)


def all_exited_probability(n: int, k: int, T) -> float:
    """P(every particle has left ``K`` by time ``T``), by inclusion-exclusion.

    Exits of distinct particles happen at distinct steps, each with
    probability ``q`` per step, so any ``i`` named particles all stay with
    probability ``(1 - i q)^T``.
    """
    q = (n - k) / (2 * comb(n, 2))
    terms = [(-1) ** i * comb(k, i) * _pow1m(i * q, T) if i * q < 1 else 0.0
             for i in range(k + 1)]
    return float(math.fsum(terms))


@dataclass(frozen=True)
class NegCorrResult:
    joint: float
    product: float
    se: float
    exact_joint: float
    exact_product: float
    replicas: int

    @property
    def z(self) -> float:
        return (self.joint - self.product) / self.se if self.se > 0 else 0.0

    @property
    def holds(self) -> bool:
        """The tested contract: joint >= product - 4 SE."""
        return self.joint >= self.product - 4 * self.se


def negcorr_check(n: int, k: int, T: int, replicas: int, seed: int = 0) -> NegCorrResult:
    """Joint probability that all particles left ``K`` versus the product of marginals.

    The SE is that of ``joint - product`` (both estimated from the same
    replicas), from the influence function of the product estimator.
    """
    from .dynamics import exclusion_replicas
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if k == n:
        return NegCorrResult(1.0, 1.0, 0.0, 1.0, 1.0, replicas)
    if T == 0:
        return NegCorrResult(0.0, 0.0, 0.0, 0.0, 0.0, replicas)
    x = exclusion_replicas(n, k, [T], replicas, seed).exited.astype(np.float64)
    a = x.min(axis=1)
    J = float(a.mean())
    p = x.mean(axis=0)
    P = float(np.prod(p))
    infl = a - J
    for j in range(k):
        others = float(np.prod(np.delete(p, j)))
        infl = infl - others * (x[:, j] - p[j])
    se = float(infl.std(ddof=1) / sqrt(replicas)) if replicas > 1 else float("inf")
    ex = exit_probability(n, k, T)
    return NegCorrResult(J, P, se, all_exited_probability(n, k, T), ex ** k, replicas)
