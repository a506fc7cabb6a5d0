"""Mixing-time experiments: exact profiles, statistic-based TV estimates, cutoff scans."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, log

import numpy as np
from scipy.special import gammaln

from . import analytics as an
from .dynamics import (exclusion_replicas, interchange_replicas, red_count_replicas,
                       tagged_replicas)
from .graphs import HALF_SYMMETRIZED, SYMMETRIZED, make_graph
from .lumped import (bernoulli_laplace_chain, matrix_power_tv, tmix_exact, tmix_worst,
                     tv_curve, DEFAULT_CAP)

GRID_FACTOR = 1.25


@dataclass
class MixingProfile:
    times: np.ndarray
    d_exact: np.ndarray | None = None
    d_lower: np.ndarray | None = None
    d_lower_se: np.ndarray | None = None
    tmix: dict = field(default_factory=dict)
    cutoff_ratio: dict = field(default_factory=dict)
    prediction: an.RegimePrediction | None = None
    start: object = None
    meta: dict = field(default_factory=dict)

    def ratio_to_prediction(self, eps: float) -> float:
        return self.tmix[eps] / self.prediction.predicted_tmix

    def to_rows(self):
        d = self.d_exact if self.d_exact is not None else self.d_lower
        se = self.d_lower_se if self.d_lower_se is not None else np.zeros(len(self.times))
        return [(int(t), float(v), float(s)) for t, v, s in zip(self.times, d, se)]


def geometric_grid(center: float, lo: float = 0.25, hi: float = 4.0,
                   factor: float = GRID_FACTOR) -> np.ndarray:
    """Integer times ``center * factor^j`` covering ``[lo, hi] * center``."""
    j0 = math.floor(math.log(lo) / math.log(factor))
    j1 = math.ceil(math.log(hi) / math.log(factor))
    return np.unique(np.maximum(1, np.round(center * factor ** np.arange(j0, j1 + 1))).astype(np.int64))


def exact_profile(n: int, m: int, eps_list=(0.25,), times=None, cap: int = DEFAULT_CAP,
                  cutoff_pairs=()) -> MixingProfile:
    """Exact TV curve and mixing times of the count chain from its worse endpoint."""
    E = an.edge_mass(n, m)
    chain = bernoulli_laplace_chain(n, m, E)
    pred = an.regime_prediction(n, m, min(eps_list) if eps_list else 0.25)
    eps_all = sorted(set(eps_list) | {e for p in cutoff_pairs for e in p})
    tmix, starts = {}, {}
    for eps in eps_all:
        tmix[eps], starts[eps] = tmix_worst(chain, eps, cap=cap)
    worst = starts[min(eps_all)] if eps_all else chain.states[-1]
    if times is None:
        times = geometric_grid(tmix[min(eps_all)] if eps_all else pred.predicted_tmix)
    times = np.asarray(times, dtype=np.int64)
    d = tv_curve(chain, worst, times)
    ratios = {(a, b): tmix[a] / tmix[b] for a, b in cutoff_pairs}
    chain.clear_cache()
    return MixingProfile(times=times, d_exact=d, tmix=tmix, cutoff_ratio=ratios,
                         prediction=pred, start=worst,
                         meta=dict(n=n, m=m, E_mass=E, states=chain.size))


# -- statistic-based lower bounds ------------------------------------------------------

def partial_fixed_point_law(N: int, k: int) -> np.ndarray:
    """pmf of the number of fixed points among ``k`` given points of a uniform permutation of ``N``."""
    out = np.zeros(k + 1)
    for j in range(k + 1):
        s = 0.0
        for i in range(k - j + 1):
            lt = (gammaln(k + 1) - gammaln(j + 1) - gammaln(i + 1) - gammaln(k - j - i + 1)
                  + gammaln(N - j - i + 1) - gammaln(N + 1))
            s += (-1) ** i * math.exp(lt)
        out[j] = max(s, 0.0)
    return out / out.sum()


@dataclass
class TVEstimate:
    t: int
    estimate: float
    se: float
    flagged: bool
    plugin: float = float("nan")
    note: str = ("noise-floor-corrected plug-in estimate (raw plug-in in 'plugin'); the "
                 "statistic's exact distance is a lower bound on the full-process distance")


def plugin_tv(samples: np.ndarray, support: np.ndarray, pmf: np.ndarray,
              rng: np.random.Generator, boot: int = 200) -> tuple[float, float, float]:
    """TV between the empirical law of integer ``samples`` and an exact pmf.

    Returns ``(corrected, se, raw)``.  The raw plug-in distance is biased
    upward by sampling noise (it is positive even when the laws agree).
    The corrected value subtracts the noise floor, the mean plug-in distance
    of ``R`` draws from the reference law itself, and is clamped at 0; this
    errs low, the safe side for a lower bound.  The SE is the bootstrap
    spread of the raw distance.  With ``boot = 0`` no correction is made
    and the SE is NaN.
    """
    lo = int(min(support.min(), samples.min()))
    hi = int(max(support.max(), samples.max()))
    ref = np.zeros(hi - lo + 1)
    ref[support - lo] = pmf
    counts = np.bincount(samples - lo, minlength=hi - lo + 1).astype(np.float64)
    R = counts.sum()
    est = 0.5 * float(np.abs(counts / R - ref).sum())
    if boot <= 0:
        return est, float("nan"), est
    bs = rng.multinomial(int(R), counts / R, size=boot) / R
    se = float((0.5 * np.abs(bs - ref).sum(axis=1)).std(ddof=1))
    null = rng.multinomial(int(R), ref / ref.sum(), size=boot) / R
    floor = float((0.5 * np.abs(null - ref).sum(axis=1)).mean())
    return max(0.0, est - floor), se, est


@dataclass(frozen=True)
class ProcessSpec:
    kind: str
    n: int
    m: int = 0

    @property
    def graph(self):
        return make_graph(self.kind, self.n, self.m)


def _stationary(spec: ProcessSpec, statistic: str):
    if statistic == "L":
        h = an.stationary_L(spec.n, spec.m)
        return h.support, h.pmf()
    if statistic == "fixed_points":
        g = spec.graph
        return np.arange(g.n + 1), partial_fixed_point_law(g.N, g.n)
    if statistic == "purple":
        return np.array([0]), np.array([1.0])
    raise ValueError(f"unknown statistic {statistic!r}")


def simulate_statistic(spec: ProcessSpec, statistic: str, times, replicas: int, seed: int) -> np.ndarray:
    """Samples of the statistic, shape ``(replicas, len(times))`` for sorted ``times``."""
    if statistic == "L":
        g = spec.graph
        if g.kind in (SYMMETRIZED, HALF_SYMMETRIZED):
            return red_count_replicas(g, times, replicas, seed).L
        return tagged_replicas(g, range(g.n + 1, g.N + 1), times, replicas, seed).L
    if statistic == "fixed_points":
        return interchange_replicas(spec.graph, times, replicas, seed).fixed_points
    if statistic == "purple":
        return exclusion_replicas(spec.n, spec.m, times, replicas, seed).purple
    raise ValueError(f"unknown statistic {statistic!r}")


def statistic_tv_curve(spec: ProcessSpec, statistic: str, times, replicas: int, seed: int = 0,
                       boot: int = 200) -> list[TVEstimate]:
    """Estimated TV between the statistic's law at each time and its stationary law.

    For ``statistic='purple'`` the process is ``(complete, n, k)`` with ``m``
    holding ``k``; its stationary law is taken as the point mass at 0.
    """
    times = np.asarray(sorted(int(t) for t in times), dtype=np.int64)
    support, pmf = _stationary(spec, statistic)
    X = simulate_statistic(spec, statistic, times, replicas, seed)
    rng = np.random.default_rng(seed)
    flagged = replicas < 10 * len(support)
    out = []
    for j, t in enumerate(times):
        est, se, raw = plugin_tv(X[:, j], support, pmf, rng, boot)
        out.append(TVEstimate(int(t), est, se, flagged, raw))
    return out


def statistic_tv_lower(spec: ProcessSpec, statistic: str, t: int, replicas: int,
                       seed: int = 0) -> TVEstimate:
    return statistic_tv_curve(spec, statistic, [t], replicas, seed)[0]


def first_crossing(times: np.ndarray, d: np.ndarray, eps: float) -> int | None:
    """First grid time at which ``d <= eps`` (``None`` if never)."""
    idx = np.nonzero(np.asarray(d) <= eps)[0]
    return int(times[idx[0]]) if len(idx) else None


# -- cutoff ---------------------------------------------------------------------------------

@dataclass
class CutoffScan:
    params: list
    eps_pair: tuple
    tmix_small_eps: list
    tmix_large_eps: list
    ratios: list
    mode: str
    profiles: list = field(default_factory=list)


def cutoff_scan(family, eps_pair=(0.1, 0.9), mode: str = "exact", replicas: int = 4000,
                seed: int = 0, grid_factor: float = 1.05, span=(0.01, 200.0)) -> CutoffScan:
    """``tmix(eps_lo) / tmix(eps_hi)`` along a sequence of ``(n, m)``.

    ``mode='exact'`` uses the count chain; ``mode='simulated'`` estimates
    the TV of ``L`` on the half-symmetrized graph over a geometric grid
    spanning ``span`` times the edge mass.
    """
    lo_eps, hi_eps = min(eps_pair), max(eps_pair)
    small, large, ratios, profiles = [], [], [], []
    for i, (n, m) in enumerate(family):
        if mode == "exact":
            if lo_eps == hi_eps:
                E = an.edge_mass(n, m)
                t = tmix_worst(bernoulli_laplace_chain(n, m, E), lo_eps)[0]
                a = b = t
            else:
                prof = exact_profile(n, m, (lo_eps, hi_eps), times=[1])
                a, b = prof.tmix[lo_eps], prof.tmix[hi_eps]
        elif mode == "simulated":
            E = an.edge_mass(n, m)
            times = geometric_grid(E, span[0], span[1], grid_factor)
            spec = ProcessSpec("half_symmetrized", n, m)
            est = statistic_tv_curve(spec, "L", times, replicas, seed + i, boot=0)
            d = np.array([e.estimate for e in est])
            a = first_crossing(times, d, lo_eps)
            b = first_crossing(times, d, hi_eps)
            profiles.append(MixingProfile(times=times, d_lower=d,
                                          meta=dict(n=n, m=m, replicas=replicas)))
            if a is None or b is None:
                raise RuntimeError(f"grid does not bracket both thresholds at (n, m) = ({n}, {m})")
        else:
            raise ValueError("mode must be 'exact' or 'simulated'")
        small.append(a)
        large.append(b)
        ratios.append(a / b if b else 1.0)
    return CutoffScan(list(family), (lo_eps, hi_eps), small, large, ratios, mode, profiles)


# -- exclusion ---------------------------------------------------------------------------

@dataclass
class ExclusionReport:
    n: int
    k: int
    eps: float
    count_tmix: int | None
    half_n_log_n: float
    count_ratio: float | None
    T: int
    purple_mc: float
    purple_se: float
    purple_formula: float
    note: str = ""

    @property
    def purple_z(self) -> float:
        return (self.purple_mc - self.purple_formula) / self.purple_se if self.purple_se else 0.0


def count_projection_chain(n: int, k: int):
    """Count of ``K``-origin particles inside ``K``: an urn chain with urns ``k`` and ``n - k``."""
    return bernoulli_laplace_chain(k, n - k, Fraction(comb(n, 2), k * (n - k)))


def exclusion_mixing_experiment(n: int, k: int, eps: float = 0.25, replicas: int = 10000,
                                seed: int = 0, purple_factor: float | None = None) -> ExclusionReport:
    """Count-projection mixing time plus a purple-count Monte Carlo check.

    The purple check runs at ``T = purple_factor * n log k`` (default
    ``1 + eps``).
    """
    if not 2 <= k <= n:
        raise ValueError("need 2 <= k <= n")
    half = 0.5 * n * log(n)
    note = ""
    if k == n:
        tm, ratio = 0, None
        note = "count projection is a single state; use the fixed-point statistic instead"
    else:
        tm = tmix_worst(count_projection_chain(n, k), eps)[0]
        ratio = tm / half
    f = 1 + eps if purple_factor is None else purple_factor
    T = int(round(f * n * log(k)))
    pur = exclusion_replicas(n, k, [T], replicas, seed).purple[:, 0]
    return ExclusionReport(n=n, k=k, eps=eps, count_tmix=tm, half_n_log_n=half, count_ratio=ratio,
                           T=T, purple_mc=float(pur.mean()),
                           purple_se=float(pur.std(ddof=1) / math.sqrt(replicas)),
                           purple_formula=an.purple_mean(n, k, T), note=note)


# -- certificates -----------------------------------------------------------------------

@dataclass(frozen=True)
class Certificate:
    value: float
    separation: an.Separation
    t: float


def lower_bound_certificate(n: int, m: int, t, lam: float) -> Certificate:
    """Rigorous TV lower bound at time ``t`` from the threshold event on ``L``."""
    sep = an.chebyshev_separation(n, m, an.edge_mass(n, m), t, lam)
    return Certificate(sep.certificate, sep, float(t))


def exact_tv_at(n: int, m: int, t: int) -> float:
    """Exact TV of the count chain from the all-home start (``k = n``)."""
    chain = bernoulli_laplace_chain(n, m, an.edge_mass(n, m))
    return matrix_power_tv(chain, n, int(t))


def hitting_time_scale(ns, m: int = 3) -> list[tuple[int, float]]:
    """``E[tau] / n^2`` for the half-symmetrized single-particle chain, far state to K1."""
    from .lumped import expected_hitting_time, g_prime_single_particle_chain
    out = []
    for n in ns:
        ch = g_prime_single_particle_chain(n, m, an.edge_mass(n, m))
        far = "rest" if m >= 2 else "bridge"
        out.append((n, float(expected_hitting_time(ch, far, "K1")) / n ** 2))
    return out


# -- moment cross-check -------------------------------------------------------------

@dataclass(frozen=True)
class MomentRow:
    t: int
    quantity: str
    mc: float
    se: float
    formula: float

    @property
    def z(self) -> float:
        return (self.mc - self.formula) / self.se if self.se > 0 else 0.0


def moment_check(n: int, m: int, times, replicas: int, seed: int = 0) -> list[MomentRow]:
    """Monte Carlo moments of the symmetrized process against their closed forms.

    Quantities: mean K2 indicator of particle 1, covariance of the K2
    indicators of particles 1 and 2, mean and variance of ``L``.  SEs come
    from the sample spread of each estimator's per-replica terms.  For the
    indicator quantities the SE is floored at ``1 / replicas``: at early
    times the joint event is rarer than one in ``replicas`` and, when no
    replica sees it, the sample spread is zero.
    """
    if replicas < 2:
        raise ValueError("need at least two replicas")
    E = an.edge_mass(n, m)
    res = interchange_replicas(make_graph(SYMMETRIZED, n, m), times, replicas, seed)
    rows = []
    sq = math.sqrt(replicas)
    floor = 1.0 / replicas
    for j, t in enumerate(res.checkpoints):
        t = int(t)
        a = res.pair[:, j, 0].astype(np.float64)
        b = res.pair[:, j, 1].astype(np.float64)
        L = res.L[:, j].astype(np.float64)
        rows.append(MomentRow(t, "indicator_mean", a.mean(), math.hypot(a.std(ddof=1) / sq, floor),
                              an.indicator_mean(n, m, E, t)))
        cterm = (a - a.mean()) * (b - b.mean())
        rows.append(MomentRow(t, "pair_cov", cterm.sum() / (replicas - 1),
                              math.hypot(cterm.std(ddof=1) / sq, floor),
                              an.pair_cov(n, m, E, t)))
        mean, var = an.Lt_moments(n, m, E, t)
        rows.append(MomentRow(t, "L_mean", L.mean(), L.std(ddof=1) / sq, mean))
        vterm = (L - L.mean()) ** 2
        rows.append(MomentRow(t, "L_var", L.var(ddof=1), vterm.std(ddof=1) / sq, var))
    return rows
