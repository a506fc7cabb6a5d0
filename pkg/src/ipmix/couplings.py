"""Coupled Bernoulli-Laplace chains, the symmetrized walk and the lazy copycat walk.

Jump weights are kept as integer numerators over ``2 E n m``:
``up(k) = (n-k)^2`` and ``down(k) = k (m-n+k)``.

* ``X`` and ``Y`` are two copies of the count chain.  A fair coin picks
  which one may move; the picked chain then moves with *twice* its own
  jump probabilities, so that each copy on its own is exactly the count
  chain.  Once ``X = Y`` the two move together.
* ``S`` moves exactly when ``D = X - Y`` moves (before coalescence), each
  way with probability ``p``; a down-move of ``D`` is passed on as a
  down-move of ``S`` with probability ``p / P(D down)``, otherwise as an
  up-move, and an up-move of ``D`` is always an up-move of ``S``.  Hence
  ``D <= S`` pathwise.
* ``L`` replays the moves of ``S`` in order, taking one whenever ``S``
  moves and an independent coin with probability ``2 m^2 / total`` comes up.
  Its unconditional move probability is then ``m / (E n)`` per step.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .lumped import InvariantViolation
from .rng import geometric_skip, replica_seeds, uniform

QUEUE_CAP = 10 ** 8


def _up(n, m, k):
    return (n - k) ** 2


def _down(n, m, k):
    return k * (m - n + k)


def check_thinning(n: int, m: int) -> None:
    """The copycat thinning probability is at most 1 at every reachable state iff ``n >= 3m``."""
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got n={n}, m={m}")
    if n < 3 * m:
        lo = max(0, n - m)
        worst = min(_up(n, m, k) + _down(n, m, k) for k in range(lo, n + 1))
        raise InvariantViolation(
            f"copycat thinning exceeds 1: min over k of up+down = {worst} < m^2 = {m * m}"
            f" (requires n >= 3m)")


def drift(n: int, m: int, E_mass, x: int, y: int) -> float:
    """Expected one-step change of ``D = x - y``."""
    return -(x - y) * (n + m) / (2 * float(E_mass) * n * m)


def d_jump_probabilities(n: int, m: int, E_mass, x: int, y: int) -> tuple[float, float]:
    """``(P(D up), P(D down))`` for ``x != y``."""
    z = 2 * float(E_mass) * n * m
    return (_up(n, m, x) + _down(n, m, y)) / z, (_up(n, m, y) + _down(n, m, x)) / z


@dataclass
class CoupledState:
    x: int
    y: int
    s: int
    l: int
    t: int = 0
    pending_moves: deque = field(default_factory=deque)
    s_moves: int = 0
    l_moves: int = 0
    s_stopped: bool = False
    # jump weights of the current step, read by the S and L updates
    last_total: int = 0
    last_down_w: int = 0
    last_event: bool = False
    last_d_move: int = 0
    last_s_move: int = 0

    @property
    def d(self) -> int:
        return self.x - self.y

    def valid(self) -> bool:
        return 0 <= self.d <= self.s and self.l_moves <= self.s_moves


def initial_state(x0: int, y0: int, s0: int | None = None) -> CoupledState:
    if y0 > x0:
        raise ValueError("need y0 <= x0")
    s0 = x0 - y0 if s0 is None else s0
    if s0 < x0 - y0:
        raise ValueError("need s0 >= x0 - y0")
    return CoupledState(x0, y0, s0, s0, s_stopped=s0 == 0)


def _check_range(state: CoupledState, n: int, m: int) -> None:
    lo = max(0, n - m)
    if not (lo <= state.y <= state.x <= n):
        raise ValueError(f"states must satisfy {lo} <= y <= x <= {n}")


def step_coupled_bl(state: CoupledState, n: int, m: int, E_mass, rng: np.random.Generator) -> CoupledState:
    """Move ``X`` or ``Y`` (fair coin), recording the change of ``D``.

    Once coalesced, an event of probability ``2p`` is drawn for ``S`` and the
    common chain moves on half of those events.
    """
    _check_range(state, n, m)
    z = 2 * int(E_mass) * n * m
    x, y = state.x, state.y
    ux, dx, uy, dy = _up(n, m, x), _down(n, m, x), _up(n, m, y), _down(n, m, y)
    state.t += 1
    state.last_d_move = 0
    state.last_down_w = uy + dx
    if x == y:
        state.last_total = 2 * (ux + dx)
        state.last_event = rng.random() * z < state.last_total
        if state.last_event and rng.random() < 0.5:
            if rng.random() * (ux + dx) < ux:
                state.x += 1
                state.y += 1
            else:
                state.x -= 1
                state.y -= 1
        return state
    state.last_total = ux + dx + uy + dy
    u = rng.random() * z / 2
    if rng.random() < 0.5:
        if u < ux:
            state.x += 1
            state.last_d_move = 1
        elif u < ux + dx:
            state.x -= 1
            state.last_d_move = -1
    else:
        if u < uy:
            state.y += 1
            state.last_d_move = -1
        elif u < uy + dy:
            state.y -= 1
            state.last_d_move = 1
    state.last_event = state.last_d_move != 0
    return state


def step_symmetrized(state: CoupledState, rng: np.random.Generator) -> CoupledState:
    """Move ``S`` given the ``D`` move of the current step."""
    state.last_s_move = 0
    if state.s_stopped or not state.last_event:
        return state
    if state.last_d_move == 1:
        mv = 1
    elif state.last_d_move == -1:
        mv = -1 if rng.random() * state.last_down_w < state.last_total / 2 else 1
    else:
        mv = -1 if rng.random() < 0.5 else 1
    state.s += mv
    state.s_moves += 1
    state.pending_moves.append(mv)
    if len(state.pending_moves) > QUEUE_CAP:
        raise InvariantViolation("copycat queue overflow")
    if state.s == 0:
        state.s_stopped = True
    state.last_s_move = mv
    return state


def step_copycat(state: CoupledState, n: int, m: int, E_mass, rng: np.random.Generator,
                 s_was_running: bool = True) -> CoupledState:
    """Let ``L`` replay the oldest unused ``S`` move with the thinning probability."""
    if state.l == 0:
        return state
    if not s_was_running:
        take = rng.random() < m / (float(E_mass) * n)
    elif state.last_s_move:
        theta = 2 * m * m / state.last_total
        if theta > 1:
            raise InvariantViolation(f"thinning probability {theta} > 1")
        take = rng.random() < theta
    else:
        take = False
    if take:
        if not state.pending_moves:
            raise InvariantViolation("copycat ran ahead of the symmetrized walk")
        state.l += state.pending_moves.popleft()
        state.l_moves += 1
    return state


def step_triple(state: CoupledState, n: int, m: int, E_mass, rng: np.random.Generator) -> CoupledState:
    """One step of the whole construction; ``S`` is frozen once it has hit 0."""
    running = not state.s_stopped
    step_coupled_bl(state, n, m, E_mass, rng)
    if not running:
        return step_copycat(state, n, m, E_mass, rng, s_was_running=False)
    step_symmetrized(state, rng)
    step_copycat(state, n, m, E_mass, rng)
    if not state.valid():
        raise InvariantViolation(f"ordering broken at t={state.t}: {state}")
    return state


# -- replicated runs -----------------------------------------------------------

@njit(cache=True)
def _push(buf, head, tail, v):
    if tail - head >= len(buf):
        nb = np.empty(2 * len(buf), dtype=np.int64)
        for i in range(head, tail):
            nb[i - head] = buf[i % len(buf)]
        nb[tail - head] = v
        return nb, 0, tail - head + 1, v
    buf[tail % len(buf)] = v
    return buf, head, tail + 1, v


@njit(cache=True, parallel=True)
def _coalescence_batch(n, m, z, x0, y0, s0, checkpoints, seeds, qcap):
    R = len(seeds)
    C = len(checkpoints)
    horizon = checkpoints[C - 1]
    D = np.zeros((R, C), dtype=np.int64)
    tauD = -np.ones(R, dtype=np.int64)
    tauS = -np.ones(R, dtype=np.int64)
    tauL = -np.ones(R, dtype=np.int64)
    bad = np.zeros((R, 3), dtype=np.int64)
    rateL = 2.0 * m * m / z
    for r in prange(R):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[r]
        x = x0
        y = y0
        s = s0
        l = s0
        buf = np.empty(1024, dtype=np.int64)
        head = 0
        tail = 0
        # buf holds S positions after each of its moves not yet replayed by L
        prev = s0
        if x == y:
            tauD[r] = 0
        if s == 0:
            tauS[r] = 0
            tauL[r] = 0
        t = 0
        c = 0
        nS = 0
        nL = 0
        while c < C:
            if tauL[r] >= 0 and tauD[r] >= 0:
                break
            ux = (n - x) * (n - x)
            dx = x * (m - n + x)
            if tauS[r] < 0:
                if x == y:
                    total = 2 * (ux + dx)
                else:
                    uy = (n - y) * (n - y)
                    dy = y * (m - n + y)
                    total = ux + dx + uy + dy
                pe = total / z
            else:
                total = 0
                pe = rateL
            t_next = t + geometric_skip(state, pe) + 1
            while c < C and checkpoints[c] < t_next:
                D[r, c] = x - y
                c += 1
            if t_next > horizon:
                break
            t = t_next
            if tauS[r] < 0:
                mv = 0
                u = uniform(state) * total
                if x == y:
                    mv = -1 if u < total / 2 else 1
                    if uniform(state) < 0.5:
                        if uniform(state) * (ux + dx) < ux:
                            x += 1
                            y += 1
                        else:
                            x -= 1
                            y -= 1
                else:
                    if u < ux:
                        x += 1
                        mv = 1
                    elif u < ux + dx:
                        x -= 1
                        down_w = uy + dx
                        mv = -1 if uniform(state) * down_w < total / 2 else 1
                    elif u < ux + dx + uy:
                        y += 1
                        down_w = uy + dx
                        mv = -1 if uniform(state) * down_w < total / 2 else 1
                    else:
                        y -= 1
                        mv = 1
                    if x == y:
                        tauD[r] = t
                s += mv
                nS += 1
                buf, head, tail, _ = _push(buf, head, tail, s)
                if tail - head > qcap:
                    bad[r, 2] += 1
                    break
                if x - y > s or x < y:
                    bad[r, 0] += 1
                if s == 0:
                    tauS[r] = t
                theta = 2.0 * m * m / total
                if theta > 1.0:
                    bad[r, 2] += 1
                take = uniform(state) < theta
            else:
                take = True
            if take and l != 0:
                if tail == head:
                    bad[r, 1] += 1
                else:
                    nxt = buf[head % len(buf)]
                    head += 1
                    l += nxt - prev
                    if l != nxt:
                        bad[r, 1] += 1
                    prev = nxt
                    nL += 1
                    if l == 0:
                        tauL[r] = t
            if nL > nS:
                bad[r, 1] += 1
        # coalesced runs keep D = 0 from here on
        while c < C:
            D[r, c] = x - y
            c += 1
    return D, tauD, tauS, tauL, bad


@dataclass
class CoalescenceTail:
    times: np.ndarray
    mean_D: np.ndarray
    se_D: np.ndarray
    bound: np.ndarray
    p_tauD_gt: np.ndarray
    p_tauL_gt: np.ndarray
    tauD: np.ndarray
    tauS: np.ndarray
    tauL: np.ndarray
    ordering_violations: int
    replay_violations: int
    thinning_violations: int
    params: dict

    @property
    def bound_violations(self) -> int:
        """Times where the mean of ``D`` exceeds the bound by more than 3 SE.

        The SE is floored at ``1 / replicas``: at early times often no
        replica has moved yet and the sample SE is exactly zero.
        """
        R = self.params["replicas"]
        se = np.sqrt(self.se_D ** 2 + (1.0 / R) ** 2)
        return int(np.count_nonzero(self.mean_D > self.bound + 3 * se))

    def order_violations_of_hitting_times(self) -> int:
        """Runs where ``tau_D <= tau_S <= tau_L`` fails among those that reached 0."""
        big = np.iinfo(np.int64).max
        d = np.where(self.tauD < 0, big, self.tauD)
        s = np.where(self.tauS < 0, big, self.tauS)
        l = np.where(self.tauL < 0, big, self.tauL)
        return int(np.count_nonzero((d > s) | (s > l)))


def _tail(tau: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Empirical P(tau > t); ``-1`` marks runs that never hit before the horizon."""
    big = np.iinfo(np.int64).max
    tt = np.sort(np.where(tau < 0, big, tau))
    return 1.0 - np.searchsorted(tt, times, side="right") / len(tau)


def coalescence_tail(n: int, m: int, E_mass, x0: int, y0: int, horizon: int, replicas: int,
                     seed: int = 0, times=None, s0: int | None = None) -> CoalescenceTail:
    """Replicated triple coupling; tails of the hitting times and the mean of ``D``."""
    lo = max(0, n - m)
    if not lo <= y0 <= x0 <= n:
        raise ValueError(f"need {lo} <= y0 <= x0 <= {n}")
    check_thinning(n, m)
    s0 = x0 - y0 if s0 is None else int(s0)
    if times is None:
        times = np.unique(np.geomspace(1, horizon, 60).astype(np.int64))
    times = np.unique(np.append(np.asarray(times, dtype=np.int64), int(horizon)))
    z = 2 * int(E_mass) * n * m
    D, tD, tS, tL, bad = _coalescence_batch(n, m, float(z), x0, y0, s0, times,
                                            replica_seeds(seed, replicas), QUEUE_CAP)
    if bad[:, 2].any():
        raise InvariantViolation("queue cap or thinning bound exceeded")
    gap = (n + m) / z
    bound = m * np.exp(times * np.log1p(-gap))
    se = D.std(axis=0, ddof=1) / np.sqrt(replicas) if replicas > 1 else np.zeros(len(times))
    return CoalescenceTail(times=times, mean_D=D.mean(axis=0), se_D=se, bound=bound,
                           p_tauD_gt=_tail(tD, times), p_tauL_gt=_tail(tL, times),
                           tauD=tD, tauS=tS, tauL=tL,
                           ordering_violations=int(bad[:, 0].sum()),
                           replay_violations=int(bad[:, 1].sum()),
                           thinning_violations=int(bad[:, 2].sum()),
                           params=dict(n=n, m=m, E_mass=int(E_mass), x0=x0, y0=y0, s0=s0,
                                       horizon=int(horizon), replicas=replicas, seed=seed))


def fit_tail_exponent(tau: np.ndarray, M: float, u_lo: float = 10.0, u_hi: float = 1e3,
                      points: int = 25) -> tuple[float, float]:
    """Least-squares slope of ``log P(tau > u M)`` against ``log u``; returns ``(slope, intercept)``."""
    u = np.geomspace(u_lo, u_hi, points)
    p = _tail(tau, (u * M).astype(np.int64))
    ok = p > 0
    if ok.sum() < 2:
        raise ValueError("tail is empty over the fitting range")
    slope, icpt = np.polyfit(np.log(u[ok]), np.log(p[ok]), 1)
    return float(slope), float(icpt)


@njit(cache=True, parallel=True)
def _drift_batch(n, m, z, xs, ys, samples, seeds):
    K = len(xs)
    mean = np.zeros(K)
    sq = np.zeros(K)
    for i in prange(K):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[i]
        x = xs[i]
        y = ys[i]
        ux = (n - x) * (n - x)
        dx = x * (m - n + x)
        uy = (n - y) * (n - y)
        dy = y * (m - n + y)
        acc = 0.0
        acc2 = 0.0
        for _ in range(samples):
            heads = uniform(state) < 0.5
            u = uniform(state) * z / 2
            dd = 0
            if heads:
                if u < ux:
                    dd = 1
                elif u < ux + dx:
                    dd = -1
            else:
                if u < uy:
                    dd = -1
                elif u < uy + dy:
                    dd = 1
            acc += dd
            acc2 += dd * dd
        mean[i] = acc / samples
        sq[i] = acc2 / samples
    return mean, sq


def empirical_drift(n: int, m: int, E_mass, states, samples: int, seed: int = 0):
    """One-step mean change of ``D`` from each ``(x, y)``; returns ``(mean, se)`` arrays."""
    xs = np.array([s[0] for s in states], dtype=np.int64)
    ys = np.array([s[1] for s in states], dtype=np.int64)
    z = 2.0 * int(E_mass) * n * m
    mean, sq = _drift_batch(n, m, z, xs, ys, int(samples), replica_seeds(seed, len(xs)))
    se = np.sqrt(np.maximum(sq - mean ** 2, 0.0) / (samples - 1))
    return mean, se
