"""Per-replica random streams usable inside numba kernels.

Each replica gets the stream seeded by ``mix64(mix64(base_seed) ^ replica_index)``;
hashing the base first keeps the replica sets of nearby base seeds disjoint.
The generator is splitmix64, which is tiny, fast and has no state beyond one
64-bit word, so a whole replica batch is just an array of seeds.
"""
from __future__ import annotations

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
INV53 = 1.0 / 9007199254740992.0
MASK64 = (1 << 64) - 1


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> S30)) * M1
    z = (z ^ (z >> S27)) * M2
    return z ^ (z >> S31)


@njit(cache=True)
def next_u64(state):
    """Advance ``state`` (a length-1 uint64 array) and return 64 random bits."""
    state[0] += GOLDEN
    return mix64(state[0])


@njit(cache=True)
def uniform(state):
    """Uniform double in [0, 1)."""
    return float(next_u64(state) >> S11) * INV53


@njit(cache=True)
def randbelow(state, k):
    return min(int(uniform(state) * k), k - 1)


@njit(cache=True)
def geometric_skip(state, p):
    """Number of failures before the first success of a ``p``-coin."""
    if p >= 1.0:
        return 0
    u = 1.0 - uniform(state)
    return int(np.floor(np.log(u) / np.log1p(-p)))


def replica_seeds(base_seed: int, replicas: int, offset: int = 0) -> np.ndarray:
    """Initial splitmix states for replicas ``offset .. offset+replicas-1``."""
    base = mix64(np.uint64(int(base_seed) & MASK64))
    idx = np.arange(offset, offset + replicas, dtype=np.uint64)
    out = np.empty(replicas, dtype=np.uint64)
    for i in range(replicas):
        out[i] = mix64(base ^ idx[i])
    return out


def generator(seed: int | None) -> np.random.Generator:
    return np.random.default_rng(None if seed is None else int(seed) & MASK64)
