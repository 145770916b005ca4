"""Counter-based random numbers for the compiled kernels.

Each replicate owns a 64-bit key derived from ``(root_seed, replicate)``
with numpy's SeedSequence; draw number ``c`` of the stream is
``splitmix64(key + c * GOLDEN)``. The stream state is therefore a single
counter, which makes kernels trivially resumable and replicates independent
of scheduling order.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, uint64

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
INV53 = 1.0 / 9007199254740992.0


def _seed_sequence(root_seed: int, replicate: int, stream: int | None) -> np.random.SeedSequence:
    # ``stream`` separates independent ensembles sharing one root seed
    key = (int(replicate),) if stream is None else (int(stream), int(replicate))
    return np.random.SeedSequence(int(root_seed), spawn_key=key)


def replicate_key(root_seed: int, replicate: int, stream: int | None = None) -> int:
    ss = _seed_sequence(root_seed, replicate, stream)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def replicate_generator(root_seed: int, replicate: int, stream: int | None = None) -> np.random.Generator:
    """numpy Generator for the same (root_seed, replicate) pair (used by the PDMP)."""
    return np.random.Generator(np.random.Philox(_seed_sequence(root_seed, replicate, stream)))


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> uint64(30))) * _M1
    z = (z ^ (z >> uint64(27))) * _M2
    return z ^ (z >> uint64(31))


@njit(inline="always")
def next_u64(rng):
    # rng[0] = key, rng[1] = counter
    c = rng[1]
    rng[1] = c + uint64(1)
    return mix64(rng[0] + c * GOLDEN)


@njit(inline="always")
def uniform(rng):
    """Uniform on [0, 1)."""
    return float(next_u64(rng) >> uint64(11)) * INV53


@njit(inline="always")
def uniform_open(rng):
    """Uniform on (0, 1]."""
    return float((next_u64(rng) >> uint64(11)) + uint64(1)) * INV53


@njit(inline="always")
def exponential(rng):
    return -math.log(uniform_open(rng))


@njit(cache=True)
def poisson(rng, lam):
    """Poisson variate: multiplication for small means, PTRS otherwise."""
    if lam <= 0.0:
        return 0
    if lam < 10.0:
        enlam = math.exp(-lam)
        k = 0
        prod = uniform(rng)
        while prod > enlam:
            k += 1
            prod *= uniform(rng)
        return k
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        U = uniform(rng) - 0.5
        V = uniform(rng)
        us = 0.5 - abs(U)
        k = math.floor((2.0 * a / us + b) * U + lam + 0.43)
        if us >= 0.07 and V <= vr:
            return int(k)
        if k < 0 or (us < 0.013 and V > us):
            continue
        if math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b) <= -lam + k * loglam - math.lgamma(k + 1.0):
            return int(k)


def new_stream(key: int, counter: int = 0) -> np.ndarray:
    return np.array([key, counter], dtype=np.uint64)


@njit(cache=True)
def fill_uniform(rng, out):
    for i in range(out.size):
        out[i] = uniform(rng)


@njit(cache=True)
def fill_poisson(rng, lam, out):
    for i in range(out.size):
        out[i] = poisson(rng, lam)
