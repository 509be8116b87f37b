"""Counter-based hashing used for every random quantity in the package.

A site state depends only on (seed, a, b), so regions can be enlarged without
reshuffling and Monte Carlo shards can be generated in any order.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_MASK = (1 << 64) - 1
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def splitmix64(x):
    x = np.uint64(x) + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@njit(cache=True, inline="always")
def site_uniform(key, a, b):
    """Uniform in [0,1) attached to lattice site (a, b) under a 64-bit key."""
    h = splitmix64(np.uint64(key) ^ splitmix64(np.uint64(np.int64(a) & 0xFFFFFFFF) | (np.uint64(np.int64(b) & 0xFFFFFFFF) << np.uint64(32))))
    return float(h >> np.uint64(11)) * _INV53


@njit(cache=True)
def derive_key(seed, stream):
    """Key for an independent sub-stream (trial, shard, path ...) of a seed."""
    return splitmix64(splitmix64(np.uint64(seed)) ^ np.uint64(stream) * np.uint64(0xD1B54A32D192ED03))


def key_for(seed: int, *streams: int) -> int:
    k = np.uint64(seed & _MASK)
    for s in streams:
        k = derive_key(k, np.uint64(s & _MASK))
    return int(k)


def generator(seed: int, *streams: int) -> np.random.Generator:
    """numpy Generator for a named sub-stream (used for Gaussian increments)."""
    return np.random.Generator(np.random.Philox(key=key_for(seed, *streams)))


@njit(cache=True, inline="always")
def hash_uniform(key, x):
    """Uniform in (0,1) attached to a 64-bit counter x."""
    h = splitmix64(np.uint64(key) ^ splitmix64(np.uint64(x)))
    return (float(h >> np.uint64(11)) + 0.5) * _INV53


@njit(cache=True)
def hash_normal(key, x):
    """Standard normal attached to counter x (Box-Muller on two hashed uniforms)."""
    u1 = hash_uniform(key, np.uint64(x) * np.uint64(2))
    u2 = hash_uniform(key, np.uint64(x) * np.uint64(2) + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
