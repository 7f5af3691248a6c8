"""Counter-based random streams.

Every draw is a pure function of ``(key, counter)``: the state after
``c + 1`` steps of SplitMix64 started at ``key`` is ``key + (c + 1) * GAMMA``
and the output is the SplitMix64 finalizer applied to that state.  This lets
the bootstrap evaluate any prefix or replicate in isolation (and in any order)
while reproducing exactly the values a sequential generator would produce.

Contract used throughout the package:

* ``derive_seed(root, *keys)`` folds integer keys into a 64-bit stream key.
* the bootstrap stream for prefix ``k`` (1-based) is ``derive_seed(seed, k)``;
  replicate ``b`` (0-based) position ``j`` uses counter ``b * k + j``.
* an index into a pool of size ``m`` is ``floor(unit * m)`` with
  ``unit = (u >> 11) * 2**-53``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
UNIT = 2.0**-53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, *keys: int) -> int:
    """Fold ``keys`` into ``root`` to get an independent 64-bit stream key."""
    state = mix64(root & MASK64)
    for key in keys:
        state = mix64((state + (key + 1) * GAMMA) & MASK64)
    return state


def stream_u64(key: int, start: int, count: int) -> np.ndarray:
    """Raw outputs for counters ``start .. start + count - 1``."""
    with np.errstate(over="ignore"):
        ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z = np.uint64(key & MASK64) + ctr * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


def stream_uniform(key: int, start: int, count: int) -> np.ndarray:
    """Uniform doubles in [0, 1) from the stream."""
    return (stream_u64(key, start, count) >> np.uint64(11)).astype(np.float64) * UNIT


def stream_normal(key: int, start: int, count: int) -> np.ndarray:
    """Standard normals by Box-Muller; consumes ``2 * ceil(count / 2)`` draws."""
    pairs = (count + 1) // 2
    u = stream_uniform(key, start, 2 * pairs)
    u1 = 1.0 - u[0::2]  # (0, 1]
    u2 = u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(2.0 * np.pi * u2)
    z[1::2] = radius * np.sin(2.0 * np.pi * u2)
    return z[:count]


def permutation(n: int, key: int) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` (argsort of stream outputs)."""
    return np.argsort(stream_u64(key, 0, n), kind="stable")
