"""Vectorized 64-bit hash mixing used by the sketch and the Bloom index."""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


def splitmix64(x: np.ndarray | int) -> np.ndarray:
    """SplitMix64 finalizer applied element-wise (wrapping uint64 arithmetic)."""
    z = np.asarray(x, dtype=np.uint64).copy()
    with np.errstate(over="ignore"):
        z += _GOLDEN
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        z ^= z >> _S31
    return z


def mix(seed: int, stream: int, keys: np.ndarray | int, salt: int = 0) -> np.ndarray:
    """Hash ``keys`` under a (seed, stream, salt) triple.

    Distinct streams give independent-looking outputs for the same key.
    """
    base = splitmix64(
        splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
        ^ np.uint64(((stream & 0xFFFFFFFF) << 32) | (salt & 0xFFFFFFFF))
    )
    k = np.asarray(keys, dtype=np.uint64)
    return splitmix64(splitmix64(k) ^ base)


def high32(h: np.ndarray) -> np.ndarray:
    return (h >> np.uint64(32)).astype(np.int64)


def low32(h: np.ndarray) -> np.ndarray:
    return (h & np.uint64(0xFFFFFFFF)).astype(np.int64)
