"""Non-zero index: exact bitmap or Bloom filter, merged by bitwise OR.

Also hosts the space-cost formulas used to size the index and the sketch.
All logarithms here are base 2 and every size is in bits.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from homagg.hashing import mix

LN2 = math.log(2.0)
_PROBE_STREAM_A = 16
_PROBE_STREAM_B = 17
_QUERY_CHUNK = 1 << 20


class IndexKind(enum.IntEnum):
    BITMAP = 0
    BLOOM = 1


@dataclass
class NzIndex:
    kind: IndexKind
    n_params: int
    n_bits: int
    probes: int
    seed: int
    bits: np.ndarray  # packed uint8, little-endian bit order

    def __post_init__(self):
        self.kind = IndexKind(self.kind)
        if self.bits.dtype != np.uint8 or self.bits.shape != ((self.n_bits + 7) // 8,):
            raise ValueError("bit array does not match n_bits")
        if self.kind == IndexKind.BITMAP and (self.n_bits != self.n_params or self.probes):
            raise ValueError("a bitmap has exactly one bit per parameter and no probes")

    @classmethod
    def bitmap(cls, n_params: int) -> NzIndex:
        return cls(IndexKind.BITMAP, n_params, n_params, 0, 0,
                   np.zeros((n_params + 7) // 8, dtype=np.uint8))

    @classmethod
    def bloom(cls, n_params: int, n_bits: int, probes: int, seed: int) -> NzIndex:
        if n_bits < 0 or probes < 0:
            raise ValueError("bloom size and probe count must be non-negative")
        if n_bits == 0 and probes:
            raise ValueError("an empty bloom filter cannot have probes")
        return cls(IndexKind.BLOOM, n_params, n_bits, probes, seed,
                   np.zeros((n_bits + 7) // 8, dtype=np.uint8))

    @property
    def shape_key(self) -> tuple:
        return (self.kind, self.n_params, self.n_bits, self.probes, self.seed)

    def copy(self) -> NzIndex:
        return NzIndex(self.kind, self.n_params, self.n_bits, self.probes, self.seed,
                       self.bits.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, NzIndex):
            return NotImplemented
        return self.shape_key == other.shape_key and np.array_equal(self.bits, other.bits)

    def popcount(self) -> int:
        return int(np.unpackbits(self.bits, bitorder="little").sum())


def _check_positions(idx: NzIndex, positions: np.ndarray) -> np.ndarray:
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size and (positions.min() < 0 or positions.max() >= idx.n_params):
        raise IndexError(f"position out of range [0, {idx.n_params})")
    return positions


def _probe_bits(idx: NzIndex, positions: np.ndarray) -> np.ndarray:
    """Double-hashing probe addresses, shape ``(n, probes)``."""
    keys = positions.astype(np.uint64)
    m = idx.n_bits
    a = (mix(idx.seed, _PROBE_STREAM_A, keys) % np.uint64(m)).astype(np.int64)
    if m > 1:
        b = 1 + (mix(idx.seed, _PROBE_STREAM_B, keys) % np.uint64(m - 1)).astype(np.int64)
    else:
        b = np.zeros_like(a)
    t = np.arange(idx.probes, dtype=np.int64)
    return (a[:, None] + t[None, :] * b[:, None]) % m


def _bit_addresses(idx: NzIndex, positions: np.ndarray) -> np.ndarray:
    if idx.kind == IndexKind.BITMAP:
        return positions[:, None]
    return _probe_bits(idx, positions)


def mark_many(idx: NzIndex, positions: np.ndarray) -> None:
    positions = _check_positions(idx, positions)
    if positions.size == 0 or idx.n_bits == 0:
        return
    addr = _bit_addresses(idx, positions).ravel()
    dense = np.unpackbits(idx.bits, count=idx.n_bits, bitorder="little")
    dense[addr] = 1
    idx.bits[:] = np.packbits(dense, bitorder="little")


def mark_nonzero(idx: NzIndex, i: int) -> None:
    positions = _check_positions(idx, np.array([i]))
    if idx.n_bits == 0:
        return
    for a in _bit_addresses(idx, positions)[0]:
        idx.bits[a >> 3] |= np.uint8(1 << (a & 7))


def query_many(idx: NzIndex, positions: np.ndarray) -> np.ndarray:
    positions = _check_positions(idx, positions)
    out = np.empty(positions.size, dtype=bool)
    for lo in range(0, positions.size, _QUERY_CHUNK):
        chunk = positions[lo:lo + _QUERY_CHUNK]
        if idx.kind == IndexKind.BLOOM and idx.probes == 0:
            out[lo:lo + chunk.size] = True
            continue
        addr = _bit_addresses(idx, chunk)
        hit = (idx.bits[addr >> 3] >> (addr & 7).astype(np.uint8)) & 1
        out[lo:lo + chunk.size] = hit.all(axis=1)
    return out


def query(idx: NzIndex, i: int) -> bool:
    return bool(query_many(idx, np.array([i]))[0])


def claimed_positions(idx: NzIndex) -> np.ndarray:
    """All positions the index reports as (possibly) non-zero, ascending."""
    if idx.kind == IndexKind.BITMAP:
        dense = np.unpackbits(idx.bits, count=idx.n_bits, bitorder="little")
        return np.flatnonzero(dense)
    return np.flatnonzero(query_many(idx, np.arange(idx.n_params)))


def merge_or(a: NzIndex, b: NzIndex) -> NzIndex:
    if a.shape_key != b.shape_key:
        raise ValueError("cannot merge indexes of different kind, size or seed")
    return NzIndex(a.kind, a.n_params, a.n_bits, a.probes, a.seed, a.bits | b.bits)


def build_index(n_params: int, positions: np.ndarray, kind: IndexKind,
                n_bits: int = 0, probes: int = 0, seed: int = 0) -> NzIndex:
    if IndexKind(kind) == IndexKind.BITMAP:
        idx = NzIndex.bitmap(n_params)
    else:
        idx = NzIndex.bloom(n_params, n_bits, probes, seed)
    mark_many(idx, positions)
    return idx


# Space-cost theory -------------------------------------------------------

@dataclass(frozen=True)
class TheoryParams:
    """``n`` non-zero ``C``-bit values among ``n * (1 + lam)`` parameters."""

    n: float
    lam: float
    C: int
    epsilon: float = 1.0
    gamma: float = 1.23

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if self.C < 1:
            raise ValueError("C must be >= 1")
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must be in (0, 1]")

    @property
    def N(self) -> float:
        return self.n * (1 + self.lam)


def binary_entropy(x: float) -> float:
    if not 0 <= x <= 1:
        raise ValueError("entropy argument must be in [0, 1]")
    if x in (0.0, 1.0):
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def f0(x: float) -> float:
    """Per-non-zero bits needed to locate n items among n*(1+x) slots."""
    if x < 0:
        raise ValueError("x must be >= 0")
    return (x + 1) * binary_entropy(1 / (x + 1))


def bloom_probes(epsilon: float) -> int:
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must be in (0, 1]")
    return math.ceil(math.log2(1 / epsilon))


def bloom_size_bits(n: int, epsilon: float) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must be in (0, 1]")
    return math.ceil(n * math.log2(1 / epsilon) / LN2)


def optimal_epsilon(C: int, lam: float, gamma: float = 1.23) -> float:
    return min(1.0, 1.0 / (LN2 ** 2 * gamma * C * lam))


def s_min_bits(p: TheoryParams) -> float:
    return p.n * f0(p.lam) + p.n * math.log2(2 ** p.C - 1)


def total_compressed_bits(p: TheoryParams) -> tuple[float, float]:
    s1 = p.n / LN2 * math.log2(1 / p.epsilon)
    s2 = p.gamma * p.C * p.n * (1 + p.epsilon * p.lam)
    return s1, s2


def theory_row(C: int, lam: float, n: float = 10_000, gamma: float = 1.23) -> dict:
    eps = optimal_epsilon(C, lam, gamma)
    p = TheoryParams(n=n, lam=lam, C=C, epsilon=eps, gamma=gamma)
    s1, s2 = total_compressed_bits(p)
    smin = s_min_bits(p)
    return {"C": C, "lambda": lam, "epsilon": eps, "S1": s1, "S2": s2,
            "Smin": smin, "ratio": (s1 + s2) / smin}
