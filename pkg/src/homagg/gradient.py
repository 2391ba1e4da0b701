"""Dense gradient vectors, synthetic sparse generators and accuracy metrics.

A gradient is a plain 1-D numpy array of dtype float32 (the normal case) or
int32 (exact-arithmetic mode used by homomorphism tests).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GRADIENT_MAGIC = b"LHCG"
GRADIENT_VERSION = 1
DTYPE_CODES = {np.dtype(np.float32): 0x00, np.dtype(np.int32): 0x01}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}
_HEADER = struct.Struct("<4sBQB")


class Distribution(str, enum.Enum):
    UNIFORM = "uniform"
    CLUSTERED = "clustered"


class ValueLaw(str, enum.Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"
    INTEGER = "integer"


@dataclass(frozen=True)
class SparsityProfile:
    sparsity: float
    distribution: Distribution = Distribution.UNIFORM
    value_law: ValueLaw = ValueLaw.NORMAL
    seed: int = 0
    run_length: int = 256
    int_bits: int = 8

    def __post_init__(self):
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError(f"sparsity must be in [0, 1], got {self.sparsity}")
        if self.run_length < 1:
            raise ValueError("run_length must be >= 1")
        if not 1 <= self.int_bits <= 31:
            raise ValueError("int_bits must be in [1, 31]")


# Named presets mirroring measured average sparsity of common models.
PRESETS = {
    "ncf": 0.989,
    "lstm": 0.945,
    "vgg19": 0.304,
    "bert": 0.208,
}


def check_gradient(v: np.ndarray) -> np.ndarray:
    """Validate a gradient array and return it as a contiguous 1-D array."""
    v = np.ascontiguousarray(v)
    if v.ndim != 1:
        raise ValueError("gradient must be one-dimensional")
    if v.dtype not in DTYPE_CODES:
        raise TypeError(f"unsupported gradient dtype {v.dtype}")
    if v.dtype.kind == "f" and not np.all(np.isfinite(v)):
        raise ValueError("gradient contains NaN or Inf")
    return v


def _zero_positions(n: int, n_zero: int, profile: SparsityProfile,
                    rng: np.random.Generator) -> np.ndarray:
    if profile.distribution == Distribution.UNIFORM:
        return rng.permutation(n)[:n_zero]
    # Clustered: whole runs first, then one partial run to land on the exact count.
    run = profile.run_length
    starts = np.arange(0, n, run)
    order = rng.permutation(len(starts))
    picked = []
    remaining = n_zero
    for s in starts[order]:
        if remaining == 0:
            break
        length = min(run, n - s)
        take = min(length, remaining)
        picked.append(np.arange(s, s + take))
        remaining -= take
    return np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)


def _nonzero_values(count: int, profile: SparsityProfile,
                    rng: np.random.Generator) -> np.ndarray:
    if profile.value_law == ValueLaw.INTEGER:
        return rng.integers(1, 2 ** profile.int_bits, size=count,
                            dtype=np.int64).astype(np.int32)
    if profile.value_law == ValueLaw.NORMAL:
        draw = lambda k: rng.standard_normal(k).astype(np.float32)
    else:
        draw = lambda k: rng.uniform(-1.0, 1.0, k).astype(np.float32)
    out = draw(count)
    zero = np.flatnonzero(out == 0)
    while zero.size:
        out[zero] = draw(zero.size)
        zero = zero[out[zero] == 0]
    return out


def gen_synthetic(n_params: int, profile: SparsityProfile) -> np.ndarray:
    """Generate a sparse gradient with exactly ``round(sparsity * n_params)`` zeros.

    Output is a pure function of ``(n_params, profile)``.
    """
    if n_params < 1:
        raise ValueError("n_params must be >= 1")
    rng = np.random.default_rng(profile.seed)
    n_zero = int(round(profile.sparsity * n_params))
    dtype = np.int32 if profile.value_law == ValueLaw.INTEGER else np.float32
    mask = np.ones(n_params, dtype=bool)
    mask[_zero_positions(n_params, n_zero, profile, rng)] = False
    out = np.zeros(n_params, dtype=dtype)
    out[mask] = _nonzero_values(int(mask.sum()), profile, rng)
    return out


def sparsity(v: np.ndarray) -> float:
    """Fraction of exactly-zero entries."""
    v = np.asarray(v)
    if v.size == 0:
        raise ValueError("empty gradient")
    return float(np.count_nonzero(v == 0)) / v.size


@dataclass(frozen=True)
class ErrorStats:
    """Relative error over non-zero originals, absolute error over zeros."""

    relative: float
    zero_abs: float
    n_nonzero: int
    n_zero: int


def average_relative_error(original: np.ndarray, recovered: np.ndarray) -> ErrorStats:
    original = np.asarray(original, dtype=np.float64)
    recovered = np.asarray(recovered, dtype=np.float64)
    if original.shape != recovered.shape:
        raise ValueError(f"length mismatch: {original.shape} vs {recovered.shape}")
    nz = original != 0
    n_nz = int(nz.sum())
    n_zero = original.size - n_nz
    rel = np.abs(recovered[nz] - original[nz]) / np.abs(original[nz])
    zero_err = np.abs(recovered[~nz])
    return ErrorStats(
        relative=float(rel.mean()) if n_nz else 0.0,
        zero_abs=float(zero_err.mean()) if n_zero else 0.0,
        n_nonzero=n_nz,
        n_zero=n_zero,
    )


def encode_gradient(v: np.ndarray) -> bytes:
    v = check_gradient(v)
    head = _HEADER.pack(GRADIENT_MAGIC, GRADIENT_VERSION, v.size, DTYPE_CODES[v.dtype])
    return head + v.astype(v.dtype.newbyteorder("<"), copy=False).tobytes()


def decode_gradient(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ValueError("truncated gradient file")
    magic, version, n, code = _HEADER.unpack_from(data)
    if magic != GRADIENT_MAGIC:
        raise ValueError(f"bad gradient magic {magic!r}")
    if version != GRADIENT_VERSION:
        raise ValueError(f"unsupported gradient version {version}")
    if code not in CODE_DTYPES:
        raise ValueError(f"unknown dtype code {code:#x}")
    dtype = CODE_DTYPES[code]
    body = data[_HEADER.size:]
    if len(body) != n * dtype.itemsize:
        raise ValueError(f"gradient body is {len(body)} bytes, expected {n * dtype.itemsize}")
    return check_gradient(np.frombuffer(body, dtype=dtype.newbyteorder("<")).astype(dtype))


def write_gradient(path: str | Path, v: np.ndarray) -> None:
    Path(path).write_bytes(encode_gradient(v))


def read_gradient(path: str | Path) -> np.ndarray:
    return decode_gradient(Path(path).read_bytes())
