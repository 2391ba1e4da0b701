"""The compressed form ``[sketch, index]``: byte layout and homomorphic merge.

This module deliberately has no dependency on recovery; an aggregator only
needs to parse, validate and merge payloads.

Layout (all integers little-endian)::

    "LHCS" | version u8 | N u64 | c u32 | R u32 | seed u64 |
    index kind u8 | dtype u8 | workers u16 |
    R*c sketch cells (float32 or int32, row-major) |
    index kind u8 | index bits u64 | probes u8 | ceil(bits/8) bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from homagg.countsketch import CountSketch, SketchConfig, merge_sum
from homagg.gradient import CODE_DTYPES, DTYPE_CODES
from homagg.nzindex import IndexKind, NzIndex, merge_or

MAGIC = b"LHCS"
VERSION = 1
MAX_WORKERS = 0xFFFF
_HEADER = struct.Struct("<4sBQIIQBBH")
_INDEX_HEADER = struct.Struct("<BQB")


class PayloadError(ValueError):
    """A serialized payload is truncated, oversized or malformed."""


class HeaderMismatch(ValueError):
    """Two compressed gradients cannot be merged."""


@dataclass
class CompressedGradient:
    n_params: int
    sketch: CountSketch
    index: NzIndex
    workers: int = 1

    def __post_init__(self):
        if self.sketch.dtype not in DTYPE_CODES:
            raise ValueError(f"unsupported sketch dtype {self.sketch.dtype}")
        if self.index.n_params != self.n_params:
            raise ValueError("index size does not match N")
        if not 0 <= self.workers <= MAX_WORKERS:
            raise ValueError("worker count out of range")

    @property
    def config(self) -> SketchConfig:
        return self.sketch.config

    @property
    def dtype(self) -> np.dtype:
        return self.sketch.dtype

    @property
    def merge_key(self) -> tuple:
        cfg = self.config
        return (self.n_params, cfg.batch_width, cfg.rows, cfg.seed, int(self.index.kind),
                DTYPE_CODES[self.dtype], self.index.n_bits, self.index.probes)

    def size_bits(self, with_header: bool = True) -> int:
        bits = self.config.num_cells * 32 + self.index.n_bits
        if with_header:
            bits += 8 * (_HEADER.size + _INDEX_HEADER.size)
        return bits

    def __eq__(self, other) -> bool:
        if not isinstance(other, CompressedGradient):
            return NotImplemented
        return (self.n_params == other.n_params and self.workers == other.workers
                and self.sketch == other.sketch and self.index == other.index)


def compatible(a: CompressedGradient, b: CompressedGradient) -> bool:
    return a.merge_key == b.merge_key and a.config == b.config


def merge(a: CompressedGradient, b: CompressedGradient) -> CompressedGradient:
    """Sum the sketches and OR the indexes; worker counts add up."""
    if not compatible(a, b):
        raise HeaderMismatch(f"incompatible headers: {a.merge_key} vs {b.merge_key}")
    if a.workers + b.workers > MAX_WORKERS:
        raise ValueError("worker count overflow")
    return CompressedGradient(a.n_params, merge_sum(a.sketch, b.sketch),
                              merge_or(a.index, b.index), a.workers + b.workers)


def serialize(cg: CompressedGradient) -> bytes:
    cfg = cg.config
    head = _HEADER.pack(MAGIC, VERSION, cg.n_params, cfg.batch_width, cfg.rows, cfg.seed,
                        int(cg.index.kind), DTYPE_CODES[cg.dtype], cg.workers)
    cells = cg.sketch.cells.astype(cg.dtype.newbyteorder("<"), copy=False).tobytes()
    idx = _INDEX_HEADER.pack(int(cg.index.kind), cg.index.n_bits, cg.index.probes)
    return b"".join((head, cells, idx, cg.index.bits.tobytes()))


def expected_size(n_cells: int, index_bits: int) -> int:
    return _HEADER.size + 4 * n_cells + _INDEX_HEADER.size + (index_bits + 7) // 8


def deserialize(data: bytes, block_rows: int = 0, gamma: float = 1.23) -> CompressedGradient:
    """Parse a payload; ``block_rows`` and ``gamma`` are agreed out of band."""
    data = memoryview(data)
    if len(data) < _HEADER.size:
        raise PayloadError("payload shorter than header")
    magic, version, n, c, rows, seed, kind, dcode, workers = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise PayloadError(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise PayloadError(f"unsupported version {version}")
    if dcode not in CODE_DTYPES:
        raise PayloadError(f"unknown dtype code {dcode:#x}")
    try:
        kind = IndexKind(kind)
        cfg = SketchConfig(rows=rows, batch_width=c, seed=seed, gamma=gamma,
                           block_rows=block_rows)
    except ValueError as exc:
        raise PayloadError(str(exc)) from exc
    dtype = CODE_DTYPES[dcode]
    off = _HEADER.size
    cell_bytes = 4 * rows * c
    if len(data) < off + cell_bytes + _INDEX_HEADER.size:
        raise PayloadError("payload truncated inside sketch")
    cells = np.frombuffer(data[off:off + cell_bytes], dtype=dtype.newbyteorder("<"))
    cells = cells.astype(dtype).reshape(rows, c)
    off += cell_bytes
    ikind, n_bits, probes = _INDEX_HEADER.unpack_from(data, off)
    off += _INDEX_HEADER.size
    if ikind != kind:
        raise PayloadError("index kind disagrees with header")
    if len(data) != expected_size(rows * c, n_bits):
        raise PayloadError(f"payload is {len(data)} bytes, expected "
                           f"{expected_size(rows * c, n_bits)}")
    bits = np.frombuffer(data[off:], dtype=np.uint8).copy()
    try:
        index = NzIndex(kind, n, n_bits, probes, seed if kind == IndexKind.BLOOM else 0, bits)
        return CompressedGradient(n, CountSketch(cfg, cells), index, workers)
    except ValueError as exc:
        raise PayloadError(str(exc)) from exc


def with_workers(cg: CompressedGradient, workers: int) -> CompressedGradient:
    return replace(cg, workers=workers)


def zero_like(cg: CompressedGradient) -> CompressedGradient:
    """The merge identity for ``cg``'s header (zero workers)."""
    idx = cg.index
    empty = NzIndex(idx.kind, idx.n_params, idx.n_bits, idx.probes, idx.seed,
                    np.zeros_like(idx.bits))
    return CompressedGradient(cg.n_params, replace(cg.sketch, cells=np.zeros_like(cg.sketch.cells)),
                              empty, workers=0)
