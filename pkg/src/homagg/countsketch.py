"""Signed three-way Count Sketch over batched rows.

Input parameters are viewed as a matrix with ``batch_width`` columns. Every
input row ``i`` is hashed to three distinct sketch rows ``h_j(i)``, three signs
``g_j(i)`` and three column rotations ``bias_j(i)``; element ``(i, t)`` adds
``g_j(i) * x`` to ``cells[h_j(i), (t + bias_j(i)) % c]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from homagg.hashing import high32, low32, mix

NUM_HASHES = 3
DEFAULT_BATCH_WIDTH = 1024
DEFAULT_GAMMA = 1.23
_MAX_REHASH = 64
_BLOCK_STREAM = NUM_HASHES


@dataclass(frozen=True)
class SketchConfig:
    """Sketch geometry and hashing parameters.

    ``block_rows > 0`` splits the sketch into independent blocks of that many
    rows; every input row then maps all three hashes inside one block.
    """

    rows: int
    batch_width: int = DEFAULT_BATCH_WIDTH
    seed: int = 0
    gamma: float = DEFAULT_GAMMA
    block_rows: int = 0

    def __post_init__(self):
        if self.rows < NUM_HASHES:
            raise ValueError(f"sketch needs at least {NUM_HASHES} rows, got {self.rows}")
        if self.batch_width < 1:
            raise ValueError("batch_width must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if self.block_rows:
            if self.block_rows < NUM_HASHES:
                raise ValueError(f"block_rows must be >= {NUM_HASHES}")
            if self.rows % self.block_rows:
                raise ValueError("rows must be a multiple of block_rows")

    @property
    def num_hashes(self) -> int:
        return NUM_HASHES

    @property
    def num_cells(self) -> int:
        return self.rows * self.batch_width

    @property
    def num_blocks(self) -> int:
        return self.rows // self.block_rows if self.block_rows else 1


@dataclass(frozen=True)
class RowMapping:
    h: tuple[int, int, int]
    g: tuple[int, int, int]
    bias: tuple[int, int, int]


def map_rows(rows: np.ndarray, cfg: SketchConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized row mapping: returns ``(h, g, bias)``, each of shape ``(n, 3)``."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    n = rows.size
    keys = rows.astype(np.uint64)
    if cfg.block_rows:
        span = cfg.block_rows
        base = (high32(mix(cfg.seed, _BLOCK_STREAM, keys)) % cfg.num_blocks) * span
    else:
        span = cfg.rows
        base = np.zeros(n, dtype=np.int64)

    h = np.empty((n, NUM_HASHES), dtype=np.int64)
    g = np.empty((n, NUM_HASHES), dtype=np.int8)
    bias = np.empty((n, NUM_HASHES), dtype=np.int64)
    for j in range(NUM_HASHES):
        word = mix(cfg.seed, j, keys)
        h[:, j] = high32(word) % span
        g[:, j] = np.where(word & np.uint64(1), 1, -1)
        bias[:, j] = (low32(word) >> 1) % cfg.batch_width
        # Bounded rejection keeps the three rows pairwise distinct.
        clash = np.flatnonzero((h[:, :j] == h[:, j:j + 1]).any(axis=1))
        salt = 1
        while clash.size and salt <= _MAX_REHASH:
            h[clash, j] = high32(mix(cfg.seed, j, keys[clash], salt)) % span
            clash = clash[(h[clash, :j] == h[clash, j:j + 1]).any(axis=1)]
            salt += 1
        for r in clash:
            taken = set(h[r, :j].tolist())
            h[r, j] = next(x for x in range(span) if x not in taken)
    h += base[:, None]
    return h, g, bias


def map_row(i: int, cfg: SketchConfig) -> RowMapping:
    h, g, bias = map_rows(np.array([i]), cfg)
    return RowMapping(tuple(int(x) for x in h[0]), tuple(int(x) for x in g[0]),
                      tuple(int(x) for x in bias[0]))


def cell_map(positions: np.ndarray, cfg: SketchConfig) -> tuple[np.ndarray, np.ndarray]:
    """Flat cell indexes ``(n, 3)`` and signs ``(n, 3)`` for flat parameter positions."""
    positions = np.asarray(positions, dtype=np.int64)
    c = cfg.batch_width
    rows, cols = np.divmod(positions, c)
    uniq, inverse = np.unique(rows, return_inverse=True)
    h, g, bias = map_rows(uniq, cfg)
    cells = h[inverse] * c + (cols[:, None] + bias[inverse]) % c
    return cells, g[inverse]


@dataclass
class CountSketch:
    config: SketchConfig
    cells: np.ndarray

    def __post_init__(self):
        shape = (self.config.rows, self.config.batch_width)
        if self.cells.shape != shape:
            raise ValueError(f"cells shape {self.cells.shape} does not match config {shape}")

    @classmethod
    def empty(cls, cfg: SketchConfig, dtype=np.float32) -> CountSketch:
        return cls(cfg, np.zeros((cfg.rows, cfg.batch_width), dtype=dtype))

    @property
    def dtype(self) -> np.dtype:
        return self.cells.dtype

    def copy(self) -> CountSketch:
        return CountSketch(self.config, self.cells.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, CountSketch):
            return NotImplemented
        return (self.config == other.config and self.cells.dtype == other.cells.dtype
                and np.array_equal(self.cells, other.cells))


def insert_row(sk: CountSketch, i: int, row: np.ndarray, nz_mask: np.ndarray | None = None) -> None:
    """Accumulate one input row in place, in the sketch's own arithmetic."""
    row = np.asarray(row)
    c = sk.config.batch_width
    if row.shape != (c,):
        raise ValueError(f"row must have length {c}")
    cols = np.flatnonzero(row != 0 if nz_mask is None else np.asarray(nz_mask, dtype=bool))
    if cols.size == 0:
        return
    m = map_row(i, sk.config)
    vals = row[cols]
    for j in range(NUM_HASHES):
        dst = (cols + m.bias[j]) % c
        delta = (vals * m.g[j]).astype(sk.dtype)
        sk.cells[m.h[j], dst] += delta


def merge_sum(a: CountSketch, b: CountSketch) -> CountSketch:
    if a.config != b.config:
        raise ValueError("cannot merge sketches with different configurations")
    if a.dtype != b.dtype:
        raise ValueError("cannot merge sketches with different cell dtypes")
    return CountSketch(a.config, a.cells + b.cells)


def estimate_many(sk: CountSketch, positions: np.ndarray) -> np.ndarray:
    """Median-of-three signed estimates at flat parameter positions."""
    cells, g = cell_map(positions, sk.config)
    reads = sk.cells.ravel()[cells].astype(np.float64) * g
    return np.median(reads, axis=1)


def estimate(sk: CountSketch, i: int, t: int) -> float:
    if not 0 <= t < sk.config.batch_width:
        raise IndexError(f"column {t} out of range")
    return float(estimate_many(sk, np.array([i * sk.config.batch_width + t]))[0])


def sketch_positions(positions: np.ndarray, values: np.ndarray, cfg: SketchConfig,
                     dtype=np.float32) -> CountSketch:
    """Bulk-build a sketch from non-zero ``(position, value)`` pairs.

    Float cells hold the exact sum rounded once to ``dtype``; int32 cells wrap
    modulo 2**32 like repeated int32 addition would.
    """
    dtype = np.dtype(dtype)
    flat = np.zeros(cfg.num_cells, dtype=dtype)
    if len(positions):
        cells, g = cell_map(positions, cfg)
        if dtype.kind == "f":
            w = np.repeat(np.asarray(values, dtype=np.float64), NUM_HASHES) * g.ravel()
            flat = np.bincount(cells.ravel(), weights=w, minlength=cfg.num_cells).astype(dtype)
        else:
            w = np.repeat(np.asarray(values, dtype=np.int64), NUM_HASHES) * g.ravel()
            acc = np.zeros(cfg.num_cells, dtype=np.int64)
            np.add.at(acc, cells.ravel(), w)
            flat = acc.astype(dtype)
    return CountSketch(cfg, flat.reshape(cfg.rows, cfg.batch_width))
