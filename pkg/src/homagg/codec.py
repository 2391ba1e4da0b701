"""Compression into ``[sketch, index]`` and recovery by peeling."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from homagg.countsketch import SketchConfig, cell_map, sketch_positions
from homagg.gradient import average_relative_error, check_gradient
from homagg.nzindex import (IndexKind, bloom_probes, bloom_size_bits,
                            build_index, claimed_positions, optimal_epsilon)
from homagg.peel import PeelResult, PeelState, peel_cells, residual_median
from homagg.wire import CompressedGradient, zero_like  # noqa: F401

DEFAULT_BLOCK_ROWS = 4096
DEFAULT_OVERPROVISION = 1.5
INDEX_CHOICES = ("bitmap", "bloom", "auto")


@dataclass(frozen=True)
class IndexSpec:
    """Index geometry shared by every worker of a round."""

    kind: IndexKind = IndexKind.BITMAP
    n_bits: int = 0
    probes: int = 0
    epsilon: float = 0.0


def plan_index(n_params: int, expected_nonzero: int, choice: str = "bitmap",
               value_bits: int = 32, gamma: float = 1.23,
               epsilon: float | None = None) -> IndexSpec:
    """Pick the index for ``expected_nonzero`` marks among ``n_params`` positions.

    ``auto`` selects a Bloom filter only when it is smaller than the bitmap.
    """
    if choice not in INDEX_CHOICES:
        raise ValueError(f"index choice must be one of {INDEX_CHOICES}")
    if choice == "bitmap":
        return IndexSpec(IndexKind.BITMAP, n_params)
    n = max(1, min(expected_nonzero, n_params))
    if epsilon is None:
        lam = (n_params - n) / n
        epsilon = optimal_epsilon(value_bits, lam, gamma) if lam > 0 else 1.0
    m = bloom_size_bits(n, epsilon)
    if choice == "auto" and m >= n_params:
        return IndexSpec(IndexKind.BITMAP, n_params)
    probes = bloom_probes(epsilon) if m else 0
    return IndexSpec(IndexKind.BLOOM, m, probes, epsilon)


def expected_candidates(n_params: int, expected_nonzero: int, spec: IndexSpec) -> float:
    """Positions the index will claim: true non-zeros plus expected false positives."""
    if spec.kind == IndexKind.BITMAP:
        return float(expected_nonzero)
    return expected_nonzero + spec.epsilon * (n_params - expected_nonzero)


def rows_for_fraction(n_params: int, fraction: float, batch_width: int,
                      block_rows: int = 0) -> int:
    """Sketch rows so that sketch bits are ``fraction`` of the original bits."""
    if not 0 < fraction:
        raise ValueError("fraction must be positive")
    rows = max(3, round(fraction * n_params / batch_width))
    if block_rows:
        rows = block_rows * math.ceil(rows / block_rows)
    return rows


def rows_for_candidates(candidates: float, batch_width: int, gamma: float = 1.23,
                        block_rows: int = 0,
                        overprovision: float = DEFAULT_OVERPROVISION) -> int:
    """Smallest sketch holding ``gamma`` cells per candidate.

    In blocked mode every block is provisioned with ``overprovision`` cells per
    expected candidate instead, to absorb uneven block loads.
    """
    if block_rows:
        need = overprovision * candidates / batch_width
        return block_rows * max(1, math.ceil(need / block_rows))
    return max(3, math.ceil(gamma * candidates / batch_width))


def padded_length(n_params: int, batch_width: int) -> int:
    return batch_width * math.ceil(n_params / batch_width)


def compress(g: np.ndarray, cfg: SketchConfig,
             index: IndexSpec | str = "bitmap") -> CompressedGradient:
    """Build the sketch and the non-zero index of one gradient."""
    g = check_gradient(g)
    positions = np.flatnonzero(g)
    if isinstance(index, str):
        index = plan_index(g.size, positions.size, index, gamma=cfg.gamma)
    sketch = sketch_positions(positions, g[positions], cfg, dtype=g.dtype)
    if index.kind == IndexKind.BITMAP:
        idx = build_index(g.size, positions, IndexKind.BITMAP)
    else:
        idx = build_index(g.size, positions, IndexKind.BLOOM, index.n_bits, index.probes,
                          cfg.seed)
    return CompressedGradient(g.size, sketch, idx, workers=1)


@dataclass(frozen=True)
class RecoveryStats:
    recovery_rate: float
    peel_iterations: int
    candidates: int
    fallback_count: int


def peel(cg: CompressedGradient) -> tuple[np.ndarray, PeelResult, np.ndarray, np.ndarray]:
    """Peel the index candidates of ``cg``.

    Returns ``(candidate positions, result, edges, signs)``; resolved values
    are keyed by the candidate ordinal.
    """
    cand = claimed_positions(cg.index)
    edges, signs = cell_map(cand, cg.config)
    work = cg.sketch.cells.ravel()
    work = work.astype(np.float64) if work.dtype.kind == "f" else work.copy()
    return cand, peel_cells(work, edges, signs), edges, signs


def recover(cg: CompressedGradient) -> tuple[np.ndarray, RecoveryStats]:
    """Exact values for peeled candidates, median estimates for the rest, zeros elsewhere."""
    cand, res, edges, signs = peel(cg)
    out = np.zeros(cg.n_params, dtype=cg.dtype)
    out[cand[res.resolved]] = res.values[res.resolved].astype(cg.dtype)
    left = ~res.resolved
    if left.any():
        est = residual_median(res.state, edges[left], signs[left])
        if cg.dtype.kind == "i":
            est = est.astype(np.int64)
        out[cand[left]] = est.astype(cg.dtype)
    n = cand.size
    done = int(res.resolved.sum())
    stats = RecoveryStats(recovery_rate=done / n if n else 1.0,
                          peel_iterations=res.iterations, candidates=n,
                          fallback_count=n - done)
    return out, stats


def size_fractions(cg: CompressedGradient) -> tuple[float, float]:
    """Compressed size over original size: sketch only, and sketch plus index."""
    original = 32 * cg.n_params
    sketch = 32 * cg.config.num_cells
    return sketch / original, (sketch + cg.index.n_bits) / original


CURVE_COLUMNS = ("fraction", "seed", "rows", "sketch_fraction", "total_fraction",
                 "avg_rel_error", "zero_abs_error", "recovery_rate", "iterations",
                 "candidates", "fallback_count")


def recovery_point(g: np.ndarray, fraction: float, template: SketchConfig,
                   index: IndexSpec | str = "bitmap") -> dict:
    if not 0 < fraction <= 2:
        raise ValueError("fraction must be in (0, 2]")
    rows = rows_for_fraction(g.size, fraction, template.batch_width, template.block_rows)
    cfg = replace(template, rows=rows)
    cg = compress(g, cfg, index)
    rec, stats = recover(cg)
    err = average_relative_error(g, rec)
    sk_frac, tot_frac = size_fractions(cg)
    return {"fraction": fraction, "seed": cfg.seed, "rows": rows,
            "sketch_fraction": sk_frac, "total_fraction": tot_frac,
            "avg_rel_error": err.relative, "zero_abs_error": err.zero_abs,
            "recovery_rate": stats.recovery_rate, "iterations": stats.peel_iterations,
            "candidates": stats.candidates, "fallback_count": stats.fallback_count}


def recovery_rate_curve(g: np.ndarray, sizes: Iterable[float], template: SketchConfig,
                        index: IndexSpec | str = "bitmap") -> list[dict]:
    """One row per compressed-size fraction, sized off ``template``."""
    return [recovery_point(g, f, template, index) for f in sizes]
