"""Desk-scale experiment drivers that emit CSV rows.

Every CSV starts with a ``# homagg-csv v1 <kind>`` schema line.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from homagg.codec import (CURVE_COLUMNS, recovery_point, compress, recover,
                          rows_for_fraction)
from homagg.countsketch import DEFAULT_BATCH_WIDTH, SketchConfig
from homagg.gradient import SparsityProfile, gen_synthetic
from homagg.nzindex import theory_row
from homagg.wire import merge

CSV_SCHEMA_VERSION = 1
DEFAULT_FRACTIONS = (0.02, 0.1, 0.2, 0.4, 0.6, 0.7, 0.8, 0.85, 0.9, 1.0, 1.2, 1.5, 2.0)
THEORY_COLUMNS = ("C", "lambda", "epsilon", "S1", "S2", "Smin", "ratio")
THROUGHPUT_COLUMNS = ("n", "compress_s", "merge_s", "recover_s", "compress_ratio",
                      "merge_ratio", "recover_ratio", "iterations")


@dataclass(frozen=True)
class SweepSpec:
    n_params: int
    profile: SparsityProfile
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    seeds: int = 1
    index: str = "bitmap"
    batch_width: int = DEFAULT_BATCH_WIDTH
    gamma: float = 1.23
    block_rows: int = 0

    def __post_init__(self):
        if not self.fractions or any(not 0 < f <= 2 for f in self.fractions):
            raise ValueError("fractions must lie in (0, 2]")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")


def _sweep_point(spec: SweepSpec, fraction: float, seed: int) -> dict:
    g = gen_synthetic(spec.n_params, replace(spec.profile, seed=seed))
    template = SketchConfig(rows=3, batch_width=spec.batch_width, seed=seed,
                            gamma=spec.gamma, block_rows=spec.block_rows)
    return recovery_point(g, fraction, template, spec.index)


def cmd_sweep(spec: SweepSpec, jobs: int = 1) -> list[dict]:
    """One row per (fraction, seed); seeds run from ``profile.seed`` upward."""
    points = [(f, spec.profile.seed + s) for f in spec.fractions for s in range(spec.seeds)]
    if jobs <= 1:
        return [_sweep_point(spec, f, s) for f, s in points]
    with ProcessPoolExecutor(jobs) as pool:
        futures = [pool.submit(_sweep_point, spec, f, s) for f, s in points]
        return [fut.result() for fut in futures]


def cmd_theory(Cs: Iterable[int] = (4, 8, 16, 32),
               lambdas: Iterable[float] = (1, 9, 99, 999),
               n: float = 10_000, gamma: float = 1.23) -> list[dict]:
    return [theory_row(C, lam, n, gamma) for C in Cs for lam in lambdas]


def _best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cmd_throughput(ns: Sequence[int], sparsity: float = 0.304, fraction: float = 1.0,
                   batch_width: int = DEFAULT_BATCH_WIDTH, seed: int = 0,
                   repeats: int = 3) -> list[dict]:
    """Best-of-``repeats`` wall clock per phase; ratios compare to the previous n."""
    if list(ns) != sorted(ns):
        raise ValueError("n grid must be ascending")
    rows = []
    prev = None
    for n in ns:
        g = gen_synthetic(n, SparsityProfile(sparsity, seed=seed))
        cfg = SketchConfig(rows=rows_for_fraction(n, fraction, batch_width),
                           batch_width=batch_width, seed=seed)
        cg = compress(g, cfg)
        iterations = recover(cg)[1].peel_iterations
        row = {"n": n,
               "compress_s": _best_time(lambda: compress(g, cfg), repeats),
               "merge_s": _best_time(lambda: merge(cg, cg), repeats),
               "recover_s": _best_time(lambda: recover(cg), repeats),
               "iterations": iterations}
        for phase in ("compress", "merge", "recover"):
            key = f"{phase}_s"
            row[f"{phase}_ratio"] = row[key] / prev[key] if prev else ""
        rows.append(row)
        prev = row
    return rows


def write_csv(rows: Sequence[dict], columns: Sequence[str], kind: str, out=None) -> str:
    """Render rows as CSV (schema line first); also writes to ``out`` if given."""
    buf = io.StringIO()
    buf.write(f"# homagg-csv v{CSV_SCHEMA_VERSION} {kind}\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore",
                            lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(v) for k, v in r.items()})
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def read_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


SWEEP_COLUMNS = CURVE_COLUMNS
