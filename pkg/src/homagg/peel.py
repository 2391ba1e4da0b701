"""Bulk-synchronous parallel peeling over a 3-uniform cell hypergraph.

Every candidate is an edge over three distinct cells. Each cell tracks how
many unresolved candidates touch it and the XOR of their ordinals, so a cell
of degree one names its single remaining candidate directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PeelError(RuntimeError):
    """The cell accumulators are inconsistent with the candidate mapping."""


@dataclass
class PeelState:
    degree: np.ndarray
    id_xor: np.ndarray
    residual: np.ndarray

    @classmethod
    def build(cls, edges: np.ndarray, cell_values: np.ndarray) -> PeelState:
        n_cells = cell_values.size
        flat = edges.ravel()
        degree = np.bincount(flat, minlength=n_cells).astype(np.int64)
        id_xor = np.zeros(n_cells, dtype=np.int64)
        np.bitwise_xor.at(id_xor, flat, np.repeat(np.arange(len(edges), dtype=np.int64), 3))
        return cls(degree, id_xor, cell_values)

    def worklist(self) -> np.ndarray:
        return np.flatnonzero(self.degree == 1)


@dataclass
class PeelResult:
    resolved: np.ndarray
    values: np.ndarray
    rounds: np.ndarray  # round that resolved each candidate, 0 if never
    iterations: int
    state: PeelState


def peel_cells(cell_values: np.ndarray, edges: np.ndarray, signs: np.ndarray,
               state: PeelState | None = None) -> PeelResult:
    """Peel until no degree-one cell remains.

    ``cell_values`` is consumed as the working residual: float input should be
    float64, int32 input peels in wrapping int32 arithmetic. Round ``r``
    resolves every candidate that owns a degree-one cell at the start of the
    round; removals are applied before round ``r + 1`` looks for new ones.
    A prebuilt ``state`` (e.g. restored from elsewhere) is validated as it is used.
    """
    n = len(edges)
    if state is None:
        state = PeelState.build(edges, cell_values)
    resid = state.residual
    resolved = np.zeros(n, dtype=bool)
    values = np.zeros(n, dtype=resid.dtype)
    rounds = np.zeros(n, dtype=np.int32)
    iterations = 0
    frontier = state.worklist()
    while frontier.size:
        owners = state.id_xor[frontier]
        if owners.min() < 0 or owners.max() >= n:
            raise PeelError("cell accumulator names an out-of-range candidate")
        hit = edges[owners] == frontier[:, None]
        if not hit.any(axis=1).all():
            raise PeelError("cell accumulator names a candidate that does not map there")
        slot = hit.argmax(axis=1)
        owners, first = np.unique(owners, return_index=True)
        cells = frontier[first]
        sign = signs[owners, slot[first]].astype(resid.dtype)
        val = resid[cells] * sign
        values[owners] = val
        resolved[owners] = True
        iterations += 1
        rounds[owners] = iterations

        touched = edges[owners]
        contrib = signs[owners].astype(resid.dtype) * val[:, None]
        flat = touched.ravel()
        np.subtract.at(resid, flat, contrib.ravel())
        np.subtract.at(state.degree, flat, 1)
        np.bitwise_xor.at(state.id_xor, flat, np.repeat(owners, 3))
        touched = np.unique(flat)
        frontier = touched[state.degree[touched] == 1]
    return PeelResult(resolved, values, rounds, iterations, state)


def residual_median(state: PeelState, edges: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Median-of-three signed reads of the residual cells for each edge."""
    reads = state.residual[edges].astype(np.float64) * signs
    return np.median(reads, axis=1)
