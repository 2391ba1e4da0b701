"""In-process AllReduce: compress every gradient, fold the merges, recover once."""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from homagg.codec import IndexSpec, RecoveryStats, compress, plan_index, recover
from homagg.countsketch import SketchConfig
from homagg.wire import CompressedGradient, merge


def merge_all(parts: Sequence[CompressedGradient]) -> CompressedGradient:
    if not parts:
        raise ValueError("nothing to merge")
    return reduce(merge, parts)


def shared_index(gradients: Sequence[np.ndarray], choice: str, gamma: float = 1.23) -> IndexSpec:
    """One index geometry for all workers, sized for the worst-case union of supports."""
    n = gradients[0].size
    union_bound = min(n, sum(int(np.count_nonzero(g)) for g in gradients))
    return plan_index(n, union_bound, choice, gamma=gamma)


def allreduce_inmemory(gradients: Sequence[np.ndarray], cfg: SketchConfig,
                       index: IndexSpec | str = "bitmap") -> tuple[np.ndarray, RecoveryStats]:
    if not gradients:
        raise ValueError("need at least one worker")
    sizes = {g.size for g in gradients}
    if len(sizes) != 1:
        raise ValueError(f"gradient length mismatch: {sorted(sizes)}")
    if isinstance(index, str):
        index = shared_index(gradients, index, cfg.gamma)
    return recover(merge_all([compress(g, cfg, index) for g in gradients]))
