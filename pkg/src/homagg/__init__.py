"""Lossless homomorphic compression of sparse gradient vectors.

Workers compress a sparse gradient into a signed Count Sketch plus a non-zero
index; compressed forms are aggregated by element-wise sum and bitwise OR and
the aggregate is recovered exactly by parallel peeling.

Submodules are imported explicitly; this package root stays import-free so
that the aggregator can load without pulling in the recovery path.
"""

__version__ = "0.1.0"
