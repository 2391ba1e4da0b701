import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import int_gradient
from homagg.codec import compress, plan_index
from homagg.countsketch import SketchConfig
from homagg.gradient import SparsityProfile, gen_synthetic
from homagg.nzindex import IndexKind
from homagg.wire import (HeaderMismatch, PayloadError, deserialize, expected_size, merge,
                         serialize, zero_like)

CFG = SketchConfig(rows=7, batch_width=16, seed=0xDEADBEEF)


def test_layout_is_bit_exact():
    g = gen_synthetic(100, SparsityProfile(0.5, seed=1))
    cg = compress(g, CFG)
    data = serialize(cg)
    magic, ver, n, c, r, seed, kind, dcode, workers = struct.unpack_from("<4sBQIIQBBH", data)
    assert (magic, ver, n, c, r, seed, kind, dcode, workers) == (
        b"LHCS", 1, 100, 16, 7, 0xDEADBEEF, 0, 0, 1)
    off = struct.calcsize("<4sBQIIQBBH")
    assert off == 33
    cells = np.frombuffer(data[off:off + 4 * 7 * 16], "<f4").reshape(7, 16)
    assert np.array_equal(cells, cg.sketch.cells)
    off += 4 * 7 * 16
    assert struct.unpack_from("<BQB", data, off) == (0, 100, 0)
    bits = np.unpackbits(np.frombuffer(data[off + 10:], np.uint8), bitorder="little")[:100]
    assert np.array_equal(bits.astype(bool), g != 0)
    assert len(data) == expected_size(7 * 16, 100)


def test_payload_size_bitmap_mode():
    cg = compress(np.zeros(1000, np.float32), CFG)
    assert cg.size_bits(with_header=False) == 7 * 16 * 32 + 1000


@pytest.mark.parametrize("dtype_int", [False, True])
@pytest.mark.parametrize("index", ["bitmap", "bloom"])
def test_round_trip(dtype_int, index):
    g = int_gradient(500, 0.7, 3) if dtype_int else gen_synthetic(500, SparsityProfile(0.7, seed=3))
    cg = compress(g, CFG, index)
    back = deserialize(serialize(cg))
    assert back == cg
    assert back.dtype == g.dtype


@pytest.mark.parametrize("cut", [0, 10, 35, 100, -1])
def test_truncation_rejected(cut):
    data = serialize(compress(np.ones(64, np.float32), CFG))
    with pytest.raises(PayloadError):
        deserialize(data[:cut])


def test_trailing_bytes_rejected():
    data = serialize(compress(np.ones(64, np.float32), CFG))
    with pytest.raises(PayloadError):
        deserialize(data + b"\x00")


def test_bad_magic_and_version():
    data = bytearray(serialize(compress(np.ones(64, np.float32), CFG)))
    with pytest.raises(PayloadError):
        deserialize(b"XXXX" + bytes(data[4:]))
    data[4] = 9
    with pytest.raises(PayloadError):
        deserialize(bytes(data))


def test_merge_identity():
    cg = compress(gen_synthetic(300, SparsityProfile(0.6, seed=2)), CFG)
    z = compress(np.zeros(300, np.float32), CFG)
    merged = merge(cg, z)
    assert merged.sketch == cg.sketch and merged.index == cg.index
    assert merged.workers == 2
    assert merge(zero_like(cg), cg) == cg


def test_merge_header_mismatch():
    a = compress(np.ones(64, np.float32), CFG)
    for other in (compress(np.ones(64, np.float32), SketchConfig(rows=7, batch_width=16, seed=1)),
                  compress(np.ones(65, np.float32), CFG),
                  compress(np.ones(64, np.int32), CFG),
                  compress(np.ones(64, np.float32), CFG, plan_index(64, 64, "bloom", epsilon=0.1))):
        with pytest.raises(HeaderMismatch):
            merge(a, other)


@settings(max_examples=25, deadline=None)
@given(seeds=st.lists(st.integers(0, 10 ** 6), min_size=2, max_size=5), order=st.randoms())
def test_integer_merge_order_bitwise(seeds, order):
    parts = [compress(int_gradient(256, 0.8, s), CFG) for s in seeds]
    fold = lambda ps: ps[0] if len(ps) == 1 else merge(ps[0], fold(ps[1:]))
    ref = serialize(fold(parts))
    shuffled = parts[:]
    order.shuffle(shuffled)
    assert serialize(fold(shuffled)) == ref


def test_disjoint_support_merge_equals_direct_compression():
    rng = np.random.default_rng(5)
    perm = rng.permutation(512)
    x1 = np.zeros(512, np.int32)
    x2 = np.zeros(512, np.int32)
    x1[perm[:100]] = rng.integers(1, 100, 100)
    x2[perm[100:200]] = rng.integers(1, 100, 100)
    merged = merge(compress(x1, CFG), compress(x2, CFG))
    direct = compress(x1 + x2, CFG)
    assert merged.sketch == direct.sketch and merged.index == direct.index


def test_bloom_index_carries_probes():
    spec = plan_index(2000, 100, "bloom", epsilon=0.01)
    cg = compress(int_gradient(2000, 0.95, 1), CFG, spec)
    assert cg.index.kind == IndexKind.BLOOM
    assert (cg.index.n_bits, cg.index.probes) == (spec.n_bits, 7)
    assert deserialize(serialize(cg)).index == cg.index
