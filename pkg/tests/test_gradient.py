import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homagg.gradient import (Distribution, PRESETS, SparsityProfile, ValueLaw,
                             average_relative_error, decode_gradient, encode_gradient,
                             gen_synthetic, read_gradient, sparsity, write_gradient)


def test_all_zero_profile():
    v = gen_synthetic(8, SparsityProfile(1.0, seed=7))
    assert v.dtype == np.float32
    assert np.array_equal(v, np.zeros(8, dtype=np.float32))


def test_dense_profile_is_reproducible():
    p = SparsityProfile(0.0, value_law=ValueLaw.NORMAL, seed=7)
    a, b = gen_synthetic(8, p), gen_synthetic(8, p)
    assert np.count_nonzero(a) == 8 and np.all(np.isfinite(a))
    assert a.tobytes() == b.tobytes()


def test_exact_zero_count_at_scale():
    v = gen_synthetic(10 ** 6, SparsityProfile(0.696, seed=1))
    zeros = 0
    for chunk in np.array_split(v, 100):  # direct scan, independent of sparsity()
        zeros += int((chunk == 0).sum())
    assert zeros == 696_000
    assert sparsity(v) == 0.696


def test_vgg19_preset_sparsity_is_exact():
    assert PRESETS["vgg19"] == 0.304
    v = gen_synthetic(250_000, SparsityProfile(PRESETS["vgg19"], seed=3))
    assert sparsity(v) == 0.304


def test_clustered_runs_are_contiguous():
    v = gen_synthetic(10_000, SparsityProfile(0.5, Distribution.CLUSTERED, seed=2,
                                              run_length=256))
    assert sparsity(v) == 0.5
    zero = (v == 0).astype(np.int8)
    runs = np.count_nonzero(np.diff(zero) == 1) + zero[0]
    assert runs <= 5000 // 256 + 2


def test_integer_law_values_in_range():
    v = gen_synthetic(1000, SparsityProfile(0.3, value_law=ValueLaw.INTEGER, seed=0, int_bits=4))
    assert v.dtype == np.int32
    nz = v[v != 0]
    assert nz.min() >= 1 and nz.max() <= 15


@pytest.mark.parametrize("bad", [-0.1, 1.5])
def test_rejects_bad_sparsity(bad):
    with pytest.raises(ValueError):
        SparsityProfile(bad)


def test_rejects_empty():
    with pytest.raises(ValueError):
        gen_synthetic(0, SparsityProfile(0.5))


def test_sparsity_examples():
    assert sparsity(np.zeros(5, np.float32)) == 1.0
    assert sparsity(np.array([0, 1.5, 0, -2.0], np.float32)) == 0.5


def test_relative_error_examples():
    assert average_relative_error(np.array([2.0]), np.array([1.0])).relative == 0.5
    err = average_relative_error(np.array([1.0, 2, 4]), np.array([1.0, 1, 4]))
    assert err.relative == pytest.approx(1 / 6)


def test_relative_error_splits_zero_positions():
    err = average_relative_error(np.array([0.0, 2.0, 0.0]), np.array([0.5, 2.0, -0.25]))
    assert err.relative == 0.0
    assert err.zero_abs == pytest.approx(0.375)
    assert (err.n_nonzero, err.n_zero) == (1, 2)


def test_relative_error_length_mismatch():
    with pytest.raises(ValueError):
        average_relative_error(np.zeros(3), np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 3000), s=st.floats(0, 1), seed=st.integers(0, 2 ** 32),
       dist=st.sampled_from(list(Distribution)), law=st.sampled_from(list(ValueLaw)))
def test_generator_properties(n, s, seed, dist, law):
    p = SparsityProfile(s, dist, law, seed=seed, run_length=17)
    v = gen_synthetic(n, p)
    assert int((v == 0).sum()) == round(s * n)
    assert v.tobytes() == gen_synthetic(n, p).tobytes()
    assert average_relative_error(v, v).relative == 0.0


def test_file_round_trip(tmp_path):
    for v in (gen_synthetic(100, SparsityProfile(0.5, seed=1)),
              gen_synthetic(100, SparsityProfile(0.5, value_law=ValueLaw.INTEGER, seed=1))):
        path = tmp_path / "g.lhcg"
        write_gradient(path, v)
        back = read_gradient(path)
        assert back.dtype == v.dtype and np.array_equal(back, v)


def test_file_layout_is_bit_exact():
    data = encode_gradient(np.array([1.0, 0.0], np.float32))
    assert data[:4] == b"LHCG" and data[4] == 1
    assert data[5:13] == (2).to_bytes(8, "little")
    assert data[13] == 0x00
    assert data[14:] == np.array([1.0, 0.0], "<f4").tobytes()
    assert encode_gradient(np.array([3], np.int32))[13] == 0x01


@pytest.mark.parametrize("mutate", [lambda d: b"XXXX" + d[4:], lambda d: d[:-1],
                                    lambda d: d[:13] + b"\x07" + d[14:]])
def test_corrupt_files_rejected(mutate):
    with pytest.raises(ValueError):
        decode_gradient(mutate(encode_gradient(np.ones(3, np.float32))))


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        encode_gradient(np.array([np.nan], np.float32))
