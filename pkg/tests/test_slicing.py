import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panacea.quant import QuantParams
from panacea.slicing import (
    SlicePlane,
    load_sliced,
    pack_nibbles,
    reconstruct,
    save_sliced,
    slice_activation,
    slice_sbr,
    unpack_nibbles,
)


def act_params(l):
    return QuantParams(1.0, 0, 8, "asymmetric", dbs_type=l - 3, lo_width=l)


def test_plane_range_validation():
    with pytest.raises(ValueError):
        SlicePlane(np.array([[8]], dtype=np.int8), signed=True, shift=0)
    with pytest.raises(ValueError):
        SlicePlane(np.array([[-1]], dtype=np.int8), signed=False, shift=0)


def test_sbr_plane_shapes():
    sm = slice_sbr(np.zeros((2, 3), dtype=np.int64), 10)
    assert [p.shift for p in sm.planes] == [6, 3, 0]
    assert all(p.signed for p in sm.planes)
    assert sm.ho is sm.planes[0]


def test_sbr_near_zero_gives_zero_ho():
    vals = np.arange(-8, 8).reshape(1, -1)
    sm = slice_sbr(vals, 7)
    assert not sm.ho.nibbles.any()


def test_sbr_rejects_bad_widths():
    with pytest.raises(ValueError):
        slice_sbr(np.zeros((1, 1)), 8)
    with pytest.raises(ValueError):
        slice_sbr(np.array([[64]]), 7)


def test_sbr_exhaustive_7bit():
    vals = np.arange(-64, 64).reshape(1, -1)
    assert np.array_equal(reconstruct(slice_sbr(vals, 7)), vals)


def test_sbr_exhaustive_10bit():
    vals = np.arange(-512, 512).reshape(1, -1)
    assert np.array_equal(reconstruct(slice_sbr(vals, 10)), vals)


def test_sbr_trivial_4bit():
    vals = np.arange(-8, 8).reshape(1, -1)
    sm = slice_sbr(vals, 4)
    assert len(sm.planes) == 1
    assert np.array_equal(reconstruct(sm), vals)


def test_straight_slicing_exhaustive_8bit():
    vals = np.arange(256).reshape(1, -1)
    sm = slice_activation(vals, act_params(4))
    assert [p.shift for p in sm.planes] == [4, 0]
    assert np.array_equal(reconstruct(sm), vals)


@pytest.mark.parametrize("l", [5, 6])
def test_dbs_truncation_bound_exhaustive(l):
    vals = np.arange(256).reshape(1, -1)
    sm = slice_activation(vals, act_params(l))
    err = vals - reconstruct(sm)
    assert (0 <= err).all() and (err < (1 << (l - 4))).all()


def test_dbs_worked_example():
    # 85 = 01010101b under type 2: HO 0b0010 at shift 5, LO 0b1010 at shift 1
    sm = slice_activation(np.array([[85]]), act_params(5))
    assert sm.ho.nibbles[0, 0] == 0b0010 and sm.ho.shift == 5
    assert sm.planes[1].nibbles[0, 0] == 0b1010 and sm.planes[1].shift == 1


def test_activation_range_check():
    with pytest.raises(ValueError):
        slice_activation(np.array([[256]]), act_params(4))
    with pytest.raises(ValueError):
        slice_activation(np.array([[-1]]), act_params(4))


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    nib = rng.integers(-8, 8, size=45)
    raw = pack_nibbles(nib)
    assert len(raw) == 23  # two nibbles per byte, padded
    assert np.array_equal(unpack_nibbles(raw, 45, signed=True), nib)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    bits=st.sampled_from([4, 7, 10]),
    rows=st.integers(1, 12),
    cols=st.integers(1, 12),
)
def test_sbr_roundtrip_property(seed, bits, rows, cols):
    rng = np.random.default_rng(seed)
    hi = 1 << (bits - 1)
    vals = rng.integers(-hi, hi, size=(rows, cols))
    assert np.array_equal(reconstruct(slice_sbr(vals, bits)), vals)


@pytest.mark.parametrize("maker", [
    lambda: slice_sbr(np.random.default_rng(5).integers(-512, 512, (6, 9)), 10),
    lambda: slice_activation(np.random.default_rng(6).integers(0, 256, (7, 5)), act_params(5)),
])
def test_sliced_file_roundtrip(tmp_path, maker):
    sm = maker()
    p = tmp_path / "m.slc"
    save_sliced(sm, p)
    out = load_sliced(p)
    assert out.scheme == sm.scheme and out.source_bits == sm.source_bits
    assert len(out.planes) == len(sm.planes)
    for a, b in zip(out.planes, sm.planes):
        assert a.signed == b.signed and a.shift == b.shift
        assert np.array_equal(a.nibbles, b.nibbles)
