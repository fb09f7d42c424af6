import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panacea import tensorio
from panacea.tensorio import (
    BadMagic,
    BadVersion,
    Matrix,
    TensorFormatError,
    TruncatedFile,
    load_matrix,
    save_matrix,
)


def test_rejects_non_2d():
    with pytest.raises(ValueError):
        Matrix(np.zeros(3, dtype=np.float32))


def test_rejects_unsupported_dtype():
    with pytest.raises(ValueError):
        Matrix(np.zeros((2, 2), dtype=np.float64))


@pytest.mark.parametrize("dtype", [np.float32, np.int32, np.uint8, np.int8])
def test_roundtrip_all_dtypes(tmp_path, dtype):
    rng = np.random.default_rng(0)
    if dtype == np.float32:
        arr = rng.normal(size=(5, 7)).astype(dtype)
    else:
        info = np.iinfo(dtype)
        arr = rng.integers(info.min, info.max, size=(5, 7)).astype(dtype)
    p = tmp_path / "m.aqst"
    save_matrix(Matrix(arr), p)
    out = load_matrix(p)
    assert out == Matrix(arr)


def test_file_size_is_header_plus_payload(tmp_path):
    p = tmp_path / "one.aqst"
    save_matrix(Matrix(np.zeros((1, 1), dtype=np.float32)), p)
    # 4 magic + 4 flags + 16 dims + 4 payload
    assert p.stat().st_size == 28


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.aqst"
    p.write_bytes(b"NOPE" + b"\x00" * 30)
    with pytest.raises(BadMagic):
        load_matrix(p)


def test_bad_version(tmp_path):
    p = tmp_path / "v.aqst"
    save_matrix(Matrix(np.zeros((1, 1), dtype=np.float32)), p)
    raw = bytearray(p.read_bytes())
    raw[4] = 99
    p.write_bytes(bytes(raw))
    with pytest.raises(BadVersion):
        load_matrix(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "t.aqst"
    save_matrix(Matrix(np.zeros((4, 4), dtype=np.int32)), p)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(TruncatedFile):
        load_matrix(p)


def test_csv_load(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1,2,3\n4,5,6\n")
    m = load_matrix(p)
    assert m.dtype == np.float32
    assert np.array_equal(m.data, [[1, 2, 3], [4, 5, 6]])


def test_csv_ragged(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(TensorFormatError):
        load_matrix(p)


def test_csv_non_numeric(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text("1,foo\n")
    with pytest.raises(TensorFormatError):
        load_matrix(p)


@settings(max_examples=50, deadline=None)
@given(
    rows=st.integers(1, 20),
    cols=st.integers(1, 20),
    seed=st.integers(0, 2**31),
)
def test_roundtrip_property(rows, cols, seed):
    import tempfile

    rng = np.random.default_rng(seed)
    arr = rng.integers(-128, 128, size=(rows, cols)).astype(np.int8)
    with tempfile.TemporaryDirectory() as d:
        p = f"{d}/p.aqst"
        save_matrix(Matrix(arr), p)
        assert load_matrix(p) == Matrix(arr)


def test_little_endian_on_disk(tmp_path):
    p = tmp_path / "e.aqst"
    save_matrix(Matrix(np.array([[0x01020304]], dtype=np.int32)), p)
    assert p.read_bytes()[-4:] == b"\x04\x03\x02\x01"


def test_header_layout():
    h = tensorio.header_bytes(Matrix(np.zeros((3, 9), dtype=np.uint8)))
    assert h[:4] == b"AQST"
    assert h[4] == 1  # version
    assert h[5] == 2  # uint8 code
    assert h[6] == 2  # ndim
    assert h[7] == 0  # pad
    assert int.from_bytes(h[8:16], "little") == 3
    assert int.from_bytes(h[16:24], "little") == 9
