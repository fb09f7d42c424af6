"""Bit-exact matrix load/store: the AQST binary format plus CSV ingestion.

All matrices are 2-D, row-major, little-endian on disk. CSV is a convenience
path for calibration data and always loads as float32; the binary format is
the canonical interchange for quantized artifacts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"AQST"
VERSION = 1

_DTYPE_CODES = {
    np.dtype(np.float32): 0,
    np.dtype(np.int32): 1,
    np.dtype(np.uint8): 2,
    np.dtype(np.int8): 3,
}
_CODE_DTYPES = {code: dt for dt, code in _DTYPE_CODES.items()}

SUPPORTED_DTYPES = tuple(str(dt) for dt in _DTYPE_CODES)


class TensorFormatError(Exception):
    """Base for malformed AQST files."""


class BadMagic(TensorFormatError):
    pass


class BadVersion(TensorFormatError):
    pass


class TruncatedFile(TensorFormatError):
    pass


@dataclass(frozen=True)
class Matrix:
    """A 2-D tensor with a restricted dtype set.

    ``data`` is row-major and always C-contiguous.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if arr.ndim != 2:
            raise ValueError(f"Matrix must be 2-D, got shape {arr.shape}")
        if arr.dtype not in _DTYPE_CODES:
            raise ValueError(f"unsupported dtype {arr.dtype}; must be one of {SUPPORTED_DTYPES}")
        object.__setattr__(self, "data", np.ascontiguousarray(arr))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __eq__(self, other) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )


def header_bytes(m: Matrix) -> bytes:
    code = _DTYPE_CODES[m.dtype]
    return MAGIC + struct.pack("<BBBB", VERSION, code, 2, 0) + struct.pack("<QQ", m.rows, m.cols)


def save_matrix(m: Matrix, path) -> None:
    """Write ``m`` in the AQST layout: magic, version, dtype code, ndim, pad,
    dims as u64 little-endian, then the raw row-major payload."""
    payload = m.data.astype(m.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    Path(path).write_bytes(header_bytes(m) + payload)


def _load_aqst(raw: bytes, path) -> Matrix:
    if len(raw) < 8:
        raise TruncatedFile(f"{path}: file shorter than fixed header")
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    version, code, ndim, pad = struct.unpack("<BBBB", raw[4:8])
    if version != VERSION:
        raise BadVersion(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    if ndim != 2:
        raise TensorFormatError(f"{path}: only 2-D tensors supported, got ndim={ndim}")
    if pad != 0:
        raise TensorFormatError(f"{path}: nonzero pad byte")
    dims_end = 8 + 8 * ndim
    if len(raw) < dims_end:
        raise TruncatedFile(f"{path}: truncated dims")
    rows, cols = struct.unpack("<QQ", raw[8:dims_end])
    dtype = _CODE_DTYPES[code]
    nbytes = rows * cols * dtype.itemsize
    if nbytes > 1 << 40:
        raise TensorFormatError(f"{path}: dims {rows}x{cols} overflow sanity limit")
    body = raw[dims_end:]
    if len(body) != nbytes:
        raise TruncatedFile(f"{path}: expected {nbytes} payload bytes, got {len(body)}")
    arr = np.frombuffer(body, dtype=dtype.newbyteorder("<")).astype(dtype).reshape(rows, cols)
    return Matrix(arr)


def _load_csv(path) -> Matrix:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            try:
                rows.append([float(c) for c in cells])
            except ValueError as e:
                raise TensorFormatError(f"{path}:{lineno}: non-numeric CSV cell") from e
    if not rows:
        raise TensorFormatError(f"{path}: empty CSV")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise TensorFormatError(f"{path}: ragged CSV rows (widths {sorted(widths)})")
    return Matrix(np.asarray(rows, dtype=np.float32))


def load_matrix(path) -> Matrix:
    """Load a matrix, dispatching on extension: ``.csv`` as float32 text,
    anything else as AQST binary."""
    p = Path(path)
    if p.suffix.lower() == ".csv":
        return _load_csv(p)
    return _load_aqst(p.read_bytes(), p)
