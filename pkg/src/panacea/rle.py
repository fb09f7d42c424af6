"""Run-length encoding of slice planes over length-4 vectors.

Weight HO planes group 4x1 vectors down each column; activation HO planes
group 1x4 vectors along each row. A vector is compressible when all four
nibbles equal the skip value (0 for weights, r for activations). Runs are
counted in a 4-bit field; longer runs are realized with explicit padding
records carrying a compressible vector at run 15. LO planes are never
compressed (they are treated as dense).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .slicing import SlicePlane

VECTOR_LEN = 4
MAX_RUN = 15

WEIGHT = "weight_4x1"
ACTIVATION = "activation_1x4"


class MalformedStream(Exception):
    pass


@dataclass(frozen=True)
class Record:
    run: int  # compressed vectors skipped immediately before this vector
    vector: tuple[int, int, int, int]


@dataclass(frozen=True)
class CompressedPlane:
    orientation: str  # WEIGHT | ACTIVATION
    skip_value: int  # nibble pattern of compressible vectors (0 for weights)
    records: tuple[Record, ...]
    trailing_run_total: int  # compressed vectors after the last record
    original_vector_count: int  # padded vector count of the plane
    rows: int  # true (unpadded) plane dims
    cols: int
    signed: bool
    shift: int

    @property
    def uncompressed_vector_count(self) -> int:
        pad = (self.skip_value,) * VECTOR_LEN
        return sum(1 for r in self.records if tuple(r.vector) != pad)

    @property
    def record_count(self) -> int:
        return len(self.records)


def _vector_grid(plane: SlicePlane, orientation: str, r: int) -> np.ndarray:
    """Plane as a (streams, vectors, 4) array padded with the skip value.

    Weights stream down columns (one stream per column k); activations stream
    along rows (one stream per row k)."""
    nib = plane.nibbles.astype(np.int64)
    if orientation == WEIGHT:
        nib = nib.T  # stream axis first
    elif orientation != ACTIVATION:
        raise ValueError(f"bad orientation {orientation!r}")
    streams, length = nib.shape
    padded_len = -(-length // VECTOR_LEN) * VECTOR_LEN
    if padded_len != length:
        pad = np.full((streams, padded_len - length), r, dtype=np.int64)
        nib = np.concatenate([nib, pad], axis=1)
    return nib.reshape(streams, padded_len // VECTOR_LEN, VECTOR_LEN)


def compressible_mask(plane: SlicePlane, orientation: str, r: int) -> np.ndarray:
    """Boolean (streams, vectors) grid: True where the vector is all skip
    values (including logical padding)."""
    grid = _vector_grid(plane, orientation, r)
    return (grid == r).all(axis=2)


def vector_sparsity(plane: SlicePlane, orientation: str, r: int) -> float:
    mask = compressible_mask(plane, orientation, r)
    return float(mask.mean()) if mask.size else 0.0


def compress_plane(plane: SlicePlane, orientation: str, r: int) -> CompressedPlane:
    if orientation == WEIGHT and r != 0:
        raise ValueError("weight planes compress all-zero vectors only")
    grid = _vector_grid(plane, orientation, r)
    mask = (grid == r).all(axis=2)
    records: list[Record] = []
    pad_vec = (r,) * VECTOR_LEN
    pending = 0
    for s in range(grid.shape[0]):
        for v in range(grid.shape[1]):
            if mask[s, v]:
                pending += 1
                continue
            while pending > MAX_RUN:
                records.append(Record(MAX_RUN, pad_vec))
                pending -= MAX_RUN + 1
            records.append(Record(pending, tuple(int(x) for x in grid[s, v])))
            pending = 0
    return CompressedPlane(
        orientation=orientation,
        skip_value=r,
        records=tuple(records),
        trailing_run_total=pending,
        original_vector_count=grid.shape[0] * grid.shape[1],
        rows=plane.rows,
        cols=plane.cols,
        signed=plane.signed,
        shift=plane.shift,
    )


def decompress_plane(cp: CompressedPlane) -> SlicePlane:
    vectors = []
    pad = [cp.skip_value] * VECTOR_LEN
    for rec in cp.records:
        vectors.extend([pad] * rec.run)
        vectors.append(list(rec.vector))
    vectors.extend([pad] * cp.trailing_run_total)
    if len(vectors) != cp.original_vector_count:
        raise MalformedStream(
            f"decoded {len(vectors)} vectors, expected {cp.original_vector_count}"
        )
    if cp.orientation == WEIGHT:
        streams, length = cp.cols, cp.rows
    else:
        streams, length = cp.rows, cp.cols
    padded_len = -(-length // VECTOR_LEN) * VECTOR_LEN
    flat = np.asarray(vectors, dtype=np.int8).reshape(streams, padded_len)[:, :length]
    nib = flat.T if cp.orientation == WEIGHT else flat
    return SlicePlane(np.ascontiguousarray(nib), signed=cp.signed, shift=cp.shift)


def uncompressed_mask(cp: CompressedPlane) -> np.ndarray:
    """Boolean (streams, vectors) grid of uncompressed vector positions,
    derived by fully decoding the run indices to absolute positions."""
    flags = np.zeros(cp.original_vector_count, dtype=bool)
    pos = 0
    pad = (cp.skip_value,) * VECTOR_LEN
    for rec in cp.records:
        pos += rec.run
        # padding records carry a compressible vector and stay skippable
        flags[pos] = tuple(rec.vector) != pad
        pos += 1
    pos += cp.trailing_run_total
    if pos != cp.original_vector_count:
        raise MalformedStream("run totals exceed original vector count")
    streams = cp.cols if cp.orientation == WEIGHT else cp.rows
    return flags.reshape(streams, -1)


def compressed_size_bytes(cp: CompressedPlane) -> float:
    """Stream payload: a 4-bit run index plus 4 vector nibbles per record."""
    return cp.record_count * (4 + 16) / 8


def uncompressed_size_bytes(cp: CompressedPlane) -> float:
    return cp.original_vector_count * VECTOR_LEN / 2


def to_bytes(cp: CompressedPlane) -> bytes:
    buf = bytearray()
    buf += struct.pack(
        "<BBQQIIB",
        0 if cp.orientation == WEIGHT else 1,
        cp.skip_value,
        cp.rows,
        cp.cols,
        cp.original_vector_count,
        cp.trailing_run_total,
        int(cp.signed),
    )
    buf += struct.pack("<bI", cp.shift, len(cp.records))
    for rec in cp.records:
        v = rec.vector
        buf += struct.pack(
            "<BBB", rec.run, ((v[0] & 0xF) << 4) | (v[1] & 0xF), ((v[2] & 0xF) << 4) | (v[3] & 0xF)
        )
    return bytes(buf)


def from_bytes(raw: bytes) -> CompressedPlane:
    head = "<BBQQIIB"
    orient, r, rows, cols, ovc, trailing, signed = struct.unpack_from(head, raw, 0)
    off = struct.calcsize(head)
    shift, nrec = struct.unpack_from("<bI", raw, off)
    off += struct.calcsize("<bI")
    records = []
    for _ in range(nrec):
        if off + 3 > len(raw):
            raise MalformedStream("truncated record stream")
        run, hi, lo = struct.unpack_from("<BBB", raw, off)
        off += 3
        if run > MAX_RUN:
            raise MalformedStream(f"run index {run} exceeds 4-bit field")
        nibs = (hi >> 4, hi & 0xF, lo >> 4, lo & 0xF)
        if signed:
            nibs = tuple(x - 16 if x >= 8 else x for x in nibs)
        records.append(Record(run, nibs))
    return CompressedPlane(
        orientation=WEIGHT if orient == 0 else ACTIVATION,
        skip_value=r,
        records=tuple(records),
        trailing_run_total=trailing,
        original_vector_count=ovc,
        rows=rows,
        cols=cols,
        signed=bool(signed),
        shift=shift,
    )
