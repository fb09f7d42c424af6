"""Decomposition of quantized integers into 4-bit slice planes.

Weights use the signed representation: a (3n+4)-bit signed value becomes one
4-bit signed high-order plane plus n sign-extended low-order planes, so
near-zero values of either sign produce all-zero HO slices. Activations use
straightforward unsigned slicing, with an optional distribution-based LO
width (l in {4,5,6}) that widens the HO skip range; slices stay 4 bits wide
by zero-padding short HO fields and truncating LO LSBs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .quant import QuantParams


@dataclass(frozen=True)
class SlicePlane:
    nibbles: np.ndarray  # 2-D int8; signed values in [-8,7], unsigned in [0,15]
    signed: bool
    shift: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.nibbles, dtype=np.int8)
        lo, hi = (-8, 7) if self.signed else (0, 15)
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise ValueError(f"nibble out of range for signed={self.signed}")
        object.__setattr__(self, "nibbles", arr)

    @property
    def rows(self) -> int:
        return self.nibbles.shape[0]

    @property
    def cols(self) -> int:
        return self.nibbles.shape[1]


@dataclass(frozen=True)
class SlicedMatrix:
    rows: int
    cols: int
    planes: tuple[SlicePlane, ...]  # highest order first
    source_bits: int
    scheme: str  # "sbr_weight" | "straight_activation" | "dbs_activation"

    @property
    def ho(self) -> SlicePlane:
        return self.planes[0]

    @property
    def lo_planes(self) -> tuple[SlicePlane, ...]:
        return self.planes[1:]


def slice_sbr(w: np.ndarray, source_bits: int) -> SlicedMatrix:
    """Signed bit-slice decomposition of a (3n+4)-bit signed matrix.

    The carry rule is applied iteratively from the lowest slice upward: each
    3-bit field gets the sign bit of the remaining high part appended (making
    it a signed nibble) and the high part is incremented to compensate.
    """
    n = (source_bits - 4) // 3
    if source_bits != 3 * n + 4 or n < 0:
        raise ValueError(f"source_bits must be 3n+4, got {source_bits}")
    w = np.asarray(w)
    lo_bound, hi_bound = -(1 << (source_bits - 1)), (1 << (source_bits - 1)) - 1
    if w.size and (w.min() < lo_bound or w.max() > hi_bound):
        raise ValueError(f"element out of range for {source_bits}-bit signed")
    t = w.astype(np.int64)
    lo_planes = []
    for j in range(n):
        fields = t & 7
        t >>= 3
        sign = (t < 0).astype(np.int64)
        lo_planes.append(SlicePlane((fields - 8 * sign).astype(np.int8), signed=True, shift=3 * j))
        t += sign
    ho = SlicePlane(t.astype(np.int8), signed=True, shift=3 * n)
    planes = (ho,) + tuple(reversed(lo_planes))
    return SlicedMatrix(w.shape[0], w.shape[1], planes, source_bits, "sbr_weight")


def slice_activation(x: np.ndarray, params: QuantParams) -> SlicedMatrix:
    """Slice an unsigned activation matrix.

    With l == 4 this is plain (4k+4)-bit nibble slicing. With l in {5, 6}
    (types 2/3) the 8-bit value splits into an (8-l)-bit HO field zero-padded
    to 4 bits at shift l and the top 4 bits of the l-bit LO field at shift
    l-4; the dropped LO LSBs are truncated.
    """
    x = np.asarray(x)
    bits = params.bit_width
    l = params.lo_width
    if x.size and (x.min() < 0 or x.max() > (1 << bits) - 1):
        raise ValueError(f"element out of range for {bits}-bit unsigned")
    v = x.astype(np.int64)
    if l == 4:
        k = (bits - 4) // 4
        if bits != 4 * k + 4:
            raise ValueError(f"straight slicing needs 4k+4 source bits, got {bits}")
        planes = tuple(
            SlicePlane(((v >> (4 * j)) & 15).astype(np.int8), signed=False, shift=4 * j)
            for j in range(k, -1, -1)
        )
        return SlicedMatrix(x.shape[0], x.shape[1], planes, bits, "straight_activation")
    if bits != 8:
        raise ValueError("distribution-based slicing is defined for 8-bit activations")
    ho = SlicePlane((v >> l).astype(np.int8), signed=False, shift=l)
    lo = SlicePlane(((v & ((1 << l) - 1)) >> (l - 4)).astype(np.int8), signed=False, shift=l - 4)
    return SlicedMatrix(x.shape[0], x.shape[1], (ho, lo), bits, "dbs_activation")


def reconstruct(sm: SlicedMatrix) -> np.ndarray:
    """Sum of nibble planes weighted by their shifts. Exact for weights and
    straight activations; for DBS the truncated LO LSBs are lost (error
    below 2^(l-4))."""
    out = np.zeros((sm.rows, sm.cols), dtype=np.int64)
    for p in sm.planes:
        out += p.nibbles.astype(np.int64) << p.shift
    return out


_SCHEMES = ["sbr_weight", "straight_activation", "dbs_activation"]


def pack_nibbles(nibbles: np.ndarray) -> bytes:
    """Two nibbles per byte, first nibble in the high half; odd counts are
    zero-padded to a byte boundary."""
    flat = (np.asarray(nibbles).astype(np.int64) & 0xF).reshape(-1)
    if flat.size % 2:
        flat = np.concatenate([flat, np.zeros(1, dtype=np.int64)])
    return ((flat[0::2] << 4) | flat[1::2]).astype(np.uint8).tobytes()


def unpack_nibbles(raw: bytes, count: int, signed: bool) -> np.ndarray:
    b = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    flat = np.empty(b.size * 2, dtype=np.int64)
    flat[0::2] = b >> 4
    flat[1::2] = b & 0xF
    flat = flat[:count]
    if signed:
        flat = np.where(flat >= 8, flat - 16, flat)
    return flat.astype(np.int8)


def save_sliced(sm: SlicedMatrix, path) -> None:
    buf = bytearray()
    buf += struct.pack("<QQBBB", sm.rows, sm.cols, _SCHEMES.index(sm.scheme),
                       sm.source_bits, len(sm.planes))
    for p in sm.planes:
        payload = pack_nibbles(p.nibbles)
        buf += struct.pack("<BbI", int(p.signed), p.shift, len(payload))
        buf += payload
    with open(path, "wb") as f:
        f.write(bytes(buf))


def load_sliced(path) -> SlicedMatrix:
    with open(path, "rb") as f:
        raw = f.read()
    rows, cols, scheme_ix, source_bits, nplanes = struct.unpack_from("<QQBBB", raw, 0)
    off = struct.calcsize("<QQBBB")
    planes = []
    for _ in range(nplanes):
        signed, shift, plen = struct.unpack_from("<BbI", raw, off)
        off += struct.calcsize("<BbI")
        nib = unpack_nibbles(raw[off : off + plen], rows * cols, bool(signed))
        off += plen
        planes.append(SlicePlane(nib.reshape(rows, cols), signed=bool(signed), shift=shift))
    return SlicedMatrix(rows, cols, tuple(planes), source_bits, _SCHEMES[scheme_ix])
