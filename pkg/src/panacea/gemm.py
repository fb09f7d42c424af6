"""Exact bit-slice GEMM over compressed slice planes.

The product is evaluated as per-plane-pair GEMMs restricted to uncompressed
vector positions, plus a compensation term restoring the contribution of
skipped activation HO vectors (which all carry the skip nibble r). Two
algebraically identical compensation routes are supported: the direct form
sums weights at compressed positions (extra memory traffic), the reuse form
starts from a precomputed full-row-sum bias and subtracts the weights at
uncompressed positions that are already loaded for the main GEMMs.

A dense integer GEMM oracle is provided for verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quant import QuantParams, quantize_asymmetric
from .rle import (
    ACTIVATION,
    WEIGHT,
    CompressedPlane,
    compress_plane,
    uncompressed_mask,
)
from .slicing import SlicedMatrix, reconstruct, slice_activation, slice_sbr

EQ5 = "eq5"  # direct compensation over compressed positions
EQ6 = "eq6"  # weight-reuse compensation over uncompressed positions

_INT32_MIN = np.iinfo(np.int32).min
_INT32_MAX = np.iinfo(np.int32).max


@dataclass
class WorkloadCounters:
    mults: int = 0
    adds: int = 0
    dram_nibbles: int = 0
    sram_read_nibbles: int = 0
    sram_write_nibbles: int = 0
    compensation_mults: int = 0
    compensation_adds: int = 0
    rle_index_nibbles: int = 0

    def __add__(self, other: "WorkloadCounters") -> "WorkloadCounters":
        return WorkloadCounters(
            **{k: getattr(self, k) + getattr(other, k) for k in self.__dict__}
        )

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class GemmOperands:
    w: SlicedMatrix
    x: SlicedMatrix
    w_ho: CompressedPlane
    x_ho: CompressedPlane
    params_w: QuantParams
    params_x: QuantParams
    b_hat: np.ndarray  # int32, length M

    def __post_init__(self):
        if self.w.cols != self.x.rows:
            raise ValueError("weight cols must equal activation rows")
        if self.x_ho.skip_value != self.params_x.skip_value:
            raise ValueError("activation stream r does not match params")
        if len(self.x.planes) != 2 or self.x.ho.shift != self.params_x.lo_width:
            raise ValueError("activation must be two planes with HO shift l")

    @property
    def w_int(self) -> np.ndarray:
        return reconstruct(self.w)

    @property
    def b_prime_rowsum(self) -> np.ndarray:
        """Row sums of the weight scaled by r*2^l; the offline-precomputed
        part of the reuse-form compensation (stored M x 1, broadcast)."""
        r = self.params_x.skip_value
        l = self.params_x.lo_width
        return (r << l) * self.w_int.sum(axis=1)


@dataclass
class GemmResult:
    acc: np.ndarray  # int32 M x N product accumulator (bias not included)
    counters: WorkloadCounters

    def with_bias(self, b_hat: np.ndarray) -> np.ndarray:
        return _check_int32(self.acc.astype(np.int64) + np.asarray(b_hat, dtype=np.int64)[:, None])


def _check_int32(acc: np.ndarray) -> np.ndarray:
    if acc.size and (acc.max() > _INT32_MAX or acc.min() < _INT32_MIN):
        raise OverflowError("accumulator exceeds int32 range")
    return acc.astype(np.int32)


def dense_int_gemm_oracle(w_int: np.ndarray, x_int: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
    """Reference integer GEMM plus folded bias broadcast; ground truth for
    all equivalence tests."""
    acc = np.asarray(w_int, dtype=np.int64) @ np.asarray(x_int, dtype=np.int64)
    acc += np.asarray(b_hat, dtype=np.int64)[:, None]
    return _check_int32(acc)


def dense_int_gemm_loops(w_int, x_int, b_hat) -> np.ndarray:
    """Independently written triple-loop accumulation (k innermost swapped to
    outermost) used to cross-check the vectorized oracle on small cases."""
    m, k = np.asarray(w_int).shape
    k2, n = np.asarray(x_int).shape
    assert k == k2
    acc = [[int(b_hat[i]) for _ in range(n)] for i in range(m)]
    for kk in range(k):
        for i in range(m):
            wik = int(w_int[i][kk])
            for j in range(n):
                acc[i][j] += wik * int(x_int[kk][j])
    return _check_int32(np.asarray(acc, dtype=np.int64))


def prepare_operands(
    w_int: np.ndarray,
    x_uint: np.ndarray,
    params_w: QuantParams,
    params_x: QuantParams,
    b_float: np.ndarray | None = None,
) -> GemmOperands:
    """Slice, compress and bias-fold raw quantized matrices into engine
    operands."""
    from .quant import fold_bias

    w_bits = params_w.bit_width
    w = slice_sbr(w_int, w_bits)
    x = slice_activation(x_uint, params_x)
    w_ho = compress_plane(w.ho, WEIGHT, 0)
    x_ho = compress_plane(x.ho, ACTIVATION, params_x.skip_value)
    b = np.zeros(w.rows, dtype=np.float64) if b_float is None else np.asarray(b_float)
    b_hat = fold_bias(w_int, params_x.zero_point, b, params_w.scale, params_x.scale)
    return GemmOperands(w, x, w_ho, x_ho, params_w, params_x, b_hat)


def _element_masks(ops: GemmOperands) -> tuple[np.ndarray, np.ndarray]:
    """Expand vector-level uncompressed masks to element masks MW (MxK) and
    MX (KxN)."""
    m, k, n = ops.w.rows, ops.w.cols, ops.x.cols
    wu = uncompressed_mask(ops.w_ho)  # (K streams, M/4 vectors)
    xu = uncompressed_mask(ops.x_ho)  # (K streams, N/4 vectors)
    mw = np.repeat(wu.T, 4, axis=0)[:m, :]
    mx = np.repeat(xu, 4, axis=1)[:, :n]
    return mw.astype(np.int64), mx.astype(np.int64)


def count_workload(ops: GemmOperands, mode: str) -> WorkloadCounters:
    """Hardware workload of the skipped GEMM on these operands: 4b x 4b
    multiplications, additions and nibble traffic, from the actual
    vector-level sparsity patterns."""
    m, k, n = ops.w.rows, ops.w.cols, ops.x.cols
    mv, nv = -(-m // 4), -(-n // 4)
    wu = uncompressed_mask(ops.w_ho)
    xu = uncompressed_mask(ops.x_ho)
    uw_per_k = wu.sum(axis=1).astype(np.int64)
    ux_per_k = xu.sum(axis=1).astype(np.int64)
    n_wlo = len(ops.w.lo_planes)
    n_xlo = len(ops.x.lo_planes)

    ops_hoho = int((uw_per_k * ux_per_k).sum())
    ops_holo = int(uw_per_k.sum()) * nv * n_xlo
    ops_loho = int(ux_per_k.sum()) * mv * n_wlo
    ops_lolo = k * mv * nv * n_wlo * n_xlo
    total_ops = ops_hoho + ops_holo + ops_loho + ops_lolo

    w_planes_total = n_wlo + 1
    comp_x_compressed = int(ops.x_ho.original_vector_count - xu.sum())
    comp_x_uncompressed = int(xu.sum())

    c = WorkloadCounters()
    c.mults = 16 * total_ops
    c.adds = 16 * total_ops
    c.dram_nibbles = (
        4 * int(uw_per_k.sum()) + n_wlo * m * k + 4 * int(ux_per_k.sum()) + n_xlo * k * n
    )
    c.sram_read_nibbles = 8 * total_ops
    c.sram_write_nibbles = m * n * 8  # int32 outputs
    c.compensation_mults = 16 * mv * nv
    if mode == EQ5:
        c.compensation_adds = m * w_planes_total * comp_x_compressed
        c.dram_nibbles += m * w_planes_total * comp_x_compressed
    elif mode == EQ6:
        c.compensation_adds = m * w_planes_total * comp_x_uncompressed
    else:
        raise ValueError(f"unknown compensation mode {mode!r}")
    c.rle_index_nibbles = ops.w_ho.record_count + ops.x_ho.record_count
    return c


def aqs_gemm(ops: GemmOperands, mode: str = EQ6) -> GemmResult:
    """Skipped bit-slice GEMM with compensation; both modes produce the exact
    dense product of the weight with the (possibly DBS-truncated)
    activation."""
    if mode not in (EQ5, EQ6):
        raise ValueError(f"unknown compensation mode {mode!r}")
    mw, mx = _element_masks(ops)
    acc = np.zeros((ops.w.rows, ops.x.cols), dtype=np.int64)
    for wp in ops.w.planes:
        wmat = wp.nibbles.astype(np.int64)
        if wp is ops.w.ho:
            wmat = wmat * mw
        for xp in ops.x.planes:
            xmat = xp.nibbles.astype(np.int64)
            if xp is ops.x.ho:
                xmat = xmat * mx
            acc += (wmat @ xmat) << (wp.shift + xp.shift)

    r = ops.params_x.skip_value
    l = ops.params_x.lo_width
    w_int = ops.w_int
    if mode == EQ5:
        acc += (r << l) * (w_int @ (1 - mx))
    else:
        acc += ops.b_prime_rowsum[:, None] - (r << l) * (w_int @ mx)

    return GemmResult(acc=_check_int32(acc), counters=count_workload(ops, mode))


def requantize(
    acc: np.ndarray, s_w: float, s_x: float, next_params: QuantParams
) -> np.ndarray:
    """Rescale accumulated results to float and re-quantize them for the
    next layer with the calibrated parameters."""
    if next_params.scheme != "asymmetric":
        raise ValueError("next-layer params must be asymmetric")
    y = s_w * s_x * np.asarray(acc, dtype=np.float64)
    q, _ = quantize_asymmetric(y, next_params.bit_width, params=next_params)
    return q
