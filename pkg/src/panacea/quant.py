"""Uniform quantization, PTQ calibration, bias folding, zero-point
manipulation and distribution-based slice-width selection.

Weights use symmetric (signed) quantization, activations asymmetric
(unsigned). All float->int rounding is round-half-to-even.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from statistics import NormalDist

import numpy as np

# LO-slice half-widths compared against std*z when picking the slice width.
# lo_width l in {4,5,6} <=> dbs type 1/2/3; half-width is 2^(l-1).
DBS_HALF_WIDTHS = {4: 8, 5: 16, 6: 32}


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int
    bit_width: int
    scheme: str  # "symmetric" | "asymmetric"
    dbs_type: int = 1
    lo_width: int = 4
    skip_value: int = 0

    def __post_init__(self):
        if self.scheme not in ("symmetric", "asymmetric"):
            raise ValueError(f"bad scheme {self.scheme!r}")
        if self.scheme == "symmetric" and self.zero_point != 0:
            raise ValueError("symmetric quantization requires zero_point == 0")
        if self.lo_width not in DBS_HALF_WIDTHS:
            raise ValueError(f"lo_width must be 4, 5 or 6, got {self.lo_width}")
        if self.dbs_type != self.lo_width - 3:
            raise ValueError("dbs_type and lo_width must satisfy type == l - 3")
        if not 0 <= self.zero_point < (1 << self.bit_width):
            raise ValueError("zero_point out of range for bit width")

    @property
    def qmin(self) -> int:
        return -(1 << (self.bit_width - 1)) if self.scheme == "symmetric" else 0

    @property
    def qmax(self) -> int:
        if self.scheme == "symmetric":
            return (1 << (self.bit_width - 1)) - 1
        return (1 << self.bit_width) - 1

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "zero_point": self.zero_point,
            "bit_width": self.bit_width,
            "scheme": self.scheme,
            "dbs_type": self.dbs_type,
            "lo_width": self.lo_width,
            "skip_value": self.skip_value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "QuantParams":
        return cls(
            scale=float(d["scale"]),
            zero_point=int(d["zero_point"]),
            bit_width=int(d["bit_width"]),
            scheme=str(d["scheme"]),
            dbs_type=int(d.get("dbs_type", 1)),
            lo_width=int(d.get("lo_width", 4)),
            skip_value=int(d.get("skip_value", 0)),
        )

    @classmethod
    def from_json(cls, s: str) -> "QuantParams":
        return cls.from_dict(json.loads(s))


@dataclass
class CalibStats:
    """Running statistics over quantized calibration activations.

    Merging is associative/commutative so per-batch stats may be computed in
    parallel and combined in any order.
    """

    min: float = np.inf
    max: float = -np.inf
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(256, dtype=np.int64))
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    @property
    def std(self) -> float:
        if self.count == 0:
            return 0.0
        var = self.total_sq / self.count - self.mean**2
        return float(np.sqrt(max(var, 0.0)))

    def observe_quantized(self, q: np.ndarray) -> None:
        flat = q.reshape(-1).astype(np.int64)
        self.histogram += np.bincount(flat, minlength=256)[:256]
        self.count += flat.size
        self.total += float(flat.sum())
        self.total_sq += float((flat * flat).sum())

    def merge(self, other: "CalibStats") -> "CalibStats":
        out = CalibStats(
            min=min(self.min, other.min),
            max=max(self.max, other.max),
            histogram=self.histogram + other.histogram,
            count=self.count + other.count,
            total=self.total + other.total,
            total_sq=self.total_sq + other.total_sq,
        )
        return out


def _round(x: np.ndarray) -> np.ndarray:
    # np.rint rounds half to even
    return np.rint(x)


def quantize_symmetric(x: np.ndarray, b: int) -> tuple[np.ndarray, QuantParams]:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or not np.isfinite(x).all():
        raise ValueError("input must be non-empty with finite values")
    amax = float(np.abs(x).max())
    s = 2.0 * amax / ((1 << b) - 1) if amax > 0 else 1.0
    qmin, qmax = -(1 << (b - 1)), (1 << (b - 1)) - 1
    q = np.clip(_round(x / s), qmin, qmax)
    dtype = np.int8 if b <= 8 else np.int32
    return q.astype(dtype), QuantParams(scale=s, zero_point=0, bit_width=b, scheme="symmetric")


def quantize_symmetric_grouped(
    x: np.ndarray, b: int, group_size: int = 64
) -> tuple[np.ndarray, list[QuantParams]]:
    """Per-row-group symmetric quantization for weights (channel-wise mode)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape, dtype=np.int8 if b <= 8 else np.int32)
    params = []
    for start in range(0, x.shape[0], group_size):
        q, p = quantize_symmetric(x[start : start + group_size], b)
        out[start : start + group_size] = q
        params.append(p)
    return out, params


def quantize_asymmetric(
    x: np.ndarray, b: int, params: QuantParams | None = None
) -> tuple[np.ndarray, QuantParams]:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or not np.isfinite(x).all():
        raise ValueError("input must be non-empty with finite values")
    if params is not None:
        if params.scheme != "asymmetric":
            raise ValueError("reused params must be asymmetric")
        s, zp = params.scale, params.zero_point
    else:
        lo, hi = float(x.min()), float(x.max())
        if hi == lo:
            s, zp = 1.0, 0
        else:
            s = (hi - lo) / ((1 << b) - 1)
            zp = int(np.clip(_round(np.array(-lo / s)), 0, (1 << b) - 1))
        params = QuantParams(scale=s, zero_point=zp, bit_width=b, scheme="asymmetric",
                             skip_value=zp >> 4)
    qmax = (1 << b) - 1
    q = np.clip(_round(x / params.scale) + params.zero_point, 0, qmax)
    dtype = np.uint8 if b <= 8 else np.int32
    return q.astype(dtype), params


def dequantize(q: np.ndarray, params: QuantParams) -> np.ndarray:
    return (q.astype(np.float64) - params.zero_point) * params.scale


def fold_bias(
    w_int: np.ndarray, zp_x: int, b_float: np.ndarray, s_w: float, s_x: float
) -> np.ndarray:
    """Fold the zero-point cross term into the bias: returns the int32 vector
    b_hat = round(b/(s_w*s_x)) - zp_x * rowsum(W_int)."""
    w_int = np.asarray(w_int, dtype=np.int64)
    b_float = np.asarray(b_float, dtype=np.float64).reshape(-1)
    if b_float.shape[0] != w_int.shape[0]:
        raise ValueError("bias length must match weight rows")
    folded = _round(b_float / (s_w * s_x)).astype(np.int64) - zp_x * w_int.sum(axis=1)
    if folded.max(initial=0) > np.iinfo(np.int32).max or folded.min(initial=0) < np.iinfo(np.int32).min:
        raise OverflowError("folded bias exceeds int32 range")
    return folded.astype(np.int32)


def zpm_adjust(params: QuantParams) -> QuantParams:
    """Round the zero point to the center of a skip range so more codes share
    the skip pattern. Scale is left unchanged; idempotent."""
    if params.scheme != "asymmetric":
        raise ValueError("zero-point manipulation applies to asymmetric params only")
    l = params.lo_width
    zp = params.zero_point
    if zp > 0:
        zp_new = ((zp >> l) << l) + (1 << (l - 1))
        r_new = (zp_new - (1 << (l - 1))) >> l
    else:
        zp_new, r_new = 0, 0
    return replace(params, zero_point=zp_new, skip_value=r_new)


def z_score(target_sparsity: float) -> float:
    """Two-sided standard normal quantile: the z with mass ``target`` in
    [-z, z]."""
    return NormalDist().inv_cdf((1.0 + target_sparsity) / 2.0)


def dbs_classify(
    stats: CalibStats, target_sparsity: float = 0.9, z_table: dict[float, float] | None = None
) -> tuple[int, int]:
    """Pick the smallest LO width whose half-width covers std*z of the
    quantized distribution; falls back to the widest (l=6) best effort.

    Returns (dbs_type, lo_width)."""
    if not 0.0 < target_sparsity < 1.0:
        raise ValueError("target_sparsity must be in (0, 1)")
    if z_table is not None and target_sparsity in z_table:
        z = z_table[target_sparsity]
    else:
        z = z_score(target_sparsity)
    spread = stats.std * z
    for l in (4, 5, 6):
        if spread <= DBS_HALF_WIDTHS[l]:
            return l - 3, l
    return 3, 6


def skip_range_mass(histogram: np.ndarray, skip_value: int, lo_width: int) -> float:
    """Fraction of observed codes whose HO slice equals the skip value."""
    total = int(histogram.sum())
    if total == 0:
        return 0.0
    lo = skip_value << lo_width
    hi = min(lo + (1 << lo_width), len(histogram))
    return float(histogram[lo:hi].sum()) / total


def calibrate(
    batches: list[np.ndarray],
    b: int = 8,
    target_sparsity: float = 0.9,
    zpm: bool = True,
    dbs: bool = True,
    z_table: dict[float, float] | None = None,
) -> tuple[QuantParams, CalibStats]:
    """PTQ calibration: global min/max -> scale and zero point, histogram of
    quantized codes -> slice width, then type-based zero-point manipulation."""
    if not batches:
        raise ValueError("need at least one calibration batch")
    lo = min(float(np.asarray(m).min()) for m in batches)
    hi = max(float(np.asarray(m).max()) for m in batches)
    if hi == lo:
        s, zp = 1.0, 0
    else:
        s = (hi - lo) / ((1 << b) - 1)
        zp = int(np.clip(_round(np.array(-lo / s)), 0, (1 << b) - 1))
    base = QuantParams(scale=s, zero_point=zp, bit_width=b, scheme="asymmetric",
                       skip_value=zp >> 4)

    stats = CalibStats(min=lo, max=hi)
    for m in batches:
        q, _ = quantize_asymmetric(np.asarray(m), b, params=base)
        stats.observe_quantized(q)

    if dbs and b == 8:
        dbs_type, l = dbs_classify(stats, target_sparsity, z_table)
    else:
        dbs_type, l = 1, 4
    params = replace(base, dbs_type=dbs_type, lo_width=l, skip_value=zp >> l)
    if zpm:
        params = zpm_adjust(params)
    if params.zero_point != base.zero_point:
        # re-observe so the histogram reflects codes under the final zero point
        stats = CalibStats(min=lo, max=hi)
        for m in batches:
            q, _ = quantize_asymmetric(np.asarray(m), b, params=params)
            stats.observe_quantized(q)
    return params, stats
