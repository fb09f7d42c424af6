"""Analytical cycle/energy/traffic model of the accelerator core and of
dense baselines.

The cycle model is deliberately coarse: per tile-step the compute time is
the worst PEA's max of (sparse work / DWOs, dense work / SWOs), DRAM
transfers overlap compute through double buffering (each step costs the max
of the two), and partial sums never leave on-chip memory. Compensation
units are modeled as fully overlapped: they cost energy and counters but no
cycles. Absolute cycle counts are model-relative; counter totals are exact
and shared with the GEMM engine.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .gemm import (
    EQ5,
    EQ6,
    GemmOperands,
    WorkloadCounters,
    count_workload,
    prepare_operands,
)
from .quant import QuantParams
from .rle import uncompressed_mask

ARCHS = ("panacea", "sibia", "simd", "sa_ws", "sa_os")

# Placeholder per-event energies in pJ. Not calibrated against silicon; all
# energy acceptance checks are ratio- or counter-based.
DEFAULT_ENERGY_TABLE = {
    "mult_4x4": 0.05,
    "add_8b": 0.03,
    "sram_read_nibble": 0.08,
    "sram_write_nibble": 0.08,
    "dram_nibble": 3.2,
    "reg_op": 0.01,
}

# Baseline model constants: systolic accumulation depth per K-strip and the
# OMEM nibble bandwidth used to drain/refill partial sums (SA-WS only).
SA_ACCUM_DEPTH = 32
OMEM_NIBBLES_PER_CYCLE = 64


@dataclass
class HardwareConfig:
    peas: int = 16
    vector_len: int = 4
    dwo_per_pea: int = 4
    swo_per_pea: int = 8
    multipliers_per_opc: int = 16
    tm: int = 64
    tk: int = 32
    tn: int = 64
    reuse: int = 16
    wmem_bytes: int = 96 * 1024
    amem_bytes: int = 64 * 1024
    omem_bytes: int = 32 * 1024
    wbuf_bytes: int = 1024
    dram_bits_per_cycle: int = 256
    rle_run_bits: int = 4
    dtp: str = "auto"  # "auto" | "off"
    energy_table: dict = field(default_factory=lambda: dict(DEFAULT_ENERGY_TABLE))

    def __post_init__(self):
        if self.tm != self.peas * self.vector_len:
            raise ValueError("tm must equal peas * vector_len")
        for name in ("peas", "vector_len", "dwo_per_pea", "swo_per_pea", "tk", "tn"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if any(v < 0 for v in self.energy_table.values()):
            raise ValueError("energy table entries must be non-negative")

    @property
    def total_multipliers(self) -> int:
        return self.peas * (self.dwo_per_pea + self.swo_per_pea) * self.multipliers_per_opc

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "HardwareConfig":
        return cls(**json.loads(s))


@dataclass
class SimLayerReport:
    arch: str
    m: int
    k: int
    n: int
    rho_w: float
    rho_x: float
    comp_mode: str
    cycles: int
    dwo_busy_cycles: int
    swo_busy_cycles: int
    dtp_enabled: bool
    counters: WorkloadCounters
    energy_pj: float
    effective_tops: float
    tops_per_watt_relative: float
    seed: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counters"] = self.counters.as_dict()
        return d


def energy_pj(counters: WorkloadCounters, table: dict) -> float:
    return (
        (counters.mults + counters.compensation_mults) * table["mult_4x4"]
        + (counters.adds + counters.compensation_adds) * table["add_8b"]
        + counters.sram_read_nibbles * table["sram_read_nibble"]
        + counters.sram_write_nibbles * table["sram_write_nibble"]
        + (counters.dram_nibbles + counters.rle_index_nibbles) * table["dram_nibble"]
        + counters.rle_index_nibbles * table["reg_op"]
    )


def closed_form_workloads(
    k: int, rho_w: float, rho_x: float, arch: str = "panacea", comp_mode: str = EQ6
) -> WorkloadCounters:
    """Closed-form workload of the 4xK by Kx4 two-slice unit problem.

    Every returned count is asserted to be an exact integer for the given
    sparsity fractions."""
    rw, rx = Fraction(rho_w).limit_denominator(1 << 20), Fraction(rho_x).limit_denominator(1 << 20)
    if not (0 <= rw <= 1 and 0 <= rx <= 1):
        raise ValueError("sparsity fractions must lie in [0, 1]")

    def as_int(x: Fraction, what: str) -> int:
        if x.denominator != 1:
            raise ValueError(f"{what} = {x} is not an integer for K={k}, "
                             f"rho_w={rho_w}, rho_x={rho_x}")
        return int(x)

    c = WorkloadCounters()
    if arch == "panacea":
        gemm_ops = k * (2 - rx) * (2 - rw)
        c.mults = as_int(16 * gemm_ops, "multiplications")
        c.adds = c.mults
        c.dram_nibbles = as_int(4 * k * (4 - rw - rx), "EMA nibbles")
        c.sram_read_nibbles = as_int(8 * gemm_ops, "SRAM reads")
        c.sram_write_nibbles = 4 * 4 * 8
        c.compensation_mults = 16
        if comp_mode == EQ5:
            c.compensation_adds = as_int(8 * k * rx, "compensation adds")
            c.dram_nibbles += as_int(8 * k * rx, "compensation EMA")
        elif comp_mode == EQ6:
            c.compensation_adds = as_int(8 * k * (1 - rx), "compensation adds")
        else:
            raise ValueError(f"unknown compensation mode {comp_mode!r}")
    elif arch == "sibia":
        rho = max(rw, rx)
        c.mults = as_int(32 * k * (2 - rho), "multiplications")
        c.adds = c.mults
        c.dram_nibbles = 14 * k
        c.sram_read_nibbles = as_int(16 * k * (2 - rho), "SRAM reads")
        c.sram_write_nibbles = 4 * 4 * 8
    else:
        raise ValueError(f"no closed form for arch {arch!r}")
    return c


# ---------------------------------------------------------------------------
# Synthetic operand generation


def default_activation_params(lo_width: int = 4) -> QuantParams:
    """Post-manipulation asymmetric params with the zero point centered in a
    skip range (zp=168, r=10 for l=4)."""
    zp = ((161 >> lo_width) << lo_width) + (1 << (lo_width - 1))
    return QuantParams(
        scale=0.02,
        zero_point=zp,
        bit_width=8,
        scheme="asymmetric",
        dbs_type=lo_width - 3,
        lo_width=lo_width,
        skip_value=zp >> lo_width,
    )


def default_weight_params(bit_width: int = 7) -> QuantParams:
    return QuantParams(scale=0.01, zero_point=0, bit_width=bit_width, scheme="symmetric")


def _sbr_zero_ho_range(bit_width: int) -> tuple[int, int]:
    # conservative value range whose signed slicing yields an all-zero HO plane
    return (0, 0) if bit_width == 4 else (-8, 7)


def _force_nonzero_ho(rng: np.random.Generator, bit_width: int) -> int:
    if bit_width == 4:
        v = int(rng.integers(1, 8))
        return v if rng.integers(2) else -v
    hi = 1 << (bit_width - 1)
    mag = int(rng.integers(hi // 4, hi))
    return mag if rng.integers(2) else -mag


def synthetic_weight(
    m: int, k: int, rho_w: float, seed: int, bit_width: int = 7
) -> np.ndarray:
    """Signed weight matrix whose HO plane has, per column, an exact count of
    all-zero 4x1 vectors. Compressed position sets are nested in rho so that
    work is pointwise monotone across a sparsity sweep."""
    if m % 4:
        raise ValueError("rows must be a multiple of 4")
    mv = m // 4
    count = int(round(rho_w * mv))
    rng = np.random.default_rng(seed)
    lo, hi = _sbr_zero_ho_range(bit_width)
    vmax = 1 << (bit_width - 1)
    w = rng.integers(-vmax, vmax, size=(m, k), dtype=np.int64)
    for col in range(k):
        perm = np.random.default_rng((seed, 1, col)).permutation(mv)
        for g in range(mv):
            rows = slice(4 * perm[g], 4 * perm[g] + 4)
            if g < count:
                w[rows, col] = rng.integers(lo, hi + 1, size=4)
            else:
                w[4 * perm[g], col] = _force_nonzero_ho(rng, bit_width)
    return w


def synthetic_activation(
    k: int, n: int, rho_x: float, seed: int, params: QuantParams
) -> np.ndarray:
    """Unsigned activation matrix with an exact per-row count of all-r 1x4
    HO vectors; compressed sets nested in rho."""
    if n % 4:
        raise ValueError("cols must be a multiple of 4")
    nv = n // 4
    count = int(round(rho_x * nv))
    rng = np.random.default_rng(seed + 1)
    l, r = params.lo_width, params.skip_value
    skip_lo = r << l
    skip_width = 1 << l
    x = rng.integers(0, 256, size=(k, n), dtype=np.int64)
    for row in range(k):
        perm = np.random.default_rng((seed, 2, row)).permutation(nv)
        for g in range(nv):
            cols = slice(4 * perm[g], 4 * perm[g] + 4)
            if g < count:
                x[row, cols] = skip_lo + rng.integers(0, skip_width, size=4)
            else:
                u = int(rng.integers(0, 256 - skip_width))
                x[row, 4 * perm[g]] = u if u < skip_lo else u + skip_width
    return x


def synthetic_operands(
    m: int,
    k: int,
    n: int,
    rho_w: float,
    rho_x: float,
    seed: int = 0,
    w_bits: int = 7,
    lo_width: int = 4,
) -> GemmOperands:
    params_w = default_weight_params(w_bits)
    params_x = default_activation_params(lo_width)
    w = synthetic_weight(m, k, rho_w, seed, w_bits)
    x = synthetic_activation(k, n, rho_x, seed, params_x)
    return prepare_operands(w, x, params_w, params_x)


def unit_problem_operands(
    k: int, rho_w: float, rho_x: float, seed: int = 0, lo_width: int = 4
) -> GemmOperands:
    """4xK by Kx4 unit problem realizing rho_w, rho_x *and* their cross
    product exactly, as the closed-form workload model assumes.

    Raises ValueError when K*rho_w, K*rho_x or K*rho_w*rho_x is not an
    integer (such points are not realizable by any 0/1 pattern)."""
    fw, fx = Fraction(rho_w).limit_denominator(64), Fraction(rho_x).limit_denominator(64)
    c = fw * k
    d = fx * k
    cc = fw * fx * k
    if any(f.denominator != 1 for f in (c, d, cc)):
        raise ValueError(
            f"rho_w={rho_w}, rho_x={rho_x} not exactly realizable at K={k}"
        )
    c, d, cc = int(c), int(d), int(cc)
    rng = np.random.default_rng(seed)
    order = rng.permutation(k)
    w_compressed = np.zeros(k, dtype=bool)
    x_compressed = np.zeros(k, dtype=bool)
    w_compressed[order[:c]] = True  # first cc of these also compress x
    x_compressed[order[:cc]] = True
    x_compressed[order[c : c + d - cc]] = True

    params_w = default_weight_params(7)
    params_x = default_activation_params(lo_width)
    l, r = params_x.lo_width, params_x.skip_value
    skip_lo, skip_width = r << l, 1 << l
    w = np.empty((4, k), dtype=np.int64)
    x = np.empty((k, 4), dtype=np.int64)
    for kk in range(k):
        if w_compressed[kk]:
            w[:, kk] = rng.integers(-8, 8, size=4)
        else:
            w[:, kk] = rng.integers(-64, 64, size=4)
            w[0, kk] = _force_nonzero_ho(rng, 7)
        if x_compressed[kk]:
            x[kk, :] = skip_lo + rng.integers(0, skip_width, size=4)
        else:
            x[kk, :] = rng.integers(0, 256, size=4)
            u = int(rng.integers(0, 256 - skip_width))
            x[kk, 0] = u if u < skip_lo else u + skip_width
    return prepare_operands(w, x, params_w, params_x)


# ---------------------------------------------------------------------------
# Cycle models


def _vector_masks(ops: GemmOperands) -> tuple[np.ndarray, np.ndarray]:
    """(Mv, K) weight and (K, Nv) activation uncompressed-vector masks."""
    return uncompressed_mask(ops.w_ho).T, uncompressed_mask(ops.x_ho)


def measured_sparsity(ops: GemmOperands) -> tuple[float, float]:
    uw, xu = _vector_masks(ops)
    return 1.0 - float(uw.mean()), 1.0 - float(xu.mean())


def compressed_weight_nibbles(ops: GemmOperands, groups: slice, kslice: slice) -> int:
    uw, _ = _vector_masks(ops)
    sub = uw[groups, kslice]
    rows = sub.shape[0] * 4
    return 4 * int(sub.sum()) + len(ops.w.lo_planes) * rows * sub.shape[1]


def compressed_activation_nibbles(ops: GemmOperands, kslice: slice, jgroups: slice) -> int:
    _, xu = _vector_masks(ops)
    sub = xu[kslice, jgroups]
    cols = sub.shape[1] * 4
    return 4 * int(sub.sum()) + len(ops.x.lo_planes) * sub.shape[0] * cols


def dtp_enable_check(
    weight_nibbles_2tm_k: int, wmem_bytes: int, two_subtile_nibbles: int, wbuf_bytes: int
) -> bool:
    """True iff the compressed slices of a double-height weight tile fit WMEM
    at once and two weight sub-tiles fit a PEA's WBUF (<= comparisons)."""
    return (
        weight_nibbles_2tm_k / 2 <= wmem_bytes and two_subtile_nibbles / 2 <= wbuf_bytes
    )


def _dtp_possible(ops: GemmOperands, cfg: HardwareConfig) -> bool:
    mv = -(-ops.w.rows // 4)
    if mv <= cfg.peas:  # a single m-tile: nothing to pair
        return False
    k = ops.w.cols
    nib_2tm = compressed_weight_nibbles(ops, slice(0, min(2 * cfg.peas, mv)), slice(0, k))
    planes = len(ops.w.planes)
    subtiles = 2 * cfg.vector_len * cfg.tk * planes  # dense nibble bound
    return dtp_enable_check(nib_2tm, cfg.wmem_bytes, subtiles, cfg.wbuf_bytes)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _simulate_panacea(
    ops: GemmOperands, cfg: HardwareConfig, comp_mode: str, seed: int | None
) -> SimLayerReport:
    m, k, n = ops.w.rows, ops.w.cols, ops.x.cols
    uw, xu = _vector_masks(ops)  # (Mv, K), (K, Nv)
    mv, nv = uw.shape[0], xu.shape[1]
    n_wlo = len(ops.w.lo_planes)
    n_xlo = len(ops.x.lo_planes)
    d_ops, s_ops = cfg.dwo_per_pea, cfg.swo_per_pea

    m_tiles = _ceil_div(mv, cfg.peas)
    n_tiles = _ceil_div(nv * 4, cfg.tn)
    k_tiles = _ceil_div(k, cfg.tk)
    jg_per_tile = cfg.tn // 4

    dtp = cfg.dtp == "auto" and _dtp_possible(ops, cfg)

    def pea_work(group: int, kslice: slice, jslice: slice) -> tuple[int, int]:
        """(sparse DWO outer products, dense SWO outer products) for one PEA
        over one tile-step."""
        xs = xu[kslice, jslice].sum(axis=1).astype(np.int64)  # per-k uncompressed j's
        rj = jslice.stop - jslice.start
        if group >= mv:
            return 0, 0
        uwk = uw[group, kslice].astype(np.int64)
        sparse = int((uwk * xs).sum()) + n_xlo * rj * int(uwk.sum()) + n_wlo * int(xs.sum())
        dense = (kslice.stop - kslice.start) * rj * n_wlo * n_xlo
        return sparse, dense

    cycles = 0
    dwo_busy = 0
    swo_busy = 0

    mt_list = list(range(m_tiles))
    if dtp:
        pairs = [(mt_list[i], mt_list[i + 1] if i + 1 < m_tiles else None)
                 for i in range(0, m_tiles, 2)]
    else:
        pairs = [(mt, None) for mt in mt_list]

    for pi, (mt0, mt1) in enumerate(pairs):
        for nt in range(n_tiles):
            jlo = nt * jg_per_tile
            jsl = slice(jlo, min(jlo + jg_per_tile, nv))
            for kt in range(k_tiles):
                ksl = slice(kt * cfg.tk, min((kt + 1) * cfg.tk, k))
                step_compute = 0
                step_dwo = 0
                step_swo = 0
                for p in range(cfg.peas):
                    s0, d0 = pea_work(mt0 * cfg.peas + p, ksl, jsl)
                    if mt1 is not None:
                        s1, d1 = pea_work(mt1 * cfg.peas + p, ksl, jsl)
                        # second tile's dense work may spill onto idle DWOs
                        t = max(
                            _ceil_div(s0 + s1 + d0 + d1, d_ops + s_ops),
                            _ceil_div(s0 + s1, d_ops),
                            _ceil_div(d0, s_ops),
                        )
                        td = _ceil_div(s0 + s1, d_ops)
                        ts = _ceil_div(d0 + d1, s_ops)
                    else:
                        t = max(_ceil_div(s0, d_ops), _ceil_div(d0, s_ops))
                        td = _ceil_div(s0, d_ops)
                        ts = _ceil_div(d0, s_ops)
                    step_compute = max(step_compute, t)
                    step_dwo = max(step_dwo, td)
                    step_swo = max(step_swo, ts)

                load_nibbles = 0
                if nt == 0:
                    glo = mt0 * cfg.peas
                    load_nibbles += compressed_weight_nibbles(
                        ops, slice(glo, min(glo + cfg.peas, mv)), ksl
                    )
                    if mt1 is not None:
                        glo = mt1 * cfg.peas
                        load_nibbles += compressed_weight_nibbles(
                            ops, slice(glo, min(glo + cfg.peas, mv)), ksl
                        )
                if pi == 0:
                    load_nibbles += compressed_activation_nibbles(ops, ksl, jsl)
                transfer = _ceil_div(load_nibbles * 4, cfg.dram_bits_per_cycle)

                cycles += max(step_compute, transfer)
                dwo_busy += step_dwo
                swo_busy += step_swo

    counters = count_workload(ops, comp_mode)
    e = energy_pj(counters, cfg.energy_table)
    rho_w, rho_x = measured_sparsity(ops)
    tops = 2.0 * m * k * n / cycles if cycles else 0.0
    return SimLayerReport(
        arch="panacea", m=m, k=k, n=n, rho_w=rho_w, rho_x=rho_x, comp_mode=comp_mode,
        cycles=cycles, dwo_busy_cycles=dwo_busy, swo_busy_cycles=swo_busy,
        dtp_enabled=dtp, counters=counters, energy_pj=e, effective_tops=tops,
        tops_per_watt_relative=tops / e if e else 0.0, seed=seed,
    )


def _simulate_baseline(
    ops: GemmOperands, cfg: HardwareConfig, arch: str, seed: int | None
) -> SimLayerReport:
    m, k, n = ops.w.rows, ops.w.cols, ops.x.cols
    rho_w, rho_x = measured_sparsity(ops)
    macs = m * k * n
    c = WorkloadCounters()
    dwo_busy = swo_busy = 0

    if arch in ("simd", "sa_ws", "sa_os"):
        # dense 8-bit GEMM; one 8b x 8b multiplier == four 4b x 4b multipliers
        c.mults = 4 * macs
        c.adds = 4 * macs
        c.dram_nibbles = 2 * (m * k + k * n)
        c.sram_read_nibbles = 4 * macs
        c.sram_write_nibbles = m * n * 8
        mac_per_cycle = cfg.total_multipliers // 4
        compute = _ceil_div(macs, mac_per_cycle)
        transfer = _ceil_div(c.dram_nibbles * 4, cfg.dram_bits_per_cycle)
        if arch == "sa_ws":
            # weight-stationary: partial sums round-trip OMEM once per K-strip;
            # the stall pipelines one psum read/write pair per OMEM slot
            strips = _ceil_div(k, SA_ACCUM_DEPTH)
            psum_nibbles = (strips - 1) * m * n * 8
            c.sram_read_nibbles += psum_nibbles
            c.sram_write_nibbles += psum_nibbles
            compute += (strips - 1) * _ceil_div(m * n, OMEM_NIBBLES_PER_CYCLE)
        cycles = max(compute, transfer)
    elif arch == "sibia":
        # symmetric bit-slice baseline: skips only the plane pairs involving
        # the sparser operand's compressed HO vectors, loads dense operands
        uw, xu = _vector_masks(ops)
        mv, nv = uw.shape[0], xu.shape[1]
        n_wlo = max(len(ops.w.lo_planes), 1)
        n_xlo = max(len(ops.x.lo_planes), 1)
        if rho_w >= rho_x:
            unc = int(uw.sum())  # uncompressed weight vectors over (Mv, K)
            ho_ops = unc * nv * (1 + n_xlo)
            dense_ops = k * mv * nv * n_wlo * (1 + n_xlo)
        else:
            unc = int(xu.sum())
            ho_ops = unc * mv * (1 + n_wlo)
            dense_ops = k * mv * nv * n_xlo * (1 + n_wlo)
        total_ops = ho_ops + dense_ops
        c.mults = 16 * total_ops
        c.adds = 16 * total_ops
        dense_nibbles = (1 + n_wlo) * m * k + (1 + n_xlo) * k * n
        c.dram_nibbles = (7 * dense_nibbles) // 8
        c.sram_read_nibbles = 8 * total_ops
        c.sram_write_nibbles = m * n * 8
        compute = _ceil_div(c.mults, cfg.total_multipliers)
        transfer = _ceil_div(c.dram_nibbles * 4, cfg.dram_bits_per_cycle)
        cycles = max(compute, transfer)
    else:
        raise ValueError(f"unknown arch {arch!r}")

    e = energy_pj(c, cfg.energy_table)
    tops = 2.0 * macs / cycles if cycles else 0.0
    return SimLayerReport(
        arch=arch, m=m, k=k, n=n, rho_w=rho_w, rho_x=rho_x, comp_mode="",
        cycles=cycles, dwo_busy_cycles=dwo_busy, swo_busy_cycles=swo_busy,
        dtp_enabled=False, counters=c, energy_pj=e, effective_tops=tops,
        tops_per_watt_relative=tops / e if e else 0.0, seed=seed,
    )


def simulate_layer(
    ops: GemmOperands,
    cfg: HardwareConfig,
    arch: str = "panacea",
    comp_mode: str = EQ6,
    seed: int | None = None,
) -> SimLayerReport:
    if arch == "panacea":
        return _simulate_panacea(ops, cfg, comp_mode, seed)
    if arch in ARCHS:
        return _simulate_baseline(ops, cfg, arch, seed)
    raise ValueError(f"unknown arch {arch!r}")


def sweep(
    rho_w_grid: list[float],
    rho_x_grid: list[float],
    sizes: list[tuple[int, int, int]],
    cfg: HardwareConfig,
    archs: tuple[str, ...] = ARCHS,
    comp_mode: str = EQ6,
    seed: int = 0,
) -> list[SimLayerReport]:
    """Deterministic sparsity/size sweep over synthetic operands."""
    if not rho_w_grid or not rho_x_grid or not sizes:
        raise ValueError("sweep grids must be non-empty")
    out = []
    for m, k, n in sizes:
        for rho_w in rho_w_grid:
            for rho_x in rho_x_grid:
                ops = synthetic_operands(m, k, n, rho_w, rho_x, seed=seed)
                for arch in archs:
                    out.append(simulate_layer(ops, cfg, arch, comp_mode, seed=seed))
    return out
