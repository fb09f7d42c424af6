import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panacea.quant import (
    CalibStats,
    QuantParams,
    calibrate,
    dbs_classify,
    dequantize,
    fold_bias,
    quantize_asymmetric,
    quantize_symmetric,
    quantize_symmetric_grouped,
    skip_range_mass,
    z_score,
    zpm_adjust,
)


def brute_force_symmetric(x, b):
    # scalar re-derivation with the same rounding rule
    s = 2.0 * max(abs(v) for v in x) / ((1 << b) - 1)
    if s == 0:
        s = 1.0
    lo, hi = -(1 << (b - 1)), (1 << (b - 1)) - 1
    return [min(max(int(np.rint(v / s)), lo), hi) for v in x], s


def test_symmetric_hand_example():
    q, p = quantize_symmetric(np.array([[-1.0, 1.0]]), 7)
    assert p.scale == pytest.approx(2 / 127)
    assert q.tolist() == [[-64, 63]]


def test_symmetric_matches_brute_force():
    rng = np.random.default_rng(1)
    for b in (4, 7, 8):
        x = rng.normal(size=17)
        q, p = quantize_symmetric(x, b)
        want, s = brute_force_symmetric(x, b)
        assert p.scale == pytest.approx(s)
        assert q.tolist() == want


def test_symmetric_degenerate_all_zero():
    q, p = quantize_symmetric(np.zeros((2, 2)), 8)
    assert p.scale == 1.0
    assert not q.any()


def test_asymmetric_params():
    x = np.linspace(-1.0, 2.0, 64).reshape(8, 8)
    q, p = quantize_asymmetric(x, 8)
    assert p.scale == pytest.approx(3.0 / 255)
    assert p.zero_point == int(np.rint(1.0 / p.scale))
    assert q.min() >= 0 and q.max() <= 255


def test_asymmetric_reuse_params():
    x = np.linspace(-1.0, 2.0, 16)
    _, p = quantize_asymmetric(x, 8)
    q2, p2 = quantize_asymmetric(x * 10, 8, params=p)
    assert p2 is p
    assert q2.max() == 255  # clipped under the reused scale


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), b=st.sampled_from([4, 7, 8]))
def test_dequantize_error_bound(seed, b):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=32)
    q, p = quantize_symmetric(x, b)
    err = np.abs(dequantize(q, p) - x)
    unclipped = (q > p.qmin) & (q < p.qmax)
    assert (err[unclipped] <= p.scale / 2 + 1e-9).all()


def test_grouped_symmetric():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(128, 8))
    q, params = quantize_symmetric_grouped(x, 7, group_size=64)
    assert len(params) == 2
    q0, p0 = quantize_symmetric(x[:64], 7)
    assert np.array_equal(q[:64], q0) and params[0].scale == p0.scale


def test_params_json_roundtrip():
    p = QuantParams(0.5, 168, 8, "asymmetric", dbs_type=2, lo_width=5, skip_value=5)
    assert QuantParams.from_json(p.to_json()) == p
    assert set(json.loads(p.to_json())) == {
        "scale", "zero_point", "bit_width", "scheme", "dbs_type", "lo_width", "skip_value",
    }


def test_params_validation():
    with pytest.raises(ValueError):
        QuantParams(1.0, 5, 8, "symmetric")
    with pytest.raises(ValueError):
        QuantParams(1.0, 0, 8, "asymmetric", dbs_type=2, lo_width=4)
    with pytest.raises(ValueError):
        QuantParams(1.0, 300, 8, "asymmetric")


def test_fold_bias():
    w = np.array([[1, 2], [3, -4]])
    b = np.array([0.5, -0.25])
    out = fold_bias(w, zp_x=10, b_float=b, s_w=0.5, s_x=0.1)
    # round(b/(sw*sx)) - zp*rowsum
    assert out.tolist() == [10 - 30, -5 - 10 * (-1)]
    assert out.dtype == np.int32


def test_fold_bias_overflow():
    w = np.full((1, 4096), 2**20)
    with pytest.raises(OverflowError):
        fold_bias(w, 255, np.zeros(1), 1.0, 1.0)


def test_zpm_example():
    p = QuantParams(1.0, 161, 8, "asymmetric", skip_value=161 >> 4)
    p2 = zpm_adjust(p)
    assert p2.zero_point == 168
    assert p2.skip_value == 10
    assert zpm_adjust(p2) == p2  # idempotent


def test_zpm_zero_point_zero():
    p = QuantParams(1.0, 0, 8, "asymmetric")
    assert zpm_adjust(p).zero_point == 0


@settings(max_examples=100, deadline=None)
@given(zp=st.integers(1, 255), l=st.sampled_from([4, 5, 6]))
def test_zpm_centers_skip_range(zp, l):
    p = QuantParams(1.0, zp, 8, "asymmetric", dbs_type=l - 3, lo_width=l, skip_value=zp >> l)
    p2 = zpm_adjust(p)
    assert p2.zero_point % (1 << l) == 1 << (l - 1)
    assert p2.skip_value == p2.zero_point >> l


def test_z_score():
    assert z_score(0.9) == pytest.approx(1.6449, abs=1e-3)
    assert z_score(0.99) == pytest.approx(2.5758, abs=1e-3)


def test_dbs_classify_widths():
    # std*z vs half widths 8/16/32 at target 0.9
    for std, expected_l in [(2.0, 4), (8.0, 5), (15.0, 6), (0.0, 4), (40.0, 6)]:
        s = CalibStats(count=2, total=0.0, total_sq=2 * std * std)
        t, l = dbs_classify(s, 0.9)
        assert (t, l) == (expected_l - 3, expected_l)


def test_dbs_classify_z_table_passthrough():
    s = CalibStats(count=2, total=0.0, total_sq=2 * 36.0)
    assert dbs_classify(s, 0.9, z_table={0.9: 1.0}) == (1, 4)  # 6*1 <= 8


def test_calib_stats_merge_associative():
    rng = np.random.default_rng(3)
    parts = [rng.integers(0, 256, size=100) for _ in range(3)]
    stats = [CalibStats() for _ in parts]
    for s, p in zip(stats, parts):
        s.observe_quantized(p)
    ab_c = stats[0].merge(stats[1]).merge(stats[2])
    a_bc = stats[0].merge(stats[1].merge(stats[2]))
    assert np.array_equal(ab_c.histogram, a_bc.histogram)
    assert ab_c.count == a_bc.count == 300
    whole = CalibStats()
    whole.observe_quantized(np.concatenate(parts))
    assert whole.mean == pytest.approx(ab_c.mean)
    assert whole.std == pytest.approx(ab_c.std)


def test_calibrate_pipeline():
    rng = np.random.default_rng(4)
    batches = [rng.normal(0.0, 0.05, size=(16, 16)) for _ in range(4)]
    batches[0][0, 0] = -1.61  # pin the range
    batches[0][0, 1] = 0.94
    params, stats = calibrate(batches, b=8, target_sparsity=0.9)
    assert params.scheme == "asymmetric"
    assert params.zero_point % (1 << params.lo_width) == 1 << (params.lo_width - 1)
    mass = skip_range_mass(stats.histogram, params.skip_value, params.lo_width)
    assert mass > 0.9


def test_calibrate_no_zpm_keeps_raw_zero_point():
    batches = [np.linspace(-1.61, 0.94, 256)]
    with_, _ = calibrate(batches, zpm=True, dbs=False)
    without, _ = calibrate(batches, zpm=False, dbs=False)
    assert without.zero_point == 161
    assert with_.zero_point == 168


def test_skip_range_mass_empty():
    assert skip_range_mass(np.zeros(256, dtype=np.int64), 5, 4) == 0.0
