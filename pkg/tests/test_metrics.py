import math

import numpy as np
import pytest

from dtchan.errors import EmptyInput, EmptyRegion, ShapeMismatch, ZeroChannel, ZeroColumn
from dtchan.metrics import (
    MetricReport,
    cdf,
    cdf_quantile,
    charbonnier,
    csi_mse_loss,
    nmse,
    pl_hybrid_loss,
    rmse_pl,
    sgcs,
)
from dtchan.raychan import PathLossMap


def rand_h(seed, shape=(16, 24)):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rand_map(seed, shape=(32, 32)):
    rng = np.random.default_rng(seed)
    return 60.0 + 20.0 * rng.random(shape)


class TestRmsePl:
    def test_identical_maps_zero(self):
        m = rand_map(0)
        assert rmse_pl(m, m) == 0.0

    def test_constant_offset(self):
        m = rand_map(1)
        assert rmse_pl(m + 2.0, m) == pytest.approx(2.0, abs=1e-12)

    def test_bruteforce_oracle(self):
        a, b = rand_map(2), rand_map(3)
        total = sum((a[i, j] - b[i, j]) ** 2 for i in range(32) for j in range(32))
        assert rmse_pl(a, b) == pytest.approx(math.sqrt(total / (32 * 32)), abs=1e-10)

    def test_masked_region_only(self):
        values = rand_map(4)
        mask = np.ones_like(values, dtype=np.uint8)
        mask[:5] = 0
        a = PathLossMap(values=values, valid_mask=mask)
        b = PathLossMap(values=values + 3.0, valid_mask=mask)
        assert rmse_pl(a, b) == pytest.approx(3.0, abs=1e-12)

    def test_shift_invariance(self):
        a, b = rand_map(5), rand_map(6)
        assert rmse_pl(a + 7.0, b + 7.0) == pytest.approx(rmse_pl(a, b), abs=1e-10)

    def test_mask_mismatch_and_empty(self):
        values = rand_map(7)
        full = PathLossMap(values=values, valid_mask=np.ones_like(values, dtype=np.uint8))
        none = PathLossMap(values=values, valid_mask=np.zeros_like(values, dtype=np.uint8))
        with pytest.raises(ShapeMismatch):
            rmse_pl(full, none)
        with pytest.raises(EmptyRegion):
            rmse_pl(none, none)


class TestNmse:
    def test_exact_match_sentinel(self):
        h = rand_h(0)
        linear, db = nmse([h], [h])
        assert linear == 0.0 and db == -300.0

    def test_zero_prediction_is_zero_db(self):
        h = rand_h(1)
        linear, db = nmse([np.zeros_like(h)], [h])
        assert linear == pytest.approx(1.0, rel=1e-12) and db == pytest.approx(0.0, abs=1e-10)

    def test_half_scale(self):
        h = rand_h(2)
        linear, db = nmse([0.5 * h], [h])
        assert linear == pytest.approx(0.25, rel=1e-12)
        assert db == pytest.approx(-6.0206, abs=0.01)

    def test_zero_truth_raises(self):
        with pytest.raises(ZeroChannel):
            nmse([rand_h(3)], [np.zeros((16, 24))])

    def test_order_invariance(self):
        preds = [rand_h(i) for i in range(6)]
        truths = [rand_h(100 + i) for i in range(6)]
        a = nmse(preds, truths)[0]
        b = nmse(preds[::-1], truths[::-1])[0]
        assert a == pytest.approx(b, rel=1e-12)


class TestSgcs:
    def test_global_scaling_invariance(self):
        h = rand_h(4)
        rng = np.random.default_rng(5)
        for _ in range(10):
            c = complex(rng.standard_normal(), rng.standard_normal())
            if abs(c) < 1e-3:
                continue
            assert sgcs([c * h], [h]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_columns_zero(self):
        pred = np.array([[1.0], [0.0]], dtype=complex)
        truth = np.array([[0.0], [1.0]], dtype=complex)
        assert sgcs([pred], [truth]) == 0.0

    def test_direct_formula_oracle(self):
        p, t = rand_h(6), rand_h(7)
        total = 0.0
        for k in range(24):
            num = abs(np.vdot(p[:, k], t[:, k])) ** 2
            total += num / (np.linalg.norm(p[:, k]) ** 2 * np.linalg.norm(t[:, k]) ** 2)
        assert sgcs([p], [t]) == pytest.approx(total / 24, rel=1e-12)

    def test_zero_truth_column_raises(self):
        t = rand_h(8)
        t[:, 3] = 0.0
        with pytest.raises(ZeroColumn):
            sgcs([rand_h(9)], [t])

    def test_zero_pred_column_scores_zero(self):
        t = rand_h(10)
        p = t.copy()
        p[:, 0] = 0.0
        expect = (0.0 + 23 * 1.0) / 24
        assert sgcs([p], [t]) == pytest.approx(expect, rel=1e-12)


class TestCharbonnier:
    def test_at_zero_equals_epsilon(self):
        assert charbonnier(0.0, 0.001) == 0.001

    def test_even_function(self):
        for x in (0.3, 1.7, 42.0):
            assert charbonnier(x) == charbonnier(-x)

    def test_near_one(self):
        assert charbonnier(1.0, 0.001) == pytest.approx(math.sqrt(1 + 1e-6), rel=1e-15)

    def test_elementwise(self):
        x = np.array([0.0, 1.0, -2.0])
        assert np.allclose(charbonnier(x, 0.5), np.sqrt(x * x + 0.25))


class TestHybridLoss:
    def test_identical_maps(self):
        m = rand_map(11)
        assert pl_hybrid_loss([m], [m]) == pytest.approx(0.0011, abs=1e-6)

    def test_lower_bound(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            a, b = rand_map(rng.integers(1 << 30)), rand_map(rng.integers(1 << 30))
            assert pl_hybrid_loss([a], [b]) >= 0.001 * 1.1 - 1e-12

    def test_composed_oracle(self):
        a, b = rand_map(13), rand_map(14)
        eps = 0.001
        spatial = np.mean(np.sqrt((a - b) ** 2 + eps * eps))
        fa = np.linalg.norm(np.fft.fft2(a, norm="ortho"))
        fb = np.linalg.norm(np.fft.fft2(b, norm="ortho"))
        freq = math.sqrt((fa - fb) ** 2 + eps * eps)
        assert pl_hybrid_loss([a], [b]) == pytest.approx(spatial + 0.1 * freq, abs=1e-10)

    def test_multi_sample_average(self):
        ms = [rand_map(i) for i in range(4)]
        single = [pl_hybrid_loss([m], [m]) for m in ms]
        assert pl_hybrid_loss(ms, ms) == pytest.approx(np.mean(single), rel=1e-12)


class TestCsiMse:
    def test_equal_sets_zero(self):
        hs = [rand_h(15), rand_h(16)]
        assert csi_mse_loss(hs, hs) == 0.0

    def test_all_ones_offset(self):
        h = rand_h(17)
        assert csi_mse_loss([h + 1.0], [h]) == pytest.approx(16 * 24, rel=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(18)
        for _ in range(10):
            assert csi_mse_loss([rand_h(rng.integers(1 << 30))], [rand_h(rng.integers(1 << 30))]) >= 0.0


class TestCdf:
    def test_empirical_step(self):
        xs, fs = cdf([1.0, 2.0, 3.0])
        assert fs[np.searchsorted(xs, 2.0, side="right") - 1] == pytest.approx(2.0 / 3.0)
        assert fs[-1] == 1.0

    def test_monotone_fractions(self):
        rng = np.random.default_rng(19)
        xs, fs = cdf(rng.standard_normal(100))
        assert np.all(np.diff(fs) > 0) and np.all(np.diff(xs) >= 0)

    def test_quantile_matches_sort_oracle(self):
        rng = np.random.default_rng(20)
        values = list(rng.standard_normal(41))
        s = sorted(values)
        for q in (0.1, 0.5, 0.8, 1.0):
            want = s[math.ceil(q * len(s)) - 1]
            assert cdf_quantile(values, q) == pytest.approx(want, rel=1e-12)

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            cdf([])


def test_metric_report_aggregates():
    rep = MetricReport.from_values("nmse_db", [-10.0, -12.0, -14.0], "dB")
    assert rep.mean == pytest.approx(-12.0) and rep.count == 3
    assert rep.std == pytest.approx(np.std([-10.0, -12.0, -14.0]))
    with pytest.raises(EmptyInput):
        MetricReport.from_values("x", [], "")
