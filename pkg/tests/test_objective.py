"""Tests for depthkit.objective module."""

import math

import numpy as np
import pytest

from depthkit.exceptions import ConfigError, EmptyMaskError, ShapeError
from depthkit.gradcheck import check_gradients
from depthkit.objective import (
    MetricReport,
    SilogParams,
    build_validity_mask,
    compute_metrics,
    silog_loss,
)
from depthkit.tensor import tensor


def full_mask(shape):
    return np.ones(shape, dtype=bool)


class TestSilogParams:
    """Tests for SilogParams class."""

    def test_defaults(self):
        params = SilogParams()
        assert (params.lam, params.alpha) == (0.85, 10.0)

    @pytest.mark.parametrize("lam, alpha", [(0.0, 10.0), (1.5, 10.0), (0.85, 0.0)])
    def test_out_of_range(self, lam, alpha):
        with pytest.raises(ConfigError):
            SilogParams(lam, alpha)


class TestSilogLoss:
    """Tests for silog_loss function."""

    def test_perfect_prediction(self, rng):
        gt = rng.uniform(0.5, 9.0, size=(1, 4, 4))
        loss = silog_loss(tensor(gt), gt, full_mask(gt.shape))
        # The radicand floor leaves alpha * sqrt(1e-12).
        assert loss.item() == pytest.approx(1e-5, abs=1e-4)

    def test_two_pixel_value(self):
        pred = np.array([[[1.0, 1.0]]])
        gt = np.array([[[1.0, math.e]]])
        loss = silog_loss(tensor(pred, dtype=np.float64), gt, full_mask(gt.shape))
        assert loss.item() == pytest.approx(10 * math.sqrt(0.5 - 0.85 * 0.25), rel=1e-9)
        assert loss.item() == pytest.approx(5.3619, abs=1e-4)

    def test_scale_invariant_when_lambda_is_one(self, rng):
        gt = rng.uniform(0.5, 9.0, size=(1, 4, 4))
        pred = tensor(3.0 * gt, dtype=np.float64)
        loss = silog_loss(pred, gt, full_mask(gt.shape), SilogParams(1.0))
        assert loss.item() == pytest.approx(0.0, abs=1e-4)

    @pytest.mark.parametrize("scale", [0.5, 2.0])
    def test_scale_sensitivity(self, scale, rng):
        gt = rng.uniform(0.5, 9.0, size=(1, 4, 4))
        loss = silog_loss(tensor(scale * gt, dtype=np.float64), gt, full_mask(gt.shape))
        expected = 10 * abs(math.log(scale)) * math.sqrt(1 - 0.85)
        assert loss.item() == pytest.approx(expected, rel=1e-6)

    def test_non_negative_on_random_pairs(self, rng):
        for _ in range(1000):
            pred = rng.uniform(0.1, 10.0, size=(1, 2, 3))
            gt = rng.uniform(0.1, 10.0, size=(1, 2, 3))
            assert silog_loss(tensor(pred), gt, full_mask(gt.shape)).item() >= 0.0

    def test_only_masked_pixels_count(self):
        pred = np.array([[[1.0, 1.0, 100.0]]])
        gt = np.array([[[1.0, math.e, 1.0]]])
        mask = np.array([[[True, True, False]]])
        loss = silog_loss(tensor(pred, dtype=np.float64), gt, mask)
        assert loss.item() == pytest.approx(5.3619, abs=1e-4)

    def test_empty_mask(self):
        with pytest.raises(EmptyMaskError):
            silog_loss(tensor(np.ones((1, 2, 2))), np.ones((1, 2, 2)), np.zeros((1, 2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            silog_loss(tensor(np.ones((1, 2, 2))), np.ones((1, 2, 3)), full_mask((1, 2, 3)))

    def test_gradcheck(self, rng, float64):
        pred = tensor(rng.uniform(0.5, 5.0, size=(1, 4, 4)))
        gt = rng.uniform(0.5, 5.0, size=(1, 4, 4))
        mask = rng.random((1, 4, 4)) < 0.7
        mask[0, 0, 0] = True

        report = check_gradients(lambda: silog_loss(pred, gt, mask), [pred])

        assert report.passed(1e-4)


class TestComputeMetrics:
    """Tests for compute_metrics function."""

    def test_perfect_prediction(self, rng):
        gt = rng.uniform(0.5, 9.0, size=(1, 4, 4))
        report = compute_metrics(gt, gt, full_mask(gt.shape))

        assert report.abs_rel == report.rmse == report.log10 == report.sq_rel == 0.0
        assert report.delta1 == report.delta2 == report.delta3 == 1.0
        assert report.n_valid == 16

    def test_double_depth(self):
        report = compute_metrics(np.full((1, 1, 1), 2.0), np.ones((1, 1, 1)), full_mask((1, 1, 1)))

        assert report.abs_rel == pytest.approx(1.0)
        assert report.rmse == pytest.approx(1.0)
        assert report.sq_rel == pytest.approx(1.0)
        assert report.log10 == pytest.approx(0.30103, abs=1e-5)
        assert report.delta1 == report.delta2 == report.delta3 == 0.0

    def test_within_first_threshold(self):
        report = compute_metrics(np.full((1, 1, 1), 1.2), np.ones((1, 1, 1)), full_mask((1, 1, 1)))

        assert report.abs_rel == pytest.approx(0.2)
        assert report.delta1 == 1.0

    def test_matches_scalar_loop(self, rng):
        pred = rng.uniform(0.2, 10.0, size=(1, 16, 16))
        gt = rng.uniform(0.2, 10.0, size=(1, 16, 16))
        mask = rng.random((1, 16, 16)) < 0.8

        report = compute_metrics(pred, gt, mask)

        pairs = [(p, g) for p, g, m in zip(pred.flat, gt.flat, mask.flat) if m]
        n = len(pairs)
        assert report.abs_rel == pytest.approx(sum(abs(p - g) / g for p, g in pairs) / n, abs=1e-6)
        rmse = math.sqrt(sum((p - g) ** 2 for p, g in pairs) / n)
        assert report.rmse == pytest.approx(rmse, abs=1e-6)
        assert report.sq_rel == pytest.approx(sum((p - g) ** 2 / g for p, g in pairs) / n, abs=1e-6)
        assert report.log10 == pytest.approx(
            sum(abs(math.log10(p) - math.log10(g)) for p, g in pairs) / n, abs=1e-6
        )
        assert report.delta2 == pytest.approx(
            sum(max(p / g, g / p) < 1.25**2 for p, g in pairs) / n, abs=1e-6
        )

    def test_thresholds_nest(self, rng):
        for _ in range(20):
            pred = rng.uniform(0.2, 10.0, size=(1, 8, 8))
            gt = rng.uniform(0.2, 10.0, size=(1, 8, 8))
            report = compute_metrics(pred, gt, full_mask(gt.shape))
            assert report.delta1 <= report.delta2 <= report.delta3

    def test_empty_mask(self):
        with pytest.raises(EmptyMaskError):
            compute_metrics(np.ones((1, 2, 2)), np.ones((1, 2, 2)), np.zeros((1, 2, 2)))


class TestMetricReport:
    """Tests for MetricReport class."""

    def test_as_text(self):
        report = compute_metrics(np.full((1, 1, 1), 2.0), np.ones((1, 1, 1)), full_mask((1, 1, 1)))
        lines = report.as_text().splitlines()

        assert lines[0] == "abs_rel=1.0"
        assert "delta3=0.0" in lines
        assert lines[-1] == "n_valid=1"

    def test_mean_is_per_image(self):
        first = compute_metrics(np.full((1, 1, 1), 2.0), np.ones((1, 1, 1)), full_mask((1, 1, 1)))
        second = compute_metrics(np.ones((1, 2, 2)), np.ones((1, 2, 2)), full_mask((1, 2, 2)))

        report = MetricReport.mean([first, second])

        assert report.abs_rel == pytest.approx(0.5)
        assert report.delta1 == pytest.approx(0.5)
        assert report.n_valid == 5

    def test_mean_of_nothing(self):
        with pytest.raises(EmptyMaskError):
            MetricReport.mean([])


class TestBuildValidityMask:
    """Tests for build_validity_mask function."""

    def test_zero_depth_is_invalid(self):
        assert not build_validity_mask(np.zeros((1, 4, 4)), (1e-3, 10.0)).any()

    def test_range_cap(self):
        mask = build_validity_mask(np.array([5.0, 200.0]), (1e-3, 80.0))
        np.testing.assert_array_equal(mask, [True, False])

    def test_upper_bound_inclusive(self):
        mask = build_validity_mask(np.array([1e-3, 10.0]), (1e-3, 10.0))
        np.testing.assert_array_equal(mask, [False, True])

    def test_nan_excluded(self):
        mask = build_validity_mask(np.array([np.nan, np.inf, 1.0]), (1e-3, 10.0))
        np.testing.assert_array_equal(mask, [False, False, True])
