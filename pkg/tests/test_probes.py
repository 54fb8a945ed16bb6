"""Tests for depthkit.probes module."""

import numpy as np
import pytest

from depthkit.config import ModelConfig
from depthkit.exceptions import ProbeFailure
from depthkit.probes import (
    ABLATIONS,
    ERF_EXPECTED,
    impulse_extent,
    probe_ablate,
    probe_bins,
    probe_erf,
    probe_gradcheck,
)


class TestImpulseExtent:
    """Tests for impulse_extent function."""

    def test_bounding_box_side(self):
        response = np.zeros((1, 9, 9))
        response[0, 4, 2] = 1.0
        response[0, 4, 6] = -1.0
        assert impulse_extent(response) == 5

    def test_empty_response(self):
        assert impulse_extent(np.zeros((1, 5, 5))) == 0


class TestProbeErf:
    """Tests for probe_erf function."""

    def test_cascade_extents(self):
        report = probe_erf()

        assert tuple(report.values[f"group{i}"] for i in range(3)) == ERF_EXPECTED
        assert report.lines[-1] == "group0: 11, group1: 23, group2: 39"

    def test_field_larger_than_input_fails(self):
        with pytest.raises(ProbeFailure, match="erf"):
            probe_erf(size=21)


class TestProbeGradcheck:
    """Tests for probe_gradcheck function."""

    def test_selected_cases_pass(self):
        report = probe_gradcheck(only=["elementwise", "softmax", "reshaping", "silog"])

        expected = {"elementwise", "softmax", "reshaping", "silog", "max_rel_error"}
        assert set(report.values) == expected
        assert report.values["max_rel_error"] <= 1e-4
        assert report.lines[-1].startswith("max rel. err")

    def test_layer_cases_pass(self):
        report = probe_gradcheck(only=["conv2d", "conv2d_depthwise", "pool2d", "layer_norm"])
        assert report.values["max_rel_error"] <= 1e-4

    def test_module_cases_pass(self):
        report = probe_gradcheck(only=["glkam", "gbpm", "ppm", "decoder_stage"])
        assert report.values["max_rel_error"] <= 1e-4

    def test_impossible_tolerance_fails(self):
        with pytest.raises(ProbeFailure, match="relative error above"):
            probe_gradcheck(tolerance=-1.0, only=["softmax"])

    @pytest.mark.slow
    def test_full_suite(self):
        report = probe_gradcheck()
        assert report.values["max_rel_error"] <= 1e-4
        assert "model" in report.values


class TestProbeBins:
    """Tests for probe_bins function."""

    def test_valid_bins(self, tiny_config):
        report = probe_bins(tiny_config, size=(32, 32))

        assert report.values["n_bins"] == 8
        assert report.values["center_first"] > tiny_config.d_min
        assert report.values["center_last"] < tiny_config.d_max

    def test_zero_width_mlp_gives_uniform_widths(self, tiny_config):
        report = probe_bins(tiny_config, size=(32, 32), zero_width_mlp=True)

        assert report.values["width_min"] == pytest.approx(1 / 8, abs=1e-6)
        assert report.values["width_max"] == pytest.approx(1 / 8, abs=1e-6)


class TestProbeAblate:
    """Tests for probe_ablate function."""

    def test_all_configurations_run(self, tiny_config):
        report = probe_ablate(tiny_config, size=(32, 32))

        assert list(report.values) == [name for name, _, _ in ABLATIONS]
        for row in report.values.values():
            assert np.isfinite(row["loss"])
            assert row["in_range"]
            assert row["uncovered"] == []
        assert report.values["baseline"]["params"] < report.values["both"]["params"]
        assert len(report.lines) == 1 + len(ABLATIONS)

    def test_uses_model_config(self):
        config = ModelConfig(base_channels=8, n_bins=4)
        report = probe_ablate(config, size=(32, 32))
        assert report.values["+gbpm"]["params"] > report.values["baseline"]["params"]
