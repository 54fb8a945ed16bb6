"""Tests for depthkit.config module."""

import json

import pytest

from depthkit.config import (
    DEPTH_PRESETS,
    ModelConfig,
    RunConfig,
    TrainConfig,
    get_config,
)
from depthkit.exceptions import ConfigError


class TestGetConfig:
    """Tests for get_config function."""

    def test_default_values(self):
        """Test that defaults are used when nothing is configured."""
        config = get_config()

        assert config.precision == 32
        assert config.debug is False
        assert config.log_level == "INFO"

    def test_custom_values(self):
        """Test that a settings mapping overrides defaults."""
        config = get_config({"PRECISION": 64, "DEBUG": True, "LOG_LEVEL": "warning"})

        assert config.precision == 64
        assert config.debug is True
        assert config.log_level == "WARNING"

    def test_partial_override(self):
        """Test that only specified values are overridden."""
        config = get_config({"DEBUG": True})

        assert config.debug is True
        assert config.precision == 32  # default

    def test_environment_wins_over_settings(self, monkeypatch):
        monkeypatch.setenv("DEPTHNET_PRECISION", "64")
        monkeypatch.setenv("DEPTHNET_DEBUG", "0")

        config = get_config({"PRECISION": 32, "DEBUG": True})

        assert config.precision == 64
        assert config.debug is False

    def test_invalid_precision(self, monkeypatch):
        monkeypatch.setenv("DEPTHNET_PRECISION", "16")
        with pytest.raises(ConfigError, match="precision"):
            get_config()

    def test_invalid_log_level(self):
        with pytest.raises(ConfigError, match="log level"):
            get_config({"LOG_LEVEL": "chatty"})


class TestModelConfig:
    """Tests for ModelConfig validation and records."""

    def test_defaults_are_desk_scale(self):
        config = ModelConfig()
        config.validate()

        assert config.base_channels == 16
        assert config.n_bins == 32
        assert config.depth_range == DEPTH_PRESETS["indoor"]
        assert (config.d_min, config.d_max) == (1e-3, 10.0)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"base_channels": 6},
            {"n_bins": 0},
            {"depth_range": (5.0, 1.0)},
            {"encoder_kind": "swin"},
            {"ppm_grids": (1, 0)},
            {"width_norm": "relu"},
        ],
    )
    def test_rejects_invalid_values(self, overrides):
        with pytest.raises(ConfigError):
            ModelConfig(**overrides).validate()

    def test_record_round_trip_keeps_tuples(self):
        config = ModelConfig(base_channels=8, depth_range=(0.5, 80.0), ppm_grids=(1, 2))
        record = json.loads(json.dumps(config.to_dict()))

        restored = ModelConfig.from_dict(record)

        assert restored == config
        assert isinstance(restored.depth_range, tuple)

    def test_unknown_fields_are_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            ModelConfig.from_dict({"base_channels": 8, "heads": 4})


class TestTrainConfig:
    """Tests for TrainConfig schedule arithmetic."""

    def test_defaults_follow_reference_recipe(self):
        config = TrainConfig()

        assert config.betas == (0.9, 0.999)
        assert config.weight_decay == 0.01
        assert config.batch_size == 8
        assert (config.lr_start, config.lr_end) == (4e-5, 4e-6)

    def test_batch_scales_down_with_few_scenes(self):
        assert TrainConfig(scenes=3).effective_batch_size == 3
        assert TrainConfig(scenes=20).effective_batch_size == 8

    def test_epochs_override_steps(self):
        config = TrainConfig(steps=5, epochs=3, scenes=20, batch_size=8)
        assert config.total_steps == 9

    def test_steps_without_epochs(self):
        assert TrainConfig(steps=42).total_steps == 42

    def test_image_size_must_be_multiple_of_32(self):
        with pytest.raises(ConfigError, match="multiple of 32"):
            TrainConfig(image_size=(48, 64)).validate()


class TestRunConfig:
    """Tests for the resolved-config echo."""

    def test_config_id_is_stable(self):
        first = RunConfig("train", {"seed": 7, "steps": 3}, model=ModelConfig())
        second = RunConfig("train", {"steps": 3, "seed": 7}, model=ModelConfig())

        assert first.config_id == second.config_id
        assert len(first.config_id) == 32

    def test_config_id_tracks_changes(self):
        base = RunConfig("train", {"seed": 7})
        assert base.config_id != RunConfig("train", {"seed": 8}).config_id

    def test_write(self, tmp_path):
        run = RunConfig("eval", {"oracle": True}, train=TrainConfig(steps=2))

        path = run.write(tmp_path / "out")
        record = json.loads(path.read_text())

        assert path.name == "config.json"
        assert record["config_id"] == run.config_id
        assert record["command"] == "eval"
        assert record["train"]["steps"] == 2
