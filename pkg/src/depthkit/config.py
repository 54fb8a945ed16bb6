"""Configuration management for depthkit."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import TYPE_CHECKING, Any

from depthkit.exceptions import ConfigError

if TYPE_CHECKING:
    from collections.abc import Mapping

DEPTH_PRESETS: dict[str, tuple[float, float]] = {
    "indoor": (1e-3, 10.0),
    "outdoor": (1e-3, 80.0),
}

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass
class DepthkitConfig:
    """Process-wide settings.

    Values come from an optional settings mapping and can be overridden by
    environment variables:

        DEPTHKIT = {
            "PRECISION": 32,        # DEPTHNET_PRECISION
            "DEBUG": False,         # DEPTHNET_DEBUG
            "LOG_LEVEL": "INFO",    # DEPTHNET_LOG_LEVEL
        }
    """

    precision: int = 32
    debug: bool = False
    log_level: str = "INFO"


def get_config(settings: Mapping[str, Any] | None = None) -> DepthkitConfig:
    """Get depthkit configuration from a settings mapping and the environment."""
    user_config = dict(settings or {})

    precision = int(os.environ.get("DEPTHNET_PRECISION", user_config.get("PRECISION", 32)))
    if precision not in (32, 64):
        raise ConfigError(f"precision must be 32 or 64, got {precision}")

    debug_env = os.environ.get("DEPTHNET_DEBUG")
    debug = debug_env not in ("", "0", "false") if debug_env is not None else bool(
        user_config.get("DEBUG", False)
    )

    log_level = str(os.environ.get("DEPTHNET_LOG_LEVEL", user_config.get("LOG_LEVEL", "INFO")))
    if log_level.upper() not in LOG_LEVELS:
        raise ConfigError(f"unknown log level {log_level!r}")

    return DepthkitConfig(precision=precision, debug=debug, log_level=log_level.upper())


class _RecordMixin:
    """Dict conversion shared by the config records."""

    def to_dict(self) -> dict[str, Any]:
        record = asdict(self)  # type: ignore[call-overload]
        return {key: list(value) if isinstance(value, tuple) else value for key, value in record.items()}

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]):
        known = {f.name: f for f in fields(cls)}  # type: ignore[arg-type]
        unknown = set(record) - set(known)
        if unknown:
            raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
        values = {}
        for key, value in record.items():
            values[key] = tuple(value) if isinstance(value, list) else value
        config = cls(**values)
        config.validate()
        return config

    def validate(self) -> None:  # pragma: no cover - overridden
        pass


@dataclass(frozen=True)
class ModelConfig(_RecordMixin):
    """Architecture hyperparameters.

    The full-size network uses 192 base channels and 256 bins; the defaults
    here are the desk-scale values.
    """

    base_channels: int = 16
    n_bins: int = 32
    depth_range: tuple[float, float] = DEPTH_PRESETS["indoor"]
    use_glkam: bool = True
    use_gbpm: bool = True
    encoder_kind: str = "toy_pyramid"
    ppm_grids: tuple[int, ...] = (1, 2, 3, 6)
    hidden_activation: str = "gelu"
    width_norm: str = "softplus"
    width_eps: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if self.base_channels < 4 or self.base_channels % 4:
            raise ConfigError(
                f"base_channels must be a positive multiple of 4, got {self.base_channels}"
            )
        if self.n_bins < 1:
            raise ConfigError(f"n_bins must be >= 1, got {self.n_bins}")
        d_min, d_max = self.depth_range
        if not (0 < d_min < d_max):
            raise ConfigError(f"depth_range must satisfy 0 < d_min < d_max, got {self.depth_range}")
        if self.encoder_kind != "toy_pyramid":
            raise ConfigError(f"unknown encoder_kind {self.encoder_kind!r}")
        if not self.ppm_grids or any(g < 1 for g in self.ppm_grids):
            raise ConfigError(f"ppm_grids must be positive, got {self.ppm_grids}")
        if self.hidden_activation not in ("gelu", "relu", "sigmoid"):
            raise ConfigError(f"unknown hidden_activation {self.hidden_activation!r}")
        if self.width_norm not in ("softplus", "softmax"):
            raise ConfigError(f"unknown width_norm {self.width_norm!r}")
        if self.width_eps < 0:
            raise ConfigError(f"width_eps must be >= 0, got {self.width_eps}")

    @property
    def d_min(self) -> float:
        return float(self.depth_range[0])

    @property
    def d_max(self) -> float:
        return float(self.depth_range[1])


@dataclass(frozen=True)
class TrainConfig(_RecordMixin):
    """Training schedule.

    Defaults follow the reference recipe: Adam(0.9, 0.999), weight decay 0.01,
    batch size 8, learning rate decayed linearly from 4e-5 to 4e-6.
    """

    steps: int = 100
    epochs: int | None = None
    scenes: int = 8
    batch_size: int = 8
    lr_start: float = 4e-5
    lr_end: float = 4e-6
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    image_size: tuple[int, int] = (64, 64)
    augment: bool = True
    log_every: int = 10
    seed: int = 0
    silog_lambda: float = 0.85
    silog_alpha: float = 10.0

    def validate(self) -> None:
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.epochs is not None and self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.scenes < 1:
            raise ConfigError(f"scenes must be >= 1, got {self.scenes}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ConfigError(f"learning rates must be > 0, got {self.lr_start}, {self.lr_end}")
        height, width = self.image_size
        if height % 32 or width % 32 or height < 32 or width < 32:
            raise ConfigError(f"image_size must be a positive multiple of 32, got {self.image_size}")

    @property
    def effective_batch_size(self) -> int:
        """Batch size scaled down when fewer scenes than the batch exist."""
        return min(self.batch_size, self.scenes)

    @property
    def total_steps(self) -> int:
        if self.epochs is None:
            return self.steps
        return self.epochs * math.ceil(self.scenes / self.effective_batch_size)


@dataclass
class RunConfig:
    """Resolved configuration of one command run, echoed as ``config.json``."""

    command: str
    options: dict[str, Any]
    model: ModelConfig | None = None
    train: TrainConfig | None = None

    def to_dict(self) -> dict[str, Any]:
        record: dict[str, Any] = {"command": self.command, "options": dict(self.options)}
        if self.model is not None:
            record["model"] = self.model.to_dict()
        if self.train is not None:
            record["train"] = self.train.to_dict()
        return record

    @property
    def config_id(self) -> str:
        from depthkit.helpers import make_config_id

        return make_config_id(self.to_dict())

    def write(self, out_dir: str | Path) -> Path:
        path = Path(out_dir) / "config.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        record = {"config_id": self.config_id, **self.to_dict()}
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        return path
