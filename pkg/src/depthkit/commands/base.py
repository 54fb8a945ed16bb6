"""Shared command plumbing: the command base class and common flags."""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any

from depthkit.config import DEPTH_PRESETS, ModelConfig, RunConfig, TrainConfig
from depthkit.data import DepthSample, generate_scenes, load_samples
from depthkit.exceptions import ConfigError


class BaseCommand:
    """A ``depthkit`` subcommand.

    Subclasses set ``name`` and ``help``, declare flags in ``add_arguments``
    and do the work in ``handle``, returning the process exit code.
    """

    name = ""
    help = ""

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        pass

    def handle(self, **options: Any) -> int:
        raise NotImplementedError

    def echo_config(self, out_dir: Path, options: dict[str, Any], **records: Any) -> RunConfig:
        run = RunConfig(command=self.name, options=_plain(options), **records)
        run.write(out_dir)
        return run


def _plain(options: dict[str, Any]) -> dict[str, Any]:
    plain = {}
    for key, value in options.items():
        if key.startswith("_"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        plain[key] = value
    return plain


def parse_size(value: str) -> tuple[int, int]:
    """``64`` or ``64x96``; both sides must be positive multiples of 32."""
    try:
        parts = [int(part) for part in value.lower().split("x")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid size {value!r}") from exc
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or any(p < 32 or p % 32 for p in parts):
        raise argparse.ArgumentTypeError(f"size must be a multiple of 32, got {value!r}")
    return parts[0], parts[1]


def on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on or off, got {value!r}")
    return value == "on"


def add_model_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--channels", type=int, default=16, help="Base channel count C")
    parser.add_argument("--bins", type=int, default=32, help="Number of depth bins")
    parser.add_argument(
        "--preset",
        choices=sorted(DEPTH_PRESETS),
        default="indoor",
        help="Depth range preset (indoor: 10 m cap, outdoor: 80 m cap)",
    )
    parser.add_argument("--dmin", type=float, help="Minimum depth (overrides the preset)")
    parser.add_argument("--dmax", type=float, help="Maximum depth (overrides the preset)")
    parser.add_argument("--glkam", type=on_off, default=True, metavar="on|off")
    parser.add_argument("--gbpm", type=on_off, default=True, metavar="on|off")


def add_data_arguments(parser: argparse.ArgumentParser, scenes: int = 8) -> None:
    parser.add_argument("--size", type=parse_size, default=(64, 64), help="Image size, e.g. 64")
    parser.add_argument("--scenes", type=int, default=scenes, help="Number of synthetic scenes")
    parser.add_argument("--seed", type=int, default=0, help="Run seed")


def depth_range(options: dict[str, Any]) -> tuple[float, float]:
    d_min, d_max = DEPTH_PRESETS[options.get("preset") or "indoor"]
    if options.get("dmin") is not None:
        d_min = options["dmin"]
    if options.get("dmax") is not None:
        d_max = options["dmax"]
    return float(d_min), float(d_max)


def model_config(options: dict[str, Any]) -> ModelConfig:
    config = ModelConfig(
        base_channels=options["channels"],
        n_bins=options["bins"],
        depth_range=depth_range(options),
        use_glkam=options["glkam"],
        use_gbpm=options["gbpm"],
        seed=options["seed"],
    )
    config.validate()
    return config


def train_config(options: dict[str, Any]) -> TrainConfig:
    config = TrainConfig(
        steps=options["steps"],
        epochs=options.get("epochs"),
        scenes=options["scenes"],
        batch_size=options["batch_size"],
        lr_start=options["lr_start"],
        lr_end=options["lr_end"],
        image_size=options["size"],
        augment=not options.get("no_augment", False),
        log_every=options["log_every"],
        seed=options["seed"],
    )
    config.validate()
    return config


def resolve_samples(options: dict[str, Any], depth_range: tuple[float, float]) -> list[DepthSample]:
    """Samples from ``--samples`` when given, otherwise freshly generated."""
    if options.get("samples"):
        return load_samples(options["samples"])
    if options["scenes"] < 1:
        raise ConfigError(f"--scenes must be >= 1, got {options['scenes']}")
    # Offset so evaluation scenes differ from training scenes of the same seed.
    return generate_scenes(options["scenes"], options["seed"] + 1, options["size"], depth_range)
