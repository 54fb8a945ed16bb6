"""
Write a synthetic sample set.

Usage:
    depthkit generate --scenes 16 --seed 3 --size 64 --out runs/data
"""

from pathlib import Path

from depthkit.commands.base import BaseCommand, add_data_arguments, depth_range
from depthkit.config import DEPTH_PRESETS
from depthkit.data import generate_scenes, save_samples
from depthkit.helpers import log


class Command(BaseCommand):
    name = "generate"
    help = "Generate synthetic RGB-D scenes into a .dten sample set"

    def add_arguments(self, parser):
        add_data_arguments(parser)
        parser.add_argument("--preset", choices=sorted(DEPTH_PRESETS), default="indoor")
        parser.add_argument("--dmin", type=float)
        parser.add_argument("--dmax", type=float)
        parser.add_argument("--out", type=Path, default=Path("runs/data"))

    def handle(self, **options):
        d_range = depth_range(options)
        samples = generate_scenes(options["scenes"], options["seed"], options["size"], d_range)
        path = save_samples(options["out"] / "samples.dten", samples)
        self.echo_config(options["out"], options)
        log(f"Wrote {len(samples)} sample(s) to {path}", level="success")
        return 0
