"""
Write depth maps for a sample set.

Usage:
    depthkit predict --checkpoint runs/train/checkpoint.dten --samples runs/data/samples.dten
"""

from pathlib import Path

from depthkit.commands.base import BaseCommand, add_data_arguments, resolve_samples
from depthkit.container import write_container
from depthkit.helpers import log
from depthkit.model import load_checkpoint
from depthkit.runner import predict_samples


class Command(BaseCommand):
    name = "predict"
    help = "Predict depth for every sample and store the maps as .dten"

    def add_arguments(self, parser):
        parser.add_argument("--checkpoint", type=Path, required=True)
        parser.add_argument("--samples", type=Path)
        add_data_arguments(parser, scenes=4)
        parser.add_argument("--flip-average", action="store_true")
        parser.add_argument("--out", type=Path, default=Path("runs/predict"))

    def handle(self, **options):
        model = load_checkpoint(options["checkpoint"])
        samples = resolve_samples(options, model.config.depth_range)
        predictions = predict_samples(model, samples, options["flip_average"])

        entries = [(f"prediction.{i:04d}", depth) for i, depth in enumerate(predictions)]
        path = write_container(options["out"] / "predictions.dten", entries)
        self.echo_config(options["out"], options, model=model.config)
        log(f"Wrote {len(entries)} depth map(s) to {path}", level="success")
        return 0
