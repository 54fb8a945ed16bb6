"""
Train a depth network on synthetic scenes.

Usage:
    depthkit train --steps 300 --scenes 8 --out runs/train
    depthkit train --epochs 10 --glkam off --gbpm off
"""

from pathlib import Path

from depthkit.commands.base import (
    BaseCommand,
    add_data_arguments,
    add_model_arguments,
    model_config,
    train_config,
)
from depthkit.data import load_samples
from depthkit.model import save_checkpoint
from depthkit.runner import StderrWriter, TrainRunner, write_loss_log


class Command(BaseCommand):
    name = "train"
    help = "Train on generated scenes and write a checkpoint plus a CSV loss log"

    def add_arguments(self, parser):
        add_model_arguments(parser)
        add_data_arguments(parser)
        parser.add_argument("--steps", type=int, default=100, help="Optimizer steps")
        parser.add_argument(
            "--epochs",
            type=int,
            help="Train for whole passes over the scenes instead of --steps",
        )
        parser.add_argument("--batch-size", type=int, default=8)
        parser.add_argument("--lr-start", type=float, default=4e-5)
        parser.add_argument("--lr-end", type=float, default=4e-6)
        parser.add_argument("--log-every", type=int, default=10)
        parser.add_argument(
            "--no-augment",
            action="store_true",
            help="Disable flip, rotation and brightness augmentation",
        )
        parser.add_argument(
            "--samples",
            type=Path,
            help="Train on a saved sample set instead of generating scenes",
        )
        parser.add_argument("--out", type=Path, default=Path("runs/train"))

    def handle(self, **options):
        model = model_config(options)
        train = train_config(options)
        out_dir = options["out"]

        runner = TrainRunner(model, train, verbose=True, output=StderrWriter())
        samples = load_samples(options["samples"]) if options.get("samples") else None
        result = runner.run(samples)

        save_checkpoint(out_dir / "checkpoint.dten", result.model)
        write_loss_log(out_dir / "loss_log.csv", result.records)
        self.echo_config(out_dir, options, model=model, train=train)
        return 0
