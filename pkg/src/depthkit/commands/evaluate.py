"""
Score a checkpoint on a sample set.

Usage:
    depthkit eval --checkpoint runs/train/checkpoint.dten --samples runs/data/samples.dten
    depthkit eval --checkpoint runs/train/checkpoint.dten --flip-average
    depthkit eval --oracle --scenes 4
"""

import json
from pathlib import Path

from depthkit.commands.base import BaseCommand, add_data_arguments, depth_range, resolve_samples
from depthkit.config import DEPTH_PRESETS
from depthkit.exceptions import ConfigError
from depthkit.model import load_checkpoint
from depthkit.runner import EvalRunner, StderrWriter


class Command(BaseCommand):
    name = "eval"
    help = "Compute AbsRel, RMSE, Log10, SqRel and the delta accuracies"

    def add_arguments(self, parser):
        parser.add_argument("--checkpoint", type=Path, help="Checkpoint written by train")
        parser.add_argument("--samples", type=Path, help="Sample set written by generate")
        add_data_arguments(parser, scenes=4)
        parser.add_argument("--preset", choices=sorted(DEPTH_PRESETS), default="indoor")
        parser.add_argument("--dmin", type=float)
        parser.add_argument("--dmax", type=float)
        parser.add_argument(
            "--flip-average",
            action="store_true",
            help="Average the prediction with the mirrored prediction of the mirrored image",
        )
        parser.add_argument(
            "--oracle",
            action="store_true",
            help="Score ground truth against itself (no checkpoint needed)",
        )
        parser.add_argument("--out", type=Path, default=Path("runs/eval"))

    def handle(self, **options):
        model = None
        d_range = depth_range(options)
        if not options["oracle"]:
            if options.get("checkpoint") is None:
                raise ConfigError("--checkpoint is required unless --oracle is given")
            model = load_checkpoint(options["checkpoint"])
            d_range = model.config.depth_range

        samples = resolve_samples(options, d_range)
        runner = EvalRunner(
            flip_average=options["flip_average"],
            oracle=options["oracle"],
            output=StderrWriter(),
        )
        result = runner.run(model, samples)

        out_dir = options["out"]
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(result.report.as_text())
        (out_dir / "report.json").write_text(
            json.dumps(result.report.to_dict(), indent=2, sort_keys=True) + "\n"
        )
        self.echo_config(out_dir, options, model=model.config if model else None)
        return 0
