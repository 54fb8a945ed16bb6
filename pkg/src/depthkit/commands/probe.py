"""
Run verification probes.

Usage:
    depthkit probe                  # all probes
    depthkit probe erf bins
    depthkit probe bins --zero-width-mlp
"""

import json
from functools import partial
from pathlib import Path

from depthkit.commands.base import BaseCommand, add_model_arguments, model_config, parse_size
from depthkit.exceptions import ConfigError
from depthkit.probes import PROBES, probe_ablate, probe_bins, probe_erf, probe_gradcheck
from depthkit.runner import ProbeRunner, StderrWriter


class Command(BaseCommand):
    name = "probe"
    help = "Gradient checks, receptive-field extents, bin layout and the ablation matrix"

    def add_arguments(self, parser):
        parser.add_argument(
            "probes",
            nargs="*",
            help=f"Probes to run (default: all of {', '.join(PROBES)})",
        )
        add_model_arguments(parser)
        parser.add_argument("--size", type=parse_size, default=(64, 64))
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument(
            "--zero-width-mlp",
            action="store_true",
            help="bins: zero the width MLP, which must give uniform widths",
        )
        parser.add_argument("--out", type=Path, help="Also write probe_report.json here")

    def handle(self, **options):
        config = model_config(options)
        seed, size = options["seed"], options["size"]
        available = {
            "gradcheck": partial(probe_gradcheck, seed=seed),
            "erf": probe_erf,
            "bins": partial(
                probe_bins, config, seed, size, zero_width_mlp=options["zero_width_mlp"]
            ),
            "ablate": partial(probe_ablate, config, seed, size),
        }
        names = options["probes"] or list(PROBES)
        unknown = [name for name in names if name not in available]
        if unknown:
            raise ConfigError(f"unknown probe(s) {unknown}, choose from {list(PROBES)}")
        result = ProbeRunner(verbose=True, output=StderrWriter()).run(
            [(name, available[name]) for name in names]
        )

        if options.get("out") is not None:
            out_dir = options["out"]
            self.echo_config(out_dir, options, model=config)
            record = {
                "passed": [report.name for report in result.reports],
                "failed": {name: str(exc) for name, exc in result.errors},
                "values": {report.name: report.values for report in result.reports},
            }
            (out_dir / "probe_report.json").write_text(
                json.dumps(record, indent=2, sort_keys=True, default=str) + "\n"
            )
        return 0 if result.success else 1
