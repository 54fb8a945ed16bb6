"""Console entry point: ``depthkit <command> [flags]``."""

from __future__ import annotations

import argparse
from collections.abc import Sequence

from depthkit import __version__
from depthkit.config import get_config
from depthkit.discovery import load_commands
from depthkit.exceptions import ConfigError, DepthkitError
from depthkit.helpers import log


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="depthkit",
        description="Desk-scale monocular depth estimation with GLKAM and GBPM.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")
    parsers = {}
    for name, command in load_commands().items():
        sub = subparsers.add_parser(name, help=command.help, description=command.help)
        command.add_arguments(sub)
        sub.set_defaults(_command=command)
        parsers[name] = sub
    return parser, parsers


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command; returns 0 on success, 1 on failure, 2 on bad flags."""
    parser, parsers = build_parser()
    options = vars(parser.parse_args(argv))
    name = options.pop("command")
    command = options.pop("_command")

    try:
        get_config()
        return command.handle(**options)
    except ConfigError as exc:
        parsers[name].print_usage()
        log(str(exc), level="error")
        return 2
    except DepthkitError as exc:
        log(str(exc), level="error")
        return 1
    except OSError as exc:
        log(f"{exc.strerror or exc}: {exc.filename}", level="error")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
