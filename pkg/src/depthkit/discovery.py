"""Discovers CLI command modules in the ``depthkit.commands`` package."""

from __future__ import annotations

import importlib
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from collections.abc import Sequence

    from depthkit.commands.base import BaseCommand

COMMANDS_PACKAGE = "depthkit.commands"


@dataclass
class CommandFile:
    """Represents a discovered command module."""

    file_path: Path
    module_path: str

    @property
    def file_name(self) -> str:
        """Get the file name without path."""
        return self.file_path.name

    def load(self) -> BaseCommand:
        """Import the module and instantiate its ``Command`` class."""
        module = importlib.import_module(self.module_path)
        return module.Command()


def discover_commands(
    package: str = COMMANDS_PACKAGE,
    file_pattern: str = "*.py",
    exclude: Sequence[str] = ("__init__.py", "base.py"),
) -> list[CommandFile]:
    """Find command modules in ``package``, sorted by file name.

    Args:
        package: Dotted name of the package holding the command modules.
        file_pattern: Glob pattern for command files.
        exclude: File names that are never commands.

    Returns:
        List of CommandFile objects.

    Example:
        >>> [c.file_name for c in discover_commands()]
        ['evaluate.py', 'generate.py', 'predict.py', 'probe.py', 'train.py']
    """
    package_dir = Path(importlib.import_module(package).__file__).parent
    skip = set(exclude)
    return [
        CommandFile(file_path=path, module_path=f"{package}.{path.stem}")
        for path in sorted(package_dir.glob(file_pattern))
        if path.name not in skip and not path.name.startswith("_")
    ]


def load_commands(package: str = COMMANDS_PACKAGE) -> dict[str, BaseCommand]:
    """Instantiate every discovered command, keyed by its CLI name."""
    commands: dict[str, BaseCommand] = {}
    for command_file in discover_commands(package):
        command = command_file.load()
        commands[command.name] = command
    return commands
