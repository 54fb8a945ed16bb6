"""Tests for depthkit.discovery module."""

import sys

import pytest

from depthkit.commands.base import BaseCommand
from depthkit.discovery import discover_commands, load_commands


class TestDiscoverCommands:
    """Tests for discover_commands function."""

    def test_finds_builtin_commands(self):
        files = discover_commands()

        assert [f.file_name for f in files] == [
            "evaluate.py",
            "generate.py",
            "predict.py",
            "probe.py",
            "train.py",
        ]
        assert files[0].module_path == "depthkit.commands.evaluate"

    def test_skips_base_and_private_modules(self):
        names = {f.file_name for f in discover_commands()}
        assert "base.py" not in names
        assert "__init__.py" not in names

    def test_custom_package(self, tmp_path, monkeypatch):
        """Test discovery in another package with a custom pattern."""
        package = tmp_path / "extra_commands"
        package.mkdir()
        (package / "__init__.py").write_text("")
        (package / "cmd_hello.py").write_text(
            "from depthkit.commands.base import BaseCommand\n\n"
            "class Command(BaseCommand):\n"
            "    name = 'hello'\n"
            "    help = 'Say hello'\n\n"
            "    def handle(self, **options):\n"
            "        return 0\n"
        )
        (package / "notes.py").write_text("")
        monkeypatch.syspath_prepend(str(tmp_path))

        try:
            files = discover_commands("extra_commands", file_pattern="cmd_*.py")
            command = files[0].load()
        finally:
            sys.modules.pop("extra_commands", None)
            sys.modules.pop("extra_commands.cmd_hello", None)

        assert [f.file_name for f in files] == ["cmd_hello.py"]
        assert command.name == "hello"
        assert command.handle() == 0


class TestLoadCommands:
    """Tests for load_commands function."""

    def test_keys_are_cli_names(self):
        commands = load_commands()

        assert set(commands) == {"eval", "generate", "predict", "probe", "train"}
        assert all(isinstance(command, BaseCommand) for command in commands.values())

    @pytest.mark.parametrize("name", ["eval", "generate", "predict", "probe", "train"])
    def test_every_command_has_help(self, name):
        assert load_commands()[name].help
