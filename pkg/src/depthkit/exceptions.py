"""Exception hierarchy for depthkit."""

from __future__ import annotations


class DepthkitError(Exception):
    """Base class for every error raised by depthkit."""


class ShapeError(DepthkitError, ValueError):
    """Incompatible shapes, axes, widths or channel counts."""


class TapeError(DepthkitError):
    """Backward was called on something it cannot differentiate."""


class ConfigError(DepthkitError, ValueError):
    """A configuration value is out of range or inconsistent."""


class BinSpecError(DepthkitError, ValueError):
    """Bin widths, depth range or probability volume violate their contract."""


class EmptyMaskError(DepthkitError, ValueError):
    """A loss or metric was requested over zero valid pixels."""


class ProbeFailure(DepthkitError):
    """A verification probe found a violated property."""

    def __init__(self, probe: str, message: str):
        super().__init__(f"{probe}: {message}")
        self.probe = probe


class ContainerError(DepthkitError):
    """Base class for `.dten` container read/write errors."""


class BadMagicError(ContainerError):
    """The file does not start with the container magic."""


class UnsupportedVersionError(ContainerError):
    """The container version is not understood by this reader."""


class TruncatedPayloadError(ContainerError):
    """The file length does not match what the header announces."""


class DuplicateNameError(ContainerError):
    """Two entries share a name."""


class UnknownDtypeError(ContainerError):
    """An entry uses a dtype code this reader does not know."""


class InvalidNameError(ContainerError):
    """An entry name is not valid UTF-8."""
