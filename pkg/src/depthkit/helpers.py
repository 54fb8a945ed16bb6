"""Utility functions shared across depthkit."""

from __future__ import annotations

import hashlib
import json
import sys
from typing import Any

_LEVEL_ORDER = {"debug": 10, "info": 20, "success": 20, "warning": 30, "error": 40}
_PREFIXES = {"warning": "  ⚠ ", "error": "  ✗ ", "success": "  ✓ "}


def log(message: str, level: str = "info") -> None:
    """Log a diagnostic message to the error stream.

    Args:
        message: The message to log.
        level: Log level (debug, info, warning, error, success). Default is "info".

    Example:
        >>> log("Loaded checkpoint")
        >>> log("Fewer scenes than batch size", level="warning")
    """
    from depthkit.config import get_config

    threshold = _LEVEL_ORDER.get(get_config().log_level.lower(), 20)
    if _LEVEL_ORDER.get(level, 20) < threshold:
        return

    prefix = _PREFIXES.get(level, "  ")
    print(f"{prefix}{message}", file=sys.stderr)


def make_hash_id(value: str) -> str:
    """Create an MD5 hash ID from a string value.

    Args:
        value: The string to hash.

    Returns:
        32-character lowercase hexadecimal MD5 hash.
    """
    return hashlib.md5(value.encode()).hexdigest()


def derive_seed(seed: int, name: str) -> int:
    """Derive a stable 64-bit seed for a named stream from a run seed.

    Example:
        >>> derive_seed(0, "encoder.stage1.merge0.weight") == derive_seed(0, "encoder.stage1.merge0.weight")
        True
    """
    return int(make_hash_id(f"{seed}:{name}")[:16], 16)


def canonical_json(record: Any) -> str:
    """Serialize a record with sorted keys and no whitespace variation."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def make_config_id(record: Any) -> str:
    """Stable identifier of a resolved configuration record."""
    return make_hash_id(canonical_json(record))
