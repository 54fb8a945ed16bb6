"""The ``.dten`` tensor container.

Layout (all integers little-endian)::

    "DTEN" | version u16 | entry count u16
    per entry: name length u16 | name (utf-8) | dtype u8 | rank u8 |
               extents u64 * rank | payload (row-major)

dtype codes: 0 = float32, 1 = float64.
"""

from __future__ import annotations

import math
import struct
from collections.abc import Iterable, Mapping
from pathlib import Path

import numpy as np

from depthkit.exceptions import (
    BadMagicError,
    ContainerError,
    DuplicateNameError,
    InvalidNameError,
    TruncatedPayloadError,
    UnknownDtypeError,
    UnsupportedVersionError,
)
from depthkit.tensor import Tensor

MAGIC = b"DTEN"
VERSION = 1
EXTENSION = ".dten"

DTYPE_CODES: dict[int, np.dtype] = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR_KIND = {("f", 4): 0, ("f", 8): 1}

_HEADER = struct.Struct("<4sHH")


def _entries(entries: Mapping[str, object] | Iterable[tuple[str, object]]) -> list[tuple[str, np.ndarray]]:
    items = entries.items() if isinstance(entries, Mapping) else entries
    out: list[tuple[str, np.ndarray]] = []
    seen: set[str] = set()
    for name, value in items:
        if name in seen:
            raise DuplicateNameError(f"duplicate entry name {name!r}")
        seen.add(name)
        array = value.data if isinstance(value, Tensor) else np.asarray(value)
        out.append((name, array))
    return out


def pack_container(entries: Mapping[str, object] | Iterable[tuple[str, object]]) -> bytes:
    """Serialize named arrays to container bytes."""
    items = _entries(entries)
    if len(items) > 0xFFFF:
        raise ContainerError(f"too many entries ({len(items)})")
    chunks = [_HEADER.pack(MAGIC, VERSION, len(items))]
    for name, array in items:
        code = _CODE_FOR_KIND.get((array.dtype.kind, array.dtype.itemsize))
        if code is None:
            raise UnknownDtypeError(f"{name}: no dtype code for {array.dtype}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF or array.ndim > 0xFF:
            raise ContainerError(f"{name}: name or rank too large")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", code, array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        # Payload is always written little-endian.
        chunks.append(np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buffer: bytes):
        self.buffer = buffer
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.buffer):
            raise TruncatedPayloadError(
                f"truncated {what}: need {count} bytes at offset {self.offset}, "
                f"file has {len(self.buffer)}"
            )
        chunk = self.buffer[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def unpack_container(buffer: bytes) -> dict[str, np.ndarray]:
    """Parse container bytes, validating magic, version and total length."""
    reader = _Reader(buffer)
    if len(buffer) < 4 or buffer[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buffer[:4])!r}, expected {MAGIC!r}")
    _, version, count = reader.unpack(_HEADER.format, "header")
    if version != VERSION:
        raise UnsupportedVersionError(f"container version {version} is not supported")

    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_length,) = reader.unpack("<H", "name length")
        raw_name = reader.take(name_length, "name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            offset = reader.offset - name_length
            raise InvalidNameError(f"entry name at offset {offset} is not utf-8") from exc
        if name in entries:
            raise DuplicateNameError(f"duplicate entry name {name!r}")
        code, rank = reader.unpack("<BB", f"{name} header")
        dtype = DTYPE_CODES.get(code)
        if dtype is None:
            raise UnknownDtypeError(f"{name}: unknown dtype code {code}")
        shape = reader.unpack(f"<{rank}Q", f"{name} extents")
        size = math.prod(shape)
        payload = reader.take(size * dtype.itemsize, f"{name} payload")
        # Stored little-endian; hand back native byte order.
        entries[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if reader.offset != len(buffer):
        raise TruncatedPayloadError(
            f"length mismatch: {len(buffer) - reader.offset} unexpected trailing bytes"
        )
    return entries


def write_container(path: str | Path, entries) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pack_container(entries))
    return path


def read_container(path: str | Path) -> dict[str, np.ndarray]:
    return unpack_container(Path(path).read_bytes())


def encode_text(text: str) -> np.ndarray:
    """Store UTF-8 text as a float32 vector of byte values."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float32)


def decode_text(array: np.ndarray) -> str:
    return np.asarray(array).astype(np.uint8).tobytes().decode("utf-8")
