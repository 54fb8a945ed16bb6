"""Tests for depthkit.container module."""

import struct

import numpy as np
import pytest

from depthkit.container import (
    MAGIC,
    decode_text,
    encode_text,
    pack_container,
    read_container,
    unpack_container,
    write_container,
)
from depthkit.exceptions import (
    BadMagicError,
    DuplicateNameError,
    InvalidNameError,
    TruncatedPayloadError,
    UnknownDtypeError,
    UnsupportedVersionError,
)
from depthkit.tensor import tensor


@pytest.fixture
def entries(rng):
    return {
        "weights": rng.normal(size=(3, 4)).astype(np.float32),
        "bias": rng.normal(size=4),
        "scalar": np.array(2.5),
        "volume": rng.normal(size=(2, 1, 3, 2)).astype(np.float32),
    }


class TestRoundTrip:
    """Write-then-read behaviour."""

    def test_bit_exact(self, entries, tmp_path):
        path = write_container(tmp_path / "nested" / "out.dten", entries)

        restored = read_container(path)

        assert list(restored) == list(entries)
        for name, array in entries.items():
            assert restored[name].dtype == array.dtype
            assert restored[name].shape == array.shape
            assert restored[name].tobytes() == array.tobytes()

    def test_empty_container(self):
        data = pack_container([])
        assert data == MAGIC + struct.pack("<HH", 1, 0)
        assert unpack_container(data) == {}

    def test_accepts_tensors(self):
        restored = unpack_container(pack_container([("t", tensor([1.0, 2.0]))]))
        np.testing.assert_array_equal(restored["t"], [1.0, 2.0])

    def test_header_layout(self):
        data = pack_container([("ab", np.zeros((2, 3), dtype=np.float64))])

        assert data[:4] == b"DTEN"
        assert struct.unpack_from("<HHH", data, 4) == (1, 1, 2)
        assert data[10:12] == b"ab"
        assert struct.unpack_from("<BB2Q", data, 12) == (1, 2, 2, 3)
        assert len(data) == 12 + 2 + 16 + 6 * 8

    def test_text_entries(self):
        text = '{"n_bins": 32, "name": "δ"}'
        restored = unpack_container(pack_container([("meta", encode_text(text))]))
        assert decode_text(restored["meta"]) == text


class TestReaderErrors:
    """Each malformed input raises its own error."""

    def test_bad_magic(self, entries):
        data = bytearray(pack_container(entries))
        data[0] ^= 0xFF
        with pytest.raises(BadMagicError, match="bad magic"):
            unpack_container(bytes(data))

    def test_unsupported_version(self, entries):
        data = bytearray(pack_container(entries))
        struct.pack_into("<H", data, 4, 99)
        with pytest.raises(UnsupportedVersionError, match="99"):
            unpack_container(bytes(data))

    def test_truncated(self, entries):
        data = pack_container(entries)
        with pytest.raises(TruncatedPayloadError, match="truncated"):
            unpack_container(data[:-3])

    def test_trailing_bytes(self, entries):
        with pytest.raises(TruncatedPayloadError, match="trailing"):
            unpack_container(pack_container(entries) + b"\x00")

    def test_unknown_dtype_code(self):
        data = bytearray(pack_container([("x", np.zeros(1, dtype=np.float32))]))
        data[11] = 7
        with pytest.raises(UnknownDtypeError, match="7"):
            unpack_container(bytes(data))

    def test_duplicate_names_on_read(self):
        one = pack_container([("x", np.zeros(1, dtype=np.float32))])
        body = one[8:]
        data = MAGIC + struct.pack("<HH", 1, 2) + body + body
        with pytest.raises(DuplicateNameError):
            unpack_container(data)

    def test_name_not_utf8(self):
        data = bytearray(pack_container([("x", np.zeros(1, dtype=np.float32))]))
        data[10] = 0xFF
        with pytest.raises(InvalidNameError, match="utf-8"):
            unpack_container(bytes(data))

    def test_extents_larger_than_file(self):
        data = bytearray(pack_container([("x", np.zeros((1, 1), dtype=np.float32))]))
        struct.pack_into("<QQ", data, 13, 2**40, 2**40)
        with pytest.raises(TruncatedPayloadError, match="x payload"):
            unpack_container(bytes(data))


class TestWriterErrors:
    """Writer-side validation."""

    def test_duplicate_names(self):
        with pytest.raises(DuplicateNameError):
            pack_container([("x", np.zeros(1)), ("x", np.ones(1))])

    def test_integer_arrays_have_no_code(self):
        with pytest.raises(UnknownDtypeError):
            pack_container([("x", np.zeros(2, dtype=np.int32))])
