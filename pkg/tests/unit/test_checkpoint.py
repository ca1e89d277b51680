"""Tests for the ULAB checkpoint container."""

import struct

import numpy as np
import pytest

from unitlab.core.error_handling import FileFormatError
from unitlab.nn.checkpoint import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)


class TestCheckpoint:
    """Checkpoint files."""

    def test_round_trip_is_bit_exact(self, tmp_path, rng):
        """Names, order, shapes and bytes survive a save and load."""
        tensors = {
            "block0.dense.W": rng.normal(size=(3, 4)),
            "block0.norm.alpha": np.array([0.0, 0.5, 1.0]),
            "scalar": np.array(np.pi),
        }
        path = save_checkpoint(tmp_path / "ckpt" / "epoch_0001.ulab", tensors)
        loaded = load_checkpoint(path)
        assert list(loaded) == list(tensors)
        for name, value in tensors.items():
            assert loaded[name].shape == value.shape
            assert loaded[name].tobytes() == value.tobytes()

    def test_header_layout(self):
        """Magic, version and count lead the file."""
        blob = encode_checkpoint({"w": np.ones(2)})
        magic, version, count = struct.unpack_from("<4sII", blob, 0)
        assert (magic, version, count) == (b"ULAB", 1, 1)

    def test_bad_magic(self):
        """A foreign magic is rejected."""
        blob = b"XXXX" + encode_checkpoint({"w": np.ones(2)})[4:]
        with pytest.raises(FileFormatError):
            decode_checkpoint(blob)

    def test_truncated(self):
        """A short payload is rejected."""
        blob = encode_checkpoint({"w": np.ones(4)})
        with pytest.raises(FileFormatError):
            decode_checkpoint(blob[:-3])

    def test_trailing_bytes(self):
        """Bytes after the last tensor are rejected."""
        with pytest.raises(FileFormatError):
            decode_checkpoint(encode_checkpoint({"w": np.ones(2)}) + b"\x00")

    def test_header_too_short(self):
        """A blob shorter than the header is rejected."""
        with pytest.raises(FileFormatError):
            decode_checkpoint(b"ULA")

    def test_missing_file(self, tmp_path):
        """A missing path maps to FileFormatError."""
        with pytest.raises(FileFormatError):
            load_checkpoint(tmp_path / "absent.ulab")

    def test_scalar_written_with_rank_zero(self):
        """A 0-d tensor is stored with rank 0 and no extents."""
        blob = encode_checkpoint({"s": np.array(2.5)})
        offset = struct.calcsize("<4sII") + struct.calcsize("<H") + 1
        assert blob[offset] == 0
        assert struct.unpack_from("<d", blob, offset + 1)[0] == 2.5
        assert decode_checkpoint(blob)["s"].shape == ()
