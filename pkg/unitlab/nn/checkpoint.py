"""ULAB checkpoint container.

Layout (little-endian)::

    magic "ULAB" | version u32 | tensor count u32
    per tensor: name length u16 | name (utf-8) | rank u8 | extents u32[rank] | f64 payload
"""

import logging
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from ..core.constants import CheckpointFormat
from ..core.error_handling import FileFormatError, handle_errors

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sII")
_NAME_LEN = struct.Struct("<H")
_RANK = struct.Struct("<B")


def encode_checkpoint(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [_HEADER.pack(CheckpointFormat.MAGIC, CheckpointFormat.VERSION, len(tensors))]
    for name, value in tensors.items():
        array = np.require(np.asarray(value, dtype="<f8"), requirements="C")
        encoded = name.encode("utf-8")
        parts.append(_NAME_LEN.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_RANK.pack(array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes())
    return b"".join(parts)


@handle_errors(
    error_types={struct.error: FileFormatError, UnicodeDecodeError: FileFormatError},
    default_error=FileFormatError,
)
def decode_checkpoint(blob: bytes) -> dict[str, np.ndarray]:
    magic, version, count = _HEADER.unpack_from(blob, 0)
    if magic != CheckpointFormat.MAGIC:
        raise FileFormatError(f"bad checkpoint magic {magic!r}")
    if version != CheckpointFormat.VERSION:
        raise FileFormatError(f"unsupported checkpoint version {version}")

    offset = _HEADER.size
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = _NAME_LEN.unpack_from(blob, offset)
        offset += _NAME_LEN.size
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = _RANK.unpack_from(blob, offset)
        offset += _RANK.size
        shape = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank

        size = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * size
        if end > len(blob):
            raise FileFormatError(f"checkpoint truncated inside tensor '{name}'")
        tensors[name] = (
            np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
            .astype(np.float64)
            .reshape(shape)
        )
        offset = end

    if offset != len(blob):
        raise FileFormatError(f"{len(blob) - offset} trailing bytes after last tensor")
    return tensors


def save_checkpoint(path: str | Path, tensors: Mapping[str, np.ndarray]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(encode_checkpoint(tensors))
    logger.debug(f"Wrote {len(tensors)} tensors to {target}")
    return target


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    source = Path(path)
    try:
        blob = source.read_bytes()
    except OSError as e:
        raise FileFormatError(f"Cannot read checkpoint {source}: {e}") from e
    return decode_checkpoint(blob)
