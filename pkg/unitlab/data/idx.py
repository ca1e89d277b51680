"""IDX container reader and writer (big-endian, unsigned-byte payloads).

Files ending in ``.gz`` are transparently (de)compressed.
"""

import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core.constants import IdxMagic
from ..core.error_handling import DimensionError, FileFormatError, handle_errors

logger = logging.getLogger(__name__)

_UBYTE = 0x08


@dataclass(frozen=True, eq=False)
class Dataset:
    """Images as N x C x H x W floats in [0, 1] (or N x d), integer labels."""

    images: np.ndarray
    labels: np.ndarray
    class_count: int = 10

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DimensionError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.class_count
        ):
            raise FileFormatError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def feature_dim(self) -> int:
        return int(np.prod(self.images.shape[1:]))

    def flatten(self) -> "Dataset":
        return Dataset(
            self.images.reshape(len(self), self.feature_dim), self.labels, self.class_count
        )

    def subset(self, n: int) -> "Dataset":
        """First ``n`` samples (all of them when n is 0 or exceeds the size)."""
        if n <= 0 or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n], self.class_count)


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as handle:
            return handle.read()
    return path.read_bytes()


@handle_errors(
    error_types={struct.error: FileFormatError, OSError: FileFormatError},
    default_error=FileFormatError,
)
def read_idx_array(path: str | Path, expected_magic: int | None = None) -> np.ndarray:
    """Raw uint8 array stored in an IDX file."""
    source = Path(path)
    blob = _read_bytes(source)
    (magic,) = struct.unpack_from(">I", blob, 0)
    if expected_magic is not None and magic != expected_magic:
        raise FileFormatError(
            f"{source}: magic {magic} does not match expected {expected_magic}",
            {"magic": magic, "expected": expected_magic},
        )
    if (magic >> 8) != _UBYTE or (magic & 0xFF) == 0:
        raise FileFormatError(f"{source}: unsupported IDX magic {magic}")

    rank = magic & 0xFF
    shape = struct.unpack_from(f">{rank}I", blob, 4)
    offset = 4 + 4 * rank
    size = int(np.prod(shape, dtype=np.int64))
    if len(blob) - offset != size:
        raise FileFormatError(
            f"{source}: payload has {len(blob) - offset} bytes, header declares {size}",
            {"shape": shape},
        )
    return np.frombuffer(blob, dtype=np.uint8, offset=offset).reshape(shape).copy()


def write_idx(path: str | Path, array: np.ndarray) -> Path:
    """Write a uint8 array as IDX; the exact inverse of ``read_idx_array``."""
    data = np.asarray(array)
    if data.dtype != np.uint8:
        raise FileFormatError(f"IDX payloads must be uint8, got {data.dtype}")
    header = struct.pack(f">I{data.ndim}I", (_UBYTE << 8) | data.ndim, *data.shape)
    blob = header + np.ascontiguousarray(data).tobytes()

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if target.suffix == ".gz":
        with gzip.open(target, "wb") as handle:
            handle.write(blob)
    else:
        target.write_bytes(blob)
    return target


def load_idx(
    images_path: str | Path, labels_path: str | Path, class_count: int = 10
) -> Dataset:
    """Images scaled to [0, 1] with shape N x 1 x rows x cols, plus labels."""
    raw_images = read_idx_array(images_path, IdxMagic.IMAGES)
    raw_labels = read_idx_array(labels_path, IdxMagic.LABELS)
    if raw_images.shape[0] != raw_labels.shape[0]:
        raise FileFormatError(
            f"{raw_images.shape[0]} images but {raw_labels.shape[0]} labels",
            {"images": str(images_path), "labels": str(labels_path)},
        )
    images = raw_images.astype(np.float64)[:, np.newaxis, :, :] / 255.0
    logger.info(f"Loaded {images.shape[0]} images of {raw_images.shape[1:]} from {images_path}")
    return Dataset(images, raw_labels.astype(np.int64), class_count)


def save_idx(dataset: Dataset, images_path: str | Path, labels_path: str | Path) -> None:
    """Write a dataset loaded by ``load_idx`` back to IDX byte-for-byte."""
    images = dataset.images
    if images.ndim == 4:
        images = images[:, 0, :, :]
    write_idx(images_path, np.rint(images * 255.0).astype(np.uint8))
    write_idx(labels_path, dataset.labels.astype(np.uint8))
