"""IDX dataset ingestion (MNIST file format).

Images file: magic 0x00000803, then count/rows/cols as big-endian u32, then
count*rows*cols unsigned bytes. Labels file: magic 0x00000801, count, then
count label bytes. Gzipped files are detected and unpacked transparently.
Pixels are scaled to [0, 1] by /255.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file: bad magic, truncation, or count mismatch."""


@dataclass
class Dataset:
    """Images as float32 NHWC in [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxFormatError(
                f"image/label count mismatch: {len(self.images)} images, {len(self.labels)} labels")

    def __len__(self):
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n]) if n and n < len(self) else self


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _check_length(path, raw: bytes, expect: int):
    if len(raw) < expect:
        raise IdxFormatError(f"{path}: truncated file, expected {expect} bytes, found {len(raw)}")


def load_idx_images(path) -> np.ndarray:
    raw = _read_bytes(path)
    _check_length(path, raw, 16)
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGES_MAGIC:
        raise IdxFormatError(f"{path}: bad images magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}")
    _check_length(path, raw, 16 + count * rows * cols)
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    return pixels.reshape(count, rows, cols, 1).astype(np.float32) / 255.0


def load_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    _check_length(path, raw, 8)
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABELS_MAGIC:
        raise IdxFormatError(f"{path}: bad labels magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}")
    _check_length(path, raw, 8 + count)
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8).copy()


def load_mnist(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair into one validated dataset."""
    return Dataset(load_idx_images(images_path), load_idx_labels(labels_path))


def write_idx_images(path, images_u8: np.ndarray) -> None:
    n, rows, cols = images_u8.shape[0], images_u8.shape[1], images_u8.shape[2]
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        f.write(np.ascontiguousarray(images_u8.reshape(n, rows, cols), dtype=np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())
