"""MNIST ingestion (IDX binary format), 3-vs-7 filtering, splits and batches.

IDX layout: big-endian magic 0x00000803 then count/rows/cols uint32s and the
raw unsigned pixel bytes for images; magic 0x00000801 then count and raw
label bytes for labels. Gzip-compressed files are detected by their leading
two bytes and decompressed transparently. Pixels map to floats via b/255.

Every random choice here flows from an explicit seed; nothing reads ambient
entropy, so splits and batch orders are exactly reproducible.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIDE = 28
PIXELS = IMAGE_SIDE * IMAGE_SIDE

CLASS_DIGITS = (3, 7)  # digit 3 -> class 0, digit 7 -> class 1


class IdxFormatError(ValueError):
    """Malformed or inconsistent IDX input files."""


@dataclass
class RawDataset:
    """Flattened grayscale images in [0, 1] with their 0-9 digit labels."""

    images: np.ndarray  # (n, 784) float64
    labels: np.ndarray  # (n,) int64


@dataclass
class BinaryDataset:
    """Images with binary class labels (0 for digit 3, 1 for digit 7)."""

    images: np.ndarray
    labels: np.ndarray


@dataclass
class SplitDataset:
    train: BinaryDataset
    validation: BinaryDataset


def _read_file(path) -> bytes:
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    return data


def load_idx(images_path, labels_path) -> RawDataset:
    """Parse an IDX image/label file pair into a RawDataset."""
    img = _read_file(images_path)
    if len(img) < 16:
        raise IdxFormatError(f"truncated image file {images_path}: no header")
    magic, count, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(
            f"wrong magic in image file {images_path}: expected "
            f"{IMAGE_MAGIC:#010x}, got {magic:#010x}")
    if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE):
        raise IdxFormatError(
            f"image file {images_path} has {rows}x{cols} images, "
            f"expected {IMAGE_SIDE}x{IMAGE_SIDE}")
    if len(img) != 16 + count * PIXELS:
        raise IdxFormatError(
            f"truncated image file {images_path}: header promises {count} "
            f"images ({16 + count * PIXELS} bytes), file has {len(img)}")

    lab = _read_file(labels_path)
    if len(lab) < 8:
        raise IdxFormatError(f"truncated label file {labels_path}: no header")
    magic, lab_count = struct.unpack(">II", lab[:8])
    if magic != LABEL_MAGIC:
        raise IdxFormatError(
            f"wrong magic in label file {labels_path}: expected "
            f"{LABEL_MAGIC:#010x}, got {magic:#010x}")
    if len(lab) != 8 + lab_count:
        raise IdxFormatError(
            f"truncated label file {labels_path}: header promises "
            f"{lab_count} labels, file has {len(lab) - 8}")
    if count != lab_count:
        raise IdxFormatError(
            f"count mismatch: {count} images vs {lab_count} labels")

    labels = np.frombuffer(lab, dtype=np.uint8, offset=8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise IdxFormatError(
            f"label file {labels_path} contains values above 9")
    images = np.frombuffer(img, dtype=np.uint8, offset=16)
    images = images.reshape(count, PIXELS).astype(np.float64) / 255.0
    return RawDataset(images, labels)


def filter_digits(raw: RawDataset) -> BinaryDataset:
    """Keep digits 3 and 7 in their original order, remapped to classes 0/1."""
    mask = (raw.labels == CLASS_DIGITS[0]) | (raw.labels == CLASS_DIGITS[1])
    labels = (raw.labels[mask] == CLASS_DIGITS[1]).astype(np.int64)
    return BinaryDataset(raw.images[mask], labels)


def split(data: BinaryDataset, train_size: int, val_size: int,
          seed) -> SplitDataset:
    """Seeded uniform shuffle, then the first train_size / next val_size samples."""
    total = len(data.labels)
    if train_size + val_size > total:
        raise ValueError(
            f"split sizes {train_size}+{val_size} exceed dataset size {total}")
    perm = np.random.default_rng(seed).permutation(total)
    train_idx = perm[:train_size]
    val_idx = perm[train_size:train_size + val_size]
    return SplitDataset(
        BinaryDataset(data.images[train_idx], data.labels[train_idx]),
        BinaryDataset(data.images[val_idx], data.labels[val_idx]),
    )


def batches(data: BinaryDataset, batch_size: int, shuffle_seed,
            epoch: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Mini-batches for one epoch, reshuffled per (shuffle_seed, epoch).

    The final partial batch is included, so the batches cover every sample
    exactly once.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    total = len(data.labels)
    perm = np.random.default_rng((shuffle_seed, epoch)).permutation(total)
    out = []
    for start in range(0, total, batch_size):
        idx = perm[start:start + batch_size]
        out.append((data.images[idx], data.labels[idx]))
    return out
