"""Shared fixtures: repo paths, MNIST availability, synthetic IDX fixtures."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
MNIST_DIR = REPO_ROOT / "data" / "mnist"
TRAIN_IMAGES = MNIST_DIR / "train-images-idx3-ubyte.gz"
TRAIN_LABELS = MNIST_DIR / "train-labels-idx1-ubyte.gz"


def mnist_available() -> bool:
    return TRAIN_IMAGES.exists() and TRAIN_LABELS.exists()


requires_mnist = pytest.mark.skipif(
    not mnist_available(),
    reason="MNIST IDX files missing under data/mnist/ (see README)")


@pytest.fixture(scope="session")
def mnist_binary():
    """The filtered 3-vs-7 dataset from the real training files, loaded once."""
    if not mnist_available():
        pytest.skip("MNIST IDX files missing under data/mnist/")
    from hqnet.mnist_data import filter_digits, load_idx
    return filter_digits(load_idx(TRAIN_IMAGES, TRAIN_LABELS))


def pack_idx_images(images: np.ndarray) -> bytes:
    """Serialize (n, 28, 28) uint8 images into IDX bytes."""
    n = images.shape[0]
    return struct.pack(">IIII", 0x803, n, 28, 28) + images.astype(np.uint8).tobytes()


def pack_idx_labels(labels: np.ndarray) -> bytes:
    return struct.pack(">II", 0x801, len(labels)) + bytes(int(v) for v in labels)


def write_idx_pair(directory: Path, images: np.ndarray, labels: np.ndarray,
                   compress: bool = False) -> tuple[Path, Path]:
    """Write an image/label IDX file pair, optionally gzipped."""
    img_bytes = pack_idx_images(images)
    lab_bytes = pack_idx_labels(labels)
    suffix = ".gz" if compress else ""
    img_path = directory / f"images-idx3-ubyte{suffix}"
    lab_path = directory / f"labels-idx1-ubyte{suffix}"
    if compress:
        img_bytes = gzip.compress(img_bytes)
        lab_bytes = gzip.compress(lab_bytes)
    img_path.write_bytes(img_bytes)
    lab_path.write_bytes(lab_bytes)
    return img_path, lab_path


def synthetic_digits(count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Linearly separable fake 3s and 7s as (n, 28, 28) uint8 images.

    Class "3" lights up the top half of the image, class "7" the bottom
    half, plus noise, so tiny training runs can actually learn something.
    """
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 60, size=(count, 28, 28), dtype=np.uint8)
    labels = np.empty(count, dtype=np.int64)
    for idx in range(count):
        digit = 3 if idx % 2 == 0 else 7
        labels[idx] = digit
        rows = slice(0, 14) if digit == 3 else slice(14, 28)
        images[idx, rows, :] = np.minimum(
            255, images[idx, rows, :].astype(int) + 160).astype(np.uint8)
    return images, labels


@pytest.fixture()
def synthetic_binary():
    """A small, already-filtered synthetic dataset for fast training tests."""
    from hqnet.mnist_data import BinaryDataset
    images, labels = synthetic_digits(96, seed=11)
    flat = images.reshape(len(labels), 784).astype(np.float64) / 255.0
    return BinaryDataset(flat, (labels == 7).astype(np.int64))
