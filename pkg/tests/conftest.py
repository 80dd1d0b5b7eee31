import struct

import numpy as np
import pytest

from flsched.datasets import LabeledDataset


def write_idx_pair(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Independent IDX writer used to cross-check the loader.

    `images` is (n, rows, cols) uint8, `labels` (n,) uint8; big-endian headers.
    """
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.astype(np.uint8).tobytes())


@pytest.fixture
def tiny_dataset() -> LabeledDataset:
    """Four 2-d samples in two classes, fixed by hand."""
    x = np.array([[1.0, 2.0], [0.5, -1.0], [-1.5, 0.3], [2.0, 0.0]])
    y = np.array([0, 1, 0, 1])
    return LabeledDataset(x, y, 2)
