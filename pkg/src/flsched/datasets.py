"""Dataset generation, IDX loading, and client partitioning.

Supports a synthetic Gaussian-mixture classification task for desk-scale
experiments and the standard big-endian IDX image/label format. Partitioning
is either uniform (iid) or label-sorted shards dealt at random, which skews
each client's label distribution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    """Raised when an input file does not conform to its declared format."""


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (n, d_in) float64
    labels: np.ndarray  # (n,) int64 in [0, n_classes)
    n_classes: int

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.ndim != 1 or len(features) != len(labels):
            raise ValueError("features must be (n, d) with one label per row")
        if len(features) < 1:
            raise ValueError("dataset must be non-empty")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ValueError("labels out of range for n_classes")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def d_in(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Partitioning:
    """Disjoint, non-empty index lists into a parent dataset, one per client."""

    assignment: tuple[np.ndarray, ...]
    n_items: int

    def __post_init__(self) -> None:
        assignment = tuple(np.asarray(a, dtype=np.int64) for a in self.assignment)
        seen: set[int] = set()
        for client, idx in enumerate(assignment):
            if len(idx) == 0:
                raise ValueError(f"client {client} received an empty partition")
            if idx.min() < 0 or idx.max() >= self.n_items:
                raise ValueError(f"client {client} has indices outside the parent dataset")
            as_set = set(int(i) for i in idx)
            if len(as_set) != len(idx) or seen & as_set:
                raise ValueError(f"client {client} overlaps another partition")
            seen |= as_set
        object.__setattr__(self, "assignment", assignment)

    @property
    def n_clients(self) -> int:
        return len(self.assignment)


def subset(ds: LabeledDataset, indices: np.ndarray) -> LabeledDataset:
    """Materialize one client's partition as its own dataset."""
    idx = np.asarray(indices, dtype=np.int64)
    return LabeledDataset(ds.features[idx], ds.labels[idx], ds.n_classes)


def synth_gaussian(
    n_classes: int, dim: int, n: int, separation: float, seed: int
) -> LabeledDataset:
    """Balanced Gaussian blobs with class means at mutual distance `separation`.

    Means sit on scaled one-hot corners (requires dim >= n_classes), so every
    pair of classes is exactly `separation` apart with unit noise covariance.
    """
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    if n < n_classes:
        raise ValueError(f"need at least one sample per class: n={n}, classes={n_classes}")
    if dim < n_classes:
        raise ValueError(f"dim must be >= n_classes to place equidistant means, got {dim}")

    rng = np.random.default_rng(seed)
    counts = np.full(n_classes, n // n_classes)
    counts[: n % n_classes] += 1
    labels = np.repeat(np.arange(n_classes), counts)

    means = np.zeros((n_classes, dim))
    means[np.arange(n_classes), np.arange(n_classes)] = separation / np.sqrt(2.0)
    features = rng.standard_normal((n, dim)) + means[labels]

    perm = rng.permutation(n)
    return LabeledDataset(features[perm], labels[perm], n_classes)


def train_test_split(
    ds: LabeledDataset, test_fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Random split into train and held-out test sets."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = max(1, int(round(ds.n * test_fraction)))
    if n_test >= ds.n:
        raise ValueError("test_fraction leaves no training data")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return subset(ds, perm[n_test:]), subset(ds, perm[:n_test])


def _read_idx_header(raw: bytes, path: str, magic: int, n_dims: int, what: str) -> tuple[int, ...]:
    header = 4 * (1 + n_dims)
    if len(raw) < header:
        raise FormatError(f"{what} file {path}: truncated header ({len(raw)} bytes)")
    fields = struct.unpack(f">{1 + n_dims}I", raw[:header])
    if fields[0] != magic:
        raise FormatError(f"{what} file {path}: bad magic 0x{fields[0]:08x}, expected 0x{magic:08x}")
    return fields[1:]


def load_idx(images_path: str, labels_path: str) -> LabeledDataset:
    """Load an IDX image/label pair, scaling pixels to [0, 1].

    Images are flattened row-major to (count, rows*cols). The image and label
    counts must agree.
    """
    with open(images_path, "rb") as f:
        img_raw = f.read()
    with open(labels_path, "rb") as f:
        lab_raw = f.read()

    n_img, rows, cols = _read_idx_header(img_raw, images_path, IDX_IMAGES_MAGIC, 3, "images")
    (n_lab,) = _read_idx_header(lab_raw, labels_path, IDX_LABELS_MAGIC, 1, "labels")

    if len(img_raw) != 16 + n_img * rows * cols:
        raise FormatError(
            f"images file {images_path}: expected {n_img * rows * cols} pixel bytes, "
            f"found {len(img_raw) - 16}"
        )
    if len(lab_raw) != 8 + n_lab:
        raise FormatError(
            f"labels file {labels_path}: expected {n_lab} label bytes, found {len(lab_raw) - 8}"
        )
    if n_img != n_lab:
        raise FormatError(
            f"count mismatch: {images_path} holds {n_img} images but "
            f"{labels_path} holds {n_lab} labels"
        )

    pixels = np.frombuffer(img_raw, dtype=np.uint8, offset=16).astype(float) / 255.0
    features = pixels.reshape(n_img, rows * cols)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, offset=8).astype(np.int64)
    return LabeledDataset(features, labels, int(labels.max()) + 1)


def partition_iid(ds: LabeledDataset, n_clients: int, seed: int) -> Partitioning:
    """Uniform random split; the first n mod K clients absorb the remainder."""
    if ds.n < n_clients:
        raise ValueError(f"cannot split {ds.n} samples across {n_clients} clients")
    perm = np.random.default_rng(seed).permutation(ds.n)
    base, extra = divmod(ds.n, n_clients)
    sizes = [base + 1 if k < extra else base for k in range(n_clients)]
    cuts = np.cumsum([0] + sizes)
    return Partitioning(tuple(perm[cuts[k] : cuts[k + 1]] for k in range(n_clients)), ds.n)


def partition_shards(
    ds: LabeledDataset, n_clients: int, shards: int, per_client: int, seed: int
) -> Partitioning:
    """Label-sorted shard deal: sort by label, cut into shards, deal at random.

    With few shards per client this caps the number of distinct labels each
    client can see, producing the usual label-skewed split.
    """
    if shards != n_clients * per_client:
        raise ValueError(
            f"shards ({shards}) must equal n_clients * per_client ({n_clients * per_client})"
        )
    if ds.n < shards:
        raise ValueError(f"cannot cut {ds.n} samples into {shards} shards")

    by_label = np.argsort(ds.labels, kind="stable")  # original index breaks ties
    pieces = np.array_split(by_label, shards)
    deal = np.random.default_rng(seed).permutation(shards)
    assignment = tuple(
        np.concatenate([pieces[s] for s in deal[k * per_client : (k + 1) * per_client]])
        for k in range(n_clients)
    )
    return Partitioning(assignment, ds.n)
