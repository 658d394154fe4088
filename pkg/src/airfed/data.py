"""Dataset ingestion and label-sorted client sharding."""

from __future__ import annotations

import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IDXFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n_samples, d); IDX pixels lie in [0, 1]
    labels: np.ndarray  # (n_samples,), ints in [0, n_classes)
    n_classes: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if len(self.features) != len(self.labels):
            raise ValueError(
                f"{len(self.features)} feature rows but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ClientShards:
    assignments: list[np.ndarray]
    test_assignments: list[np.ndarray]

    @property
    def n_clients(self) -> int:
        return len(self.assignments)


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(path: Path, magic: int, n_dims: int) -> np.ndarray:
    raw = _read_bytes(path)
    header_len = 4 + 4 * n_dims
    if len(raw) < header_len:
        raise IDXFormatError(f"{path}: truncated header")
    found, *dims = struct.unpack(f">I{n_dims}I", raw[:header_len])
    if found != magic:
        raise IDXFormatError(f"{path}: magic number {found:#010x}, expected {magic:#010x}")
    expected = int(np.prod(dims))
    body = raw[header_len:]
    if len(body) != expected:
        raise IDXFormatError(f"{path}: expected {expected} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Read an IDX image/label pair (optionally gzipped) into a Dataset.

    Images are flattened to rows and scaled from bytes to [0, 1].
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    for p in (images_path, labels_path):
        if not p.exists():
            raise FileNotFoundError(f"IDX file not found: {p}")
    images = _parse_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _parse_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise IDXFormatError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels"
        )
    features = images.reshape(len(images), -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    n_classes = int(labels.max()) + 1 if len(labels) else 1
    return Dataset(features, labels, n_classes)


def write_idx(path: str | Path, array: np.ndarray) -> None:
    """Write a uint8 array as an IDX file; used for fixtures and data export."""
    array = np.asarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}[array.ndim]
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def synthesize(
    n_samples: int,
    d: int,
    n_classes: int,
    rng: np.random.Generator,
    separation: float = 1.0,
    hard_classes: int = 0,
    hard_noise: float = 1.0,
) -> Dataset:
    """Balanced class-conditional Gaussian blobs.

    Class k is centred on ``separation * e_k`` when d >= n_classes, otherwise
    on a random point with expected pairwise distance ``separation``; with
    d=1 the means sit ``separation`` apart on a line. Noise is isotropic with
    unit standard deviation, except for the last ``hard_classes`` classes,
    whose standard deviation is ``hard_noise``. Labels cycle 0..c-1, so any
    prefix of length m*c is exactly balanced.

    Features are left centred rather than squashed into [0, 1]: an affine
    squash adds a shared offset to every sample, and single-step updates
    from label-pure clients then mostly move that shared direction.
    """
    if min(n_samples, d, n_classes) <= 0:
        raise ValueError("n_samples, d and n_classes must be positive")
    if d == 1:
        means = separation * np.arange(n_classes, dtype=np.float64)[:, None]
    elif d >= n_classes:
        means = np.zeros((n_classes, d))
        means[np.arange(n_classes), np.arange(n_classes)] = separation
    else:
        means = rng.normal(scale=separation / np.sqrt(2.0), size=(n_classes, d))
    if not 0 <= hard_classes <= n_classes:
        raise ValueError("hard_classes must lie in [0, n_classes]")
    scales = np.ones(n_classes)
    scales[n_classes - hard_classes :] = hard_noise
    labels = np.arange(n_samples, dtype=np.int64) % n_classes
    features = means[labels] + rng.normal(size=(n_samples, d)) * scales[labels, None]
    return Dataset(features, labels, n_classes)


def split(ds: Dataset, n_first: int) -> tuple[Dataset, Dataset]:
    head = Dataset(ds.features[:n_first].copy(), ds.labels[:n_first].copy(), ds.n_classes)
    tail = Dataset(ds.features[n_first:].copy(), ds.labels[n_first:].copy(), ds.n_classes)
    return head, tail


def shard_by_label(
    ds: Dataset, test_ds: Dataset, n_clients: int, shards_per_client: int
) -> ClientShards:
    """Sort by label, cut into equal contiguous shards, deal them to clients in order.

    Each client's test set is every test sample whose label occurs in its
    training shards.
    """
    if len(ds) == 0:
        raise ValueError("cannot shard an empty dataset")
    n_shards = n_clients * shards_per_client
    shard_size = len(ds) // n_shards
    if shard_size == 0:
        raise ValueError(f"{len(ds)} samples cannot fill {n_shards} shards")
    used = shard_size * n_shards
    if used < len(ds):
        log.warning("dropping %d samples that do not fill a shard", len(ds) - used)

    order = np.argsort(ds.labels, kind="stable")[:used]
    shards = order.reshape(n_shards, shard_size)
    assignments = [
        np.sort(shards[c * shards_per_client : (c + 1) * shards_per_client].ravel())
        for c in range(n_clients)
    ]
    test_assignments = []
    for idx in assignments:
        labels = np.unique(ds.labels[idx])
        test_idx = np.flatnonzero(np.isin(test_ds.labels, labels))
        if len(test_idx) == 0:
            raise ValueError(f"no test samples carry labels {labels.tolist()}")
        test_assignments.append(test_idx)
    return ClientShards(assignments, test_assignments)
