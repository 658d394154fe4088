import gzip
import logging

import numpy as np
import pytest

from airfed.config import seeded_rng
from airfed.data import (
    Dataset,
    IDXFormatError,
    load_idx,
    shard_by_label,
    synthesize,
    write_idx,
)


@pytest.fixture
def idx_pair(tmp_path):
    images = np.zeros((2, 3, 2), dtype=np.uint8)
    images[0, 0, 0] = 255
    images[1, 2, 1] = 51
    labels = np.array([7, 2], dtype=np.uint8)
    write_idx(tmp_path / "img", images)
    write_idx(tmp_path / "lab", labels)
    return tmp_path / "img", tmp_path / "lab"


def test_idx_scaling(idx_pair):
    ds = load_idx(*idx_pair)
    assert ds.features.shape == (2, 6)
    assert ds.features[0, 0] == 1.0
    assert ds.features[1, 5] == pytest.approx(0.2)
    assert ds.labels.tolist() == [7, 2]
    assert ds.n_classes == 8


def test_idx_gzip_transparent(idx_pair, tmp_path):
    img, lab = idx_pair
    for p in (img, lab):
        (tmp_path / (p.name + ".gz")).write_bytes(gzip.compress(p.read_bytes()))
    ds = load_idx(tmp_path / "img.gz", tmp_path / "lab.gz")
    np.testing.assert_array_equal(ds.features, load_idx(img, lab).features)


def test_idx_truncated_file_names_file(idx_pair):
    img, lab = idx_pair
    img.write_bytes(img.read_bytes()[:-3])
    with pytest.raises(IDXFormatError, match="img"):
        load_idx(img, lab)


def test_idx_bad_magic(idx_pair):
    img, lab = idx_pair
    with pytest.raises(IDXFormatError, match="magic"):
        load_idx(lab, img)


def test_idx_count_mismatch(idx_pair, tmp_path):
    img, _ = idx_pair
    write_idx(tmp_path / "lab3", np.array([1, 2, 3], dtype=np.uint8))
    with pytest.raises(IDXFormatError, match="labels"):
        load_idx(img, tmp_path / "lab3")


def test_idx_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_idx(tmp_path / "nope", tmp_path / "nope2")


def test_synthesize_balanced():
    ds = synthesize(1000, 20, 4, seeded_rng(0, "data"))
    assert np.bincount(ds.labels).tolist() == [250] * 4
    assert ds.features.shape == (1000, 20)


def test_synthesize_deterministic():
    a = synthesize(200, 5, 3, seeded_rng(9, "data"))
    b = synthesize(200, 5, 3, seeded_rng(9, "data"))
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_synthesize_one_dimensional_pair():
    ds = synthesize(20000, 1, 2, seeded_rng(1, "data"), separation=1.0)
    m0 = ds.features[ds.labels == 0].mean()
    m1 = ds.features[ds.labels == 1].mean()
    assert m1 - m0 == pytest.approx(1.0, abs=0.05)
    # the midpoint threshold is the Bayes rule; it beats chance
    acc = np.mean((ds.features[:, 0] > (m0 + m1) / 2) == (ds.labels == 1))
    assert acc > 0.65


def test_synthesize_hard_classes_are_noisier():
    ds = synthesize(10000, 10, 10, seeded_rng(2, "data"), separation=4.0, hard_classes=3, hard_noise=2.0)
    spread = [ds.features[ds.labels == k].std(axis=0).mean() for k in range(10)]
    assert max(spread[:7]) < 1.1 and min(spread[7:]) > 1.8


def test_dataset_rejects_bad_labels():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.array([0, 3]), 3)
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 1)), np.array([0, 1]), 3)


def _labelled(labels, d=2):
    labels = np.asarray(labels)
    return Dataset(np.zeros((len(labels), d)), labels, int(labels.max()) + 1)


def test_shard_sort_then_split():
    ds = _labelled([1, 0, 1, 0])
    shards = shard_by_label(ds, ds, 2, 1)
    assert shards.assignments[0].tolist() == [1, 3]
    assert shards.assignments[1].tolist() == [0, 2]
    assert shards.test_assignments[0].tolist() == [1, 3]


def test_shard_remainder_dropped(caplog):
    ds = _labelled(np.arange(10) % 3)
    with caplog.at_level(logging.WARNING):
        shards = shard_by_label(ds, ds, 3, 1)
    assert sum(len(a) for a in shards.assignments) == 9
    assert "dropping 1" in caplog.text


def test_shard_full_scale_layout():
    labels = np.repeat(np.arange(10), 6000)
    np.random.default_rng(0).shuffle(labels)
    ds = _labelled(labels, d=1)
    shards = shard_by_label(ds, ds, 100, 1)
    assert all(len(a) == 600 for a in shards.assignments)
    order = np.argsort(ds.labels, kind="stable")
    for i in (0, 37, 99):
        np.testing.assert_array_equal(shards.assignments[i], np.sort(order[600 * i : 600 * (i + 1)]))


def test_shard_invariants():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 10, size=5000)
    ds = _labelled(labels)
    test = _labelled(np.arange(500) % 10)
    shards = shard_by_label(ds, test, 20, 2)
    flat = np.concatenate(shards.assignments)
    assert len(np.unique(flat)) == len(flat) == 5000 - 5000 % 40
    per_class = np.bincount(labels).min()
    for a, t in zip(shards.assignments, shards.test_assignments):
        # two contiguous shards of a sorted array: at most 2 labels each
        assert len(np.unique(labels[a])) <= 4
        assert len(t) > 0
        assert set(test.labels[t]) == set(labels[a])
    shards1 = shard_by_label(ds, test, 40, 1)
    assert len(ds) // 40 <= per_class
    assert all(len(np.unique(labels[a])) <= 2 for a in shards1.assignments)


def test_shard_empty():
    with pytest.raises(ValueError):
        shard_by_label(Dataset(np.zeros((0, 1)), np.zeros(0, dtype=int), 1), _labelled([0]), 2, 1)
