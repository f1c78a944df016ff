import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfm import data
from hfm.data import FeatureDataset, SyntheticConfig
from hfm.errors import FeatureFormatError, InvalidArgumentError
from hfm.experiment import nearest_prototype_accuracy


def same(a, b):
    return (
        np.array_equal(a.features, b.features)
        and np.array_equal(a.labels, b.labels)
        and np.array_equal(a.prototypes, b.prototypes)
    )


# ------------------------------------------------------------ synthetic

def test_point_clusters_are_perfectly_separable():
    ds = data.generate_synthetic(SyntheticConfig(overlap=0.0, sigma=1e-6))
    assert nearest_prototype_accuracy(ds.features, ds.prototypes, ds.labels) == 1.0


def test_same_seed_same_data():
    assert same(data.generate_synthetic(SyntheticConfig(seed=3)), data.generate_synthetic(SyntheticConfig(seed=3)))
    assert not same(data.generate_synthetic(SyntheticConfig(seed=3)), data.generate_synthetic(SyntheticConfig(seed=4)))


def test_heavy_overlap_confuses_nearest_prototype():
    ds = data.generate_synthetic(SyntheticConfig(n_classes=8, dim=16, overlap=1.5, seed=0))
    _, test = data.split_k_shot(ds, 4, 0)
    assert nearest_prototype_accuracy(test.features, ds.prototypes, test.labels) < 1.0


@given(st.integers(2, 10), st.integers(0, 1000), st.floats(0.1, 1.0), st.floats(0.0, 2.0))
def test_center_geometry(N, seed, sigma, overlap):
    cfg = SyntheticConfig(n_classes=N, dim=10, sigma=sigma, overlap=overlap, center_distance=4.0, seed=seed)
    ds = data.generate_synthetic(cfg)
    d = np.linalg.norm(ds.centers[:, None] - ds.centers[None], axis=-1)
    off = d[~np.eye(N, dtype=bool)]
    assert np.all(np.abs(off - cfg.effective_distance) < 1e-6)
    offset = np.linalg.norm(ds.prototypes - ds.centers, axis=1)
    assert np.allclose(offset, 0.1 * sigma, rtol=1e-5)


def test_infeasible_geometry():
    with pytest.raises(InvalidArgumentError):
        data.generate_synthetic(SyntheticConfig(n_classes=5, dim=4))
    with pytest.raises(InvalidArgumentError):
        data.generate_synthetic(SyntheticConfig(center_distance=1.0, sigma=0.5, overlap=2.0))
    with pytest.raises(InvalidArgumentError):
        SyntheticConfig(sigma=0.0)


def test_values_on_float32_grid():
    ds = data.generate_synthetic()
    assert np.array_equal(ds.features.astype(np.float32).astype(np.float64), ds.features)


def test_dataset_validation():
    with pytest.raises(InvalidArgumentError):
        FeatureDataset(np.zeros((2, 2)), [0, 3], np.eye(2))
    with pytest.raises(InvalidArgumentError):
        FeatureDataset(np.array([[np.nan, 0.0]]), [0], np.eye(2))


# ------------------------------------------------------------ k-shot split

def test_split_counts_and_disjointness():
    ds = data.generate_synthetic(SyntheticConfig(samples_per_class=10))
    support, test = data.split_k_shot(ds, 9, seed=1)
    assert len(test) == ds.n_classes
    assert np.array_equal(np.bincount(support.labels), np.full(ds.n_classes, 9))
    rows_s = {tuple(r) for r in support.features}
    rows_t = {tuple(r) for r in test.features}
    assert not rows_s & rows_t
    assert len(support) + len(test) == len(ds)


def test_split_deterministic():
    ds = data.generate_synthetic()
    a, _ = data.split_k_shot(ds, 4, 2)
    b, _ = data.split_k_shot(ds, 4, 2)
    assert same(a, b)


def test_split_needs_enough_samples():
    ds = data.generate_synthetic(SyntheticConfig(samples_per_class=4))
    with pytest.raises(InvalidArgumentError):
        data.split_k_shot(ds, 4)
    with pytest.raises(InvalidArgumentError):
        data.split_k_shot(ds, 0)


# ------------------------------------------------------------ HFMF files

def small_dataset():
    return data.generate_synthetic(SyntheticConfig(n_classes=8, dim=16, samples_per_class=10))


def test_feature_file_roundtrip(tmp_path):
    ds = small_dataset()
    path = tmp_path / "f.hfmf"
    data.write_feature_file(path, ds)
    back = data.read_feature_file(path)
    assert same(ds, back) and back.provenance == "ingested"


def test_feature_file_size(tmp_path):
    ds = small_dataset()
    path = tmp_path / "f.hfmf"
    data.write_feature_file(path, ds)
    # header, prototype records, sample count, sample records
    expect = 16 + 8 * (4 + 16 * 4) + 4 + 80 * (4 + 16 * 4)
    assert expect == 6004
    assert path.stat().st_size == expect == data.feature_file_size(16, 8, 80)


def _corrupt(tmp_path, mutate):
    path = tmp_path / "f.hfmf"
    data.write_feature_file(path, small_dataset())
    path.write_bytes(bytes(mutate(bytearray(path.read_bytes()))))
    with pytest.raises(FeatureFormatError) as info:
        data.read_feature_file(path)
    return info.value.offset


def test_bad_magic(tmp_path):
    assert _corrupt(tmp_path, lambda b: b"HFMX" + b[4:]) == 0


def test_bad_version(tmp_path):
    def mut(b):
        b[4:8] = struct.pack("<I", 2)
        return b
    assert _corrupt(tmp_path, mut) == 4


def test_truncated(tmp_path):
    assert _corrupt(tmp_path, lambda b: b[:-3]) == 6001
    assert _corrupt(tmp_path, lambda b: b[:10]) == 10


def test_nan_rejected_with_offset(tmp_path):
    offset = 16 + 8 * 68 + 4 + 2 * 68 + 4 + 4 * 5  # sample 2, value 5

    def mut(b):
        b[offset:offset + 4] = struct.pack("<f", float("nan"))
        return b
    assert _corrupt(tmp_path, mut) == offset


def test_trailing_bytes(tmp_path):
    assert _corrupt(tmp_path, lambda b: b + b"\0") == 6004


def test_label_out_of_range(tmp_path):
    offset = 16 + 8 * 68 + 4

    def mut(b):
        b[offset:offset + 4] = struct.pack("<I", 99)
        return b
    assert _corrupt(tmp_path, mut) == offset


def test_csv_import(tmp_path):
    ds = small_dataset()
    samples, protos = tmp_path / "s.csv", tmp_path / "p.csv"
    for path, labels, values in ((samples, ds.labels, ds.features), (protos, np.arange(8)[::-1], ds.prototypes[::-1])):
        rows = ["label," + ",".join(f"f{j}" for j in range(16))]
        rows += [f"{y}," + ",".join(repr(float(v)) for v in row) for y, row in zip(labels, values)]
        path.write_text("\n".join(rows) + "\n")
    back = data.read_feature_csv(samples, protos)
    assert same(ds, back)
    bad = tmp_path / "bad.csv"
    bad.write_text("x,f0\n0,1\n")
    with pytest.raises(InvalidArgumentError):
        data.read_feature_csv(bad, protos)
