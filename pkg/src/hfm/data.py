"""Feature datasets: synthetic generation, k-shot splits and the HFMF file format.

HFMF layout (little-endian)::

    magic    4 bytes  b"HFMF"
    version  u32      1
    dim      u32      n
    n_proto  u32      N
    N x prototype record
    n_sample u32      M
    M x sample record

    record = label u32, then n x IEEE-754 binary32

Values are widened to float64 on load. Synthetic data is generated on the
float32 grid so a write/read roundtrip is bit-exact.
"""
import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FeatureFormatError, InvalidArgumentError

MAGIC = b"HFMF"
VERSION = 1


@dataclass
class SyntheticConfig:
    """Gaussian class clusters around orthogonal centers.

    Centers sit on a sphere with all pairwise distances equal to
    ``center_distance - overlap * sigma``; ``overlap`` is how many ``sigma``
    the clusters are pushed into each other. Prototypes are the centers moved
    by ``prototype_offset * sigma`` in a random direction.
    """

    n_classes: int = 8
    dim: int = 16
    samples_per_class: int = 20
    sigma: float = 0.5
    center_distance: float = 3.0
    overlap: float = 1.0
    prototype_offset: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1 or self.dim < 2:
            raise InvalidArgumentError("need n_classes >= 1 and dim >= 2")
        if not self.sigma > 0:
            raise InvalidArgumentError("sigma must be positive")
        if self.samples_per_class < 1:
            raise InvalidArgumentError("samples_per_class must be positive")

    @property
    def effective_distance(self):
        return self.center_distance - self.overlap * self.sigma


@dataclass
class FeatureDataset:
    features: np.ndarray
    labels: np.ndarray
    prototypes: np.ndarray
    provenance: str = "synthetic"
    centers: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, np.shape(self.prototypes)[-1])
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] == 0:
            raise InvalidArgumentError("prototypes must be a non-empty (N, n) matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise InvalidArgumentError("one label per feature row required")
        if np.any(self.labels < 0) or np.any(self.labels >= self.n_classes):
            raise InvalidArgumentError("labels must be in [0, N)")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.prototypes))):
            raise InvalidArgumentError("dataset contains non-finite values")

    @property
    def n_classes(self):
        return self.prototypes.shape[0]

    @property
    def dim(self):
        return self.prototypes.shape[1]

    def __len__(self):
        return self.features.shape[0]

    def subset(self, index):
        return FeatureDataset(self.features[index], self.labels[index], self.prototypes, self.provenance, self.centers)


def _f32_grid(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def generate_synthetic(config=None):
    """Seeded Gaussian clusters; see :class:`SyntheticConfig`."""
    config = config or SyntheticConfig()
    N, n = config.n_classes, config.dim
    if N > n:
        raise InvalidArgumentError(f"{N} equidistant orthogonal centers do not fit in dimension {n}")
    dist = config.effective_distance
    if N > 1 and not dist > 0:
        raise InvalidArgumentError(
            f"overlap {config.overlap} * sigma {config.sigma} consumes the center distance {config.center_distance}"
        )
    rng = np.random.default_rng(config.seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q *= np.sign(np.diag(r))
    radius = dist / math.sqrt(2.0) if N > 1 else 0.0
    centers = radius * q[:, :N].T
    direction = rng.standard_normal((N, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    prototypes = centers + config.prototype_offset * config.sigma * direction
    labels = np.repeat(np.arange(N), config.samples_per_class)
    features = centers[labels] + config.sigma * rng.standard_normal((labels.size, n))
    return FeatureDataset(_f32_grid(features), labels, _f32_grid(prototypes), "synthetic", _f32_grid(centers))


def split_k_shot(dataset, k, seed=0):
    """Pick ``k`` support samples per class uniformly; the rest is the test set.

    Both parts keep the original row order.
    """
    if k < 1:
        raise InvalidArgumentError("k must be at least 1")
    rng = np.random.default_rng(seed)
    support = []
    for c in range(dataset.n_classes):
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size <= k:
            raise InvalidArgumentError(f"class {c} has {rows.size} samples, need more than k={k}")
        support.append(rng.choice(rows, size=k, replace=False))
    mask = np.zeros(len(dataset), dtype=bool)
    mask[np.concatenate(support)] = True
    return dataset.subset(np.flatnonzero(mask)), dataset.subset(np.flatnonzero(~mask))


# ----------------------------------------------------------------- HFMF io


def _record_dtype(dim):
    return np.dtype([("label", "<u4"), ("values", "<f4", (dim,))])


def feature_file_size(dim, n_prototypes, n_samples):
    rec = 4 + 4 * dim
    return 16 + n_prototypes * rec + 4 + n_samples * rec


def write_feature_file(path, dataset):
    dim = dataset.dim
    rt = _record_dtype(dim)
    protos = np.zeros(dataset.n_classes, dtype=rt)
    protos["label"] = np.arange(dataset.n_classes)
    protos["values"] = dataset.prototypes
    samples = np.zeros(len(dataset), dtype=rt)
    samples["label"] = dataset.labels
    samples["values"] = dataset.features
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<III", VERSION, dim, dataset.n_classes))
        fh.write(protos.tobytes())
        fh.write(struct.pack("<I", len(dataset)))
        fh.write(samples.tobytes())


def _read_records(buf, offset, count, dim, what):
    rt = _record_dtype(dim)
    end = offset + count * rt.itemsize
    if end > len(buf):
        raise FeatureFormatError(f"truncated {what} records", len(buf))
    recs = np.frombuffer(buf, dtype=rt, count=count, offset=offset)
    bad = ~np.isfinite(recs["values"])
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise FeatureFormatError(f"non-finite {what} value", offset + row * rt.itemsize + 4 + 4 * col)
    return recs, end


def read_feature_file(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FeatureFormatError("bad magic, expected b'HFMF'", 0)
    if len(buf) < 16:
        raise FeatureFormatError("truncated header", len(buf))
    version, dim, n_proto = struct.unpack_from("<III", buf, 4)
    if version != VERSION:
        raise FeatureFormatError(f"unsupported version {version}", 4)
    if dim == 0 or n_proto == 0:
        raise FeatureFormatError("dim and prototype count must be positive", 8 if dim == 0 else 12)
    protos, offset = _read_records(buf, 16, n_proto, dim, "prototype")
    order = np.argsort(protos["label"], kind="stable")
    if not np.array_equal(protos["label"][order], np.arange(n_proto)):
        raise FeatureFormatError("prototype labels must be a permutation of 0..N-1", 16)
    if offset + 4 > len(buf):
        raise FeatureFormatError("truncated sample count", len(buf))
    (n_samples,) = struct.unpack_from("<I", buf, offset)
    samples, end = _read_records(buf, offset + 4, n_samples, dim, "sample")
    if np.any(samples["label"] >= n_proto):
        row = int(np.flatnonzero(samples["label"] >= n_proto)[0])
        raise FeatureFormatError("sample label out of range", offset + 4 + row * _record_dtype(dim).itemsize)
    if end != len(buf):
        raise FeatureFormatError("trailing bytes after last record", end)
    return FeatureDataset(
        samples["values"].astype(np.float64),
        samples["label"].astype(np.int64),
        protos["values"][order].astype(np.float64),
        provenance="ingested",
    )


def _read_csv_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label":
            raise InvalidArgumentError(f"{path}: header must start with 'label'")
        rows = [r for r in reader if r]
    labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
    values = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    if values.shape[1:] != (len(header) - 1,):
        raise InvalidArgumentError(f"{path}: ragged rows")
    return labels, values


def read_feature_csv(samples_path, prototypes_path):
    """Import ``label,f0,...,f{n-1}`` CSV files; prototype rows are keyed by label."""
    labels, features = _read_csv_rows(samples_path)
    plabels, pvalues = _read_csv_rows(prototypes_path)
    order = np.argsort(plabels)
    if not np.array_equal(plabels[order], np.arange(len(plabels))):
        raise InvalidArgumentError("prototype labels must be a permutation of 0..N-1")
    return FeatureDataset(_f32_grid(features), labels, _f32_grid(pvalues[order]), provenance="ingested")
