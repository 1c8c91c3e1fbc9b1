"""Feature datasets: on-disk formats, synthetic generation, and the initial split.

A feature store is an immutable table of (sample id, class label, unit-norm
feature vector).  Two on-disk representations are supported:

* Binary (canonical, little-endian): magic ``AOSA``, version u32=1,
  n_samples u64, dim u32, n_classes u32, then one record per sample laid out
  as [id u64, label i32, dim x f32].
* JSONL (fixtures): one object per line with integer ``id``, integer
  ``label`` and a numeric array ``feature``.

Vectors are L2-normalized at ingestion, so downstream cosine distance is
simply one minus the dot product.  Normalization is skipped for vectors that
are already unit-norm within 1e-6, which makes serialize/load round trips
bit-exact.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError, SchemaError, StateError

MAGIC = b"AOSA"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQII")  # magic, version, n_samples, dim, n_classes
_UNIT_NORM_TOL = 1e-6

#: Label used for annotation outcomes on unknown-class samples.  Never stored
#: in a feature store; it only appears on the invalid side list and, when the
#: engine is configured that way, on neighbor-search entries.
INVALID_LABEL = -1

#: Gaussian cluster noise is resampled whenever its norm exceeds this many
#: times ``noise_sigma * sqrt(dim)``.  The hard cap gives the synthetic data a
#: guaranteed margin between clusters, which the bound verifier relies on.
NOISE_TRUNCATION = 4.0


@dataclass(frozen=True)
class SampleRecord:
    """One sample: identifier, class label, and unit-norm feature vector."""

    id: int
    label: int
    feature: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SampleRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and np.array_equal(self.feature, other.feature)
        )


@dataclass(frozen=True, eq=False)
class FeatureStore:
    """Immutable table of samples with ids strictly increasing.

    ``features`` is an (n_samples, dim) float32 array whose rows are
    unit-norm.  ``ids`` and ``labels`` are parallel 1-D arrays.
    """

    n_samples: int
    dim: int
    n_classes: int
    ids: np.ndarray
    labels: np.ndarray
    features: np.ndarray

    def __post_init__(self) -> None:
        self.ids.setflags(write=False)
        self.labels.setflags(write=False)
        self.features.setflags(write=False)
        object.__setattr__(
            self, "_row_of", {int(i): r for r, i in enumerate(self.ids)}
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureStore):
            return NotImplemented
        return (
            self.n_samples == other.n_samples
            and self.dim == other.dim
            and self.n_classes == other.n_classes
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )

    def row_of(self, sample_id: int) -> int:
        try:
            return self._row_of[int(sample_id)]
        except KeyError:
            raise DataError(f"sample id {sample_id} not present in store") from None

    def label_of(self, sample_id: int) -> int:
        return int(self.labels[self.row_of(sample_id)])

    def feature_of(self, sample_id: int) -> np.ndarray:
        return self.features[self.row_of(sample_id)]

    def records(self) -> list[SampleRecord]:
        return [
            SampleRecord(int(i), int(l), f)
            for i, l, f in zip(self.ids, self.labels, self.features)
        ]


@dataclass
class PartitionState:
    """Mutable experiment state: labeled set, pool, test set, invalid side list.

    ``labeled`` maps sample id to the annotated label; every entry belongs to
    a known class.  ``invalid`` collects ids whose annotation came back
    invalid (unknown class).  The four id collections are pairwise disjoint.
    """

    labeled: dict[int, int]
    pool: set[int]
    test: frozenset[int]
    known_classes: frozenset[int]
    invalid: set[int] = field(default_factory=set)

    def check(self, store: FeatureStore) -> None:
        """Assert disjointness and conservation against the originating store."""
        labeled_ids = set(self.labeled)
        groups = [labeled_ids, self.pool, set(self.test), self.invalid]
        total = sum(len(g) for g in groups)
        union = set().union(*groups)
        if len(union) != total:
            raise StateError("labeled/pool/test/invalid overlap")
        if total != store.n_samples:
            raise StateError(
                f"partition covers {total} ids, store has {store.n_samples}"
            )
        for sid, lbl in self.labeled.items():
            if lbl not in self.known_classes:
                raise StateError(f"labeled id {sid} carries non-known label {lbl}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the Gaussian-cluster synthetic generator.

    One cluster per class.  Points are placed at ``cluster_separation`` times
    a set of orthonormal directions (random unit directions when
    dim < n_clusters) plus radius-capped Gaussian noise, then unit-normalized.
    Observed labels equal the cluster identity except with probability
    ``label_flip_rate`` they flip to a uniformly random other class.
    ``target_slack`` is the clusterability slack the generated data is meant
    to stay under; it is asserted by tests, not enforced at generation time.
    """

    n_clusters: int
    known_clusters: int
    per_cluster: int
    dim: int
    cluster_separation: float
    noise_sigma: float
    label_flip_rate: float
    target_slack: float
    seed: int

    def __post_init__(self) -> None:
        if self.n_clusters < 1 or self.per_cluster < 1 or self.dim < 1:
            raise ConfigError("n_clusters, per_cluster and dim must be positive")
        if not 0 < self.known_clusters <= self.n_clusters:
            raise ConfigError("known_clusters must be in [1, n_clusters]")
        if not 0.0 <= self.label_flip_rate < 0.5:
            raise ConfigError("label_flip_rate must be in [0, 0.5)")
        if self.cluster_separation <= 0:
            raise ConfigError("cluster_separation must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if not 0.0 <= self.target_slack <= 1.0:
            raise ConfigError("target_slack must be in [0, 1]")

    @property
    def n_samples(self) -> int:
        return self.n_clusters * self.per_cluster

    def cluster_of(self, sample_id: int) -> int:
        """True cluster identity; records are laid out in cluster order."""
        return int(sample_id) // self.per_cluster


def _normalize_rows(features: np.ndarray, ids: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(features)):
        bad = int(ids[np.where(~np.all(np.isfinite(features), axis=1))[0][0]])
        raise DataError(f"non-finite feature entries for sample id {bad}")
    norms = np.linalg.norm(features.astype(np.float64), axis=1)
    if np.any(norms == 0.0):
        bad = int(ids[np.where(norms == 0.0)[0][0]])
        raise DataError(f"zero-norm feature vector for sample id {bad}")
    out = features.astype(np.float32, copy=True)
    needs = np.abs(norms - 1.0) > _UNIT_NORM_TOL
    if np.any(needs):
        out[needs] = (
            features[needs].astype(np.float64) / norms[needs, None]
        ).astype(np.float32)
    return out


def _build_store(
    ids: np.ndarray, labels: np.ndarray, features: np.ndarray, n_classes: int
) -> FeatureStore:
    order = np.argsort(ids, kind="stable")
    ids = np.ascontiguousarray(ids[order], dtype=np.int64)
    labels = np.ascontiguousarray(labels[order], dtype=np.int32)
    features = np.ascontiguousarray(features[order])
    if ids.size != np.unique(ids).size:
        raise DataError("duplicate sample ids")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        bad = int(ids[np.where((labels < 0) | (labels >= n_classes))[0][0]])
        raise DataError(
            f"label out of range [0, {n_classes}) for sample id {bad}"
        )
    features = _normalize_rows(features, ids)
    return FeatureStore(
        n_samples=int(ids.size),
        dim=int(features.shape[1]),
        n_classes=int(n_classes),
        ids=ids,
        labels=labels,
        features=features,
    )


def load_feature_store(path: str | os.PathLike) -> FeatureStore:
    """Load a feature store, auto-detecting binary vs JSONL by magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return _load_binary(path)
    return _load_jsonl(path)


def _load_binary(path: str | os.PathLike) -> FeatureStore:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n_samples, dim, n_classes = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    record_dtype = np.dtype(
        [("id", "<u8"), ("label", "<i4"), ("feature", "<f4", (dim,))]
    )
    body = raw[_HEADER.size :]
    if len(body) != n_samples * record_dtype.itemsize:
        raise SchemaError(
            f"{path}: header declares {n_samples} records of {record_dtype.itemsize}"
            f" bytes but body holds {len(body)} bytes"
        )
    records = np.frombuffer(body, dtype=record_dtype)
    ids = records["id"].astype(np.int64)
    return _build_store(ids, records["label"], records["feature"], n_classes)


def _load_jsonl(path: str | os.PathLike) -> FeatureStore:
    ids: list[int] = []
    labels: list[int] = []
    feats: list[list[float]] = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: not JSONL ({exc})") from exc
            try:
                sid, lbl, feat = obj["id"], obj["label"], obj["feature"]
            except (TypeError, KeyError) as exc:
                raise SchemaError(
                    f"{path}:{lineno}: missing id/label/feature fields"
                ) from exc
            if dim is None:
                dim = len(feat)
            elif len(feat) != dim:
                raise SchemaError(
                    f"{path}:{lineno}: feature length {len(feat)} != {dim}"
                )
            ids.append(int(sid))
            labels.append(int(lbl))
            feats.append(feat)
    if not ids:
        raise SchemaError(f"{path}: no records")
    n_classes = max(labels) + 1
    return _build_store(
        np.asarray(ids, dtype=np.int64),
        np.asarray(labels, dtype=np.int32),
        np.asarray(feats, dtype=np.float64),
        n_classes,
    )


def save_feature_store(store: FeatureStore, path: str | os.PathLike) -> None:
    """Write the canonical binary format atomically (tmp file + rename)."""
    record_dtype = np.dtype(
        [("id", "<u8"), ("label", "<i4"), ("feature", "<f4", (store.dim,))]
    )
    records = np.empty(store.n_samples, dtype=record_dtype)
    records["id"] = store.ids
    records["label"] = store.labels
    records["feature"] = store.features
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(
            _HEADER.pack(MAGIC, FORMAT_VERSION, store.n_samples, store.dim, store.n_classes)
        )
        fh.write(records.tobytes())
    os.replace(tmp, path)


def synthetic_centers(spec: SyntheticSpec) -> np.ndarray:
    """Unit cluster directions, deterministic in spec.seed.

    Orthonormal (via QR) when dim >= n_clusters, otherwise random unit
    vectors.  Scaled by ``cluster_separation`` at point-generation time.
    """
    rng = np.random.default_rng([spec.seed, 0])
    raw = rng.normal(size=(spec.dim, max(spec.n_clusters, 1)))
    if spec.dim >= spec.n_clusters:
        q, r = np.linalg.qr(raw)
        # Fix the sign convention so the basis is deterministic.
        q = q * np.sign(np.diag(r))[None, :]
        centers = q[:, : spec.n_clusters].T
    else:
        centers = raw.T[: spec.n_clusters]
        centers = centers / np.linalg.norm(centers, axis=1, keepdims=True)
    return centers


def truncated_noise(
    rng: np.random.Generator, count: int, dim: int, sigma: float
) -> np.ndarray:
    """Gaussian noise rows, resampled until norm <= NOISE_TRUNCATION*sigma*sqrt(dim)."""
    if sigma == 0.0:
        return np.zeros((count, dim))
    cap = NOISE_TRUNCATION * sigma * math.sqrt(dim)
    noise = rng.normal(scale=sigma, size=(count, dim))
    while True:
        over = np.linalg.norm(noise, axis=1) > cap
        if not np.any(over):
            return noise
        noise[over] = rng.normal(scale=sigma, size=(int(over.sum()), dim))


def generate_synthetic(spec: SyntheticSpec) -> FeatureStore:
    """Generate a Gaussian-cluster store; deterministic given spec.seed.

    Sample ids run 0..n_samples-1 in cluster order, so
    ``spec.cluster_of(id)`` recovers the true cluster of every record.
    """
    centers = synthetic_centers(spec) * spec.cluster_separation
    rng = np.random.default_rng([spec.seed, 1])
    features = np.empty((spec.n_samples, spec.dim))
    labels = np.empty(spec.n_samples, dtype=np.int32)
    for c in range(spec.n_clusters):
        lo = c * spec.per_cluster
        hi = lo + spec.per_cluster
        noise = truncated_noise(rng, spec.per_cluster, spec.dim, spec.noise_sigma)
        features[lo:hi] = centers[c][None, :] + noise
        cluster_labels = np.full(spec.per_cluster, c, dtype=np.int32)
        if spec.label_flip_rate > 0 and spec.n_clusters > 1:
            flips = rng.random(spec.per_cluster) < spec.label_flip_rate
            draws = rng.integers(0, spec.n_clusters - 1, size=spec.per_cluster)
            flipped = draws + (draws >= c)
            cluster_labels[flips] = flipped[flips]
        labels[lo:hi] = cluster_labels
    ids = np.arange(spec.n_samples, dtype=np.int64)
    return _build_store(ids, labels, features, spec.n_clusters)


def split_initial(
    store: FeatureStore,
    known: set[int] | frozenset[int],
    init_fraction: float,
    test_fraction: float,
    seed: int,
) -> PartitionState:
    """Split a store into labeled seed set, unlabeled pool, and test set.

    Per known class: ``floor(test_fraction * n)`` samples go to the test set,
    then ``floor(init_fraction * remaining)`` (at least one) are labeled.
    Everything else, including every unknown-class sample, forms the pool.
    The test set contains only known-class samples.
    """
    known = frozenset(int(c) for c in known)
    if not known:
        raise ConfigError("known class set must be non-empty")
    if not 0.0 < init_fraction < 1.0:
        raise ConfigError("init_fraction must be in (0, 1)")
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigError("test_fraction must be in [0, 1)")
    for c in known:
        if c < 0 or c >= store.n_classes:
            raise ConfigError(f"known class {c} outside [0, {store.n_classes})")

    rng = np.random.default_rng(seed)
    labeled: dict[int, int] = {}
    test: set[int] = set()
    for c in sorted(known):
        class_ids = store.ids[store.labels == c]
        if class_ids.size == 0:
            raise ConfigError(f"known class {c} has no samples")
        shuffled = class_ids[rng.permutation(class_ids.size)]
        n_test = int(math.floor(test_fraction * class_ids.size))
        test.update(int(i) for i in shuffled[:n_test])
        remaining = shuffled[n_test:]
        n_init = max(1, int(math.floor(init_fraction * remaining.size)))
        for i in remaining[:n_init]:
            labeled[int(i)] = c
    pool = {int(i) for i in store.ids} - set(labeled) - test
    return PartitionState(
        labeled=labeled,
        pool=pool,
        test=frozenset(test),
        known_classes=known,
    )


def measure_clusterability_slack(
    store: FeatureStore, k: int, true_labels: np.ndarray | None = None
) -> float:
    """Fraction of samples whose K nearest neighbors include another class.

    Neighbors are searched over the whole store (self excluded) under cosine
    distance.  ``true_labels`` overrides the stored labels, which matters for
    synthetic data with label flips where cluster identity is the truth.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    labels = store.labels if true_labels is None else np.asarray(true_labels)
    feats = store.features.astype(np.float64)
    sims = feats @ feats.T
    # Self-similarity to -inf so a sample is never its own neighbor.
    np.fill_diagonal(sims, -np.inf)
    kk = min(k, store.n_samples - 1)
    impure = 0
    for row in range(store.n_samples):
        nn = np.argpartition(-sims[row], kk - 1)[:kk]
        if np.any(labels[nn] != labels[row]):
            impure += 1
    return impure / store.n_samples
