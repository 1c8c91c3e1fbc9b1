"""Binary feature-store writer.

Produces the exact on-disk layout the annotation engine consumes
(little-endian): magic ``AOSA``, version u32=1, n_samples u64, dim u32,
n_classes u32, then per record [id u64, label i32, dim x f32].  Vectors are
written raw; normalization is the loader's job, so one file serves any
distance convention.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import JobError

MAGIC = b"AOSA"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQII")


def write_feature_store(
    path: str | os.PathLike,
    labels: np.ndarray,
    features: np.ndarray,
    n_classes: int,
) -> None:
    """Write records in index order (ids 0..n-1) atomically."""
    labels = np.asarray(labels, dtype=np.int32)
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2 or labels.ndim != 1 or labels.size != features.shape[0]:
        raise JobError("labels and features disagree on the record count")
    if labels.size == 0:
        raise JobError("refusing to write an empty feature store")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise JobError(f"labels outside [0, {n_classes})")
    n, dim = features.shape
    record_dtype = np.dtype([("id", "<u8"), ("label", "<i4"), ("feature", "<f4", (dim,))])
    records = np.empty(n, dtype=record_dtype)
    records["id"] = np.arange(n, dtype=np.uint64)
    records["label"] = labels
    records["feature"] = features
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, dim, n_classes))
        fh.write(records.tobytes())
    os.replace(tmp, path)


def write_sidecar(path: str | os.PathLike, metadata: dict) -> None:
    """Record extraction provenance next to the store (<out>.meta.json)."""
    sidecar = f"{path}.meta.json"
    tmp = f"{sidecar}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, sidecar)
