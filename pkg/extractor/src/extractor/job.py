"""The extraction job: dataset in, binary feature store out."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import DATASET_LOADERS, SPLITS, load_dataset
from .encoders import ENCODER_LOADERS, load_encoder
from .errors import JobError
from .writer import write_feature_store, write_sidecar


@dataclass(frozen=True)
class ExtractJob:
    dataset: str
    encoder: str
    output: str
    split: str = "train"
    batch_size: int = 64
    device: str = "cpu"
    data_root: str | None = None

    def __post_init__(self) -> None:
        if self.dataset not in DATASET_LOADERS:
            raise JobError(
                f"unknown dataset {self.dataset!r}; choose from {sorted(DATASET_LOADERS)}"
            )
        if self.encoder not in ENCODER_LOADERS:
            raise JobError(
                f"unknown encoder {self.encoder!r}; choose from {sorted(ENCODER_LOADERS)}"
            )
        if self.split not in SPLITS:
            raise JobError(f"unknown split {self.split!r}; choose from {SPLITS}")
        if self.batch_size < 1:
            raise JobError("batch_size must be >= 1")


def extract(job: ExtractJob) -> Path:
    """Encode every image in dataset index order and write the store.

    Vectors land on disk raw (unnormalized); the consuming loader normalizes.
    The file is written once at the end via an atomic rename, with a sidecar
    JSON recording the encoder variant and preprocessing provenance.
    """
    root = Path(job.data_root) if job.data_root else None
    dataset = load_dataset(job.dataset, job.split, root)
    encoder = load_encoder(job.encoder, job.device)

    chunks: list[np.ndarray] = []
    batch: list = []
    for image in dataset.images():
        batch.append(image)
        if len(batch) == job.batch_size:
            chunks.append(encoder.encode_batch(batch))
            batch = []
    if batch:
        chunks.append(encoder.encode_batch(batch))
    if not chunks:
        raise JobError(f"dataset {job.dataset}/{job.split} yielded no images")
    features = np.vstack(chunks)
    if features.shape[0] != len(dataset):
        raise JobError(
            f"encoder returned {features.shape[0]} rows for {len(dataset)} images"
        )

    out = Path(job.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_store(out, np.asarray(dataset.labels), features, dataset.n_classes)
    write_sidecar(
        out,
        {
            "dataset": dataset.name,
            "split": dataset.split,
            "n_samples": len(dataset),
            "n_classes": dataset.n_classes,
            "dim": int(features.shape[1]),
            "encoder": encoder.name,
            "encoder_variant": encoder.variant,
            "vectors": "raw (loader normalizes)",
        },
    )
    return out
