"""Embedding extraction for standard image datasets, writing the binary
feature-store format the annotation engine consumes."""

__version__ = "0.1.0"

from .datasets import DATASET_LOADERS, ImageDataset, load_dataset
from .encoders import ENCODER_LOADERS, Encoder, load_encoder
from .errors import DatasetError, EncoderError, ExtractorError, JobError
from .job import ExtractJob, extract
from .writer import write_feature_store, write_sidecar

__all__ = [
    "DATASET_LOADERS",
    "ENCODER_LOADERS",
    "DatasetError",
    "Encoder",
    "EncoderError",
    "ExtractJob",
    "ExtractorError",
    "ImageDataset",
    "JobError",
    "extract",
    "load_dataset",
    "load_encoder",
    "write_feature_store",
    "write_sidecar",
]
