"""Errors raised by the extraction pipeline."""


class ExtractorError(Exception):
    """Base class for extraction failures."""


class DatasetError(ExtractorError):
    """The dataset could not be loaded (missing, not downloadable, corrupt)."""


class EncoderError(ExtractorError):
    """The encoder could not be loaded or the requested device is unavailable."""


class JobError(ExtractorError):
    """Invalid extraction job configuration."""
