"""Exception hierarchy shared across the package."""


class AosaError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(AosaError):
    """A file does not look like the expected format at all (bad magic, bad version)."""


class SchemaError(AosaError):
    """A file parses but its structure contradicts its own header or the expected shape."""


class DataError(AosaError):
    """Well-formed input carrying invalid values (zero-norm vectors, bad rows, unknown ids)."""


class ConfigError(AosaError):
    """Invalid configuration or invalid argument combination for a run."""


class StateError(AosaError):
    """An operation was attempted against an inconsistent or unsupported state."""


class TrainingError(AosaError):
    """The classifier cannot be trained on the given labeled set."""
