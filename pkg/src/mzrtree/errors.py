"""Exception hierarchy shared across the package."""


class MzRTreeError(Exception):
    """Base class for all errors raised by this package."""


class GridRangeError(MzRTreeError):
    """A physical coordinate falls outside the dataset grid."""


class IngestError(MzRTreeError):
    """Base class for errors while reading input data."""


class MzXmlParseError(IngestError):
    """The input is not well-formed XML."""


class MzXmlSchemaError(IngestError):
    """A scan is missing a required attribute or has an invalid value."""


class UnsupportedFeatureError(IngestError):
    """The input uses an encoding feature this reader does not support."""


class PeakDecodeError(IngestError):
    """A Base64 peak blob could not be decoded."""


class StorageError(MzRTreeError):
    """Base class for on-disk store errors."""


class CorruptionError(StorageError):
    """A file's magic, checksum, or framing does not match what was written."""


class ConsistencyError(StorageError):
    """Store components come from different builds."""


class BenchError(MzRTreeError):
    """A benchmark run produced inconsistent results."""
