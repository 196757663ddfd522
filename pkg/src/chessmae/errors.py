"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3 and numeric failures exit 4.
"""


class ChessMAEError(Exception):
    """Base class for all package errors."""


class ConfigError(ChessMAEError, ValueError):
    """Invalid configuration or incompatible shapes."""


class ShapeError(ConfigError):
    """Tensor shapes do not satisfy an operation's contract."""


class DataError(ChessMAEError):
    """Malformed or missing data on disk."""


class FormatError(DataError, ValueError):
    """A file does not follow its expected binary/text layout."""


class MissingRecordError(DataError, KeyError):
    """A requested id is absent from an index or sidecar file."""


class CheckpointError(DataError):
    """Base class for checkpoint loading failures."""


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class UnknownTensorError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError, ConfigError):
    pass


class NumericError(ChessMAEError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""


class GraphReleasedError(ChessMAEError, RuntimeError):
    """backward() was called on a graph whose buffers were already freed."""
