"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or configuration values."""


class DimensionError(ValueError):
    """Arrays or bases with incompatible shapes or grids."""


class TruncationError(ValueError):
    """A mode basis does not fit on the requested grid."""

    def __init__(self, message, leakage=None):
        super().__init__(message)
        self.leakage = leakage


class DegenerateDataError(ValueError):
    """Data that carries no usable fluctuation signal (e.g. zero covariance)."""


class DataFormatError(IOError):
    """A file that cannot be parsed (bad magic, version, or checksum)."""
