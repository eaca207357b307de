"""Exception taxonomy shared across the package."""


class LanewiseError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(LanewiseError, ValueError):
    """Invalid numeric argument (negative sigma, nonpositive gap, ...)."""


class SampleSizeError(ParameterError):
    """Too few observations to fit a distribution."""


class ConfigError(LanewiseError, ValueError):
    """Malformed run configuration (file or flags)."""


class SimulationError(LanewiseError):
    """Simulator could not run with the given configuration."""


class TableIntegrityError(LanewiseError):
    """A stored or in-memory gap table is internally inconsistent."""


class TableFormatError(TableIntegrityError):
    """File is not a gap-table file at all."""


class TableVersionError(TableIntegrityError):
    """Table file has an unsupported format version."""


class TableChecksumError(TableIntegrityError):
    """Payload bytes do not match the stored checksum."""


class TableTruncatedError(TableIntegrityError):
    """Table file ends before the declared payload length."""
