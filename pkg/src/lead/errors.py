"""Exception hierarchy shared by all pipeline stages.

Each class maps to one error category surfaced by the CLI exit codes.
"""


class LeadError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(LeadError):
    """Invalid configuration value or combination."""

    exit_code = 2


class DataError(LeadError):
    """Invalid data content (non-finite values, unknown subjects, bad labels)."""

    exit_code = 3


class DimensionError(DataError):
    """Mismatched array dimensions within one logical collection."""

    exit_code = 3


class FormatError(LeadError):
    """Unrecognized or corrupt on-disk structure (bad magic, malformed header)."""

    exit_code = 4


class VersionError(FormatError):
    """Recognized file family but unsupported version."""

    exit_code = 4


class LengthError(FormatError):
    """Payload shorter or longer than the header declares."""

    exit_code = 4


class ShapeError(LeadError):
    """Tensor shape incompatible with the model or checkpoint."""

    exit_code = 5


class NumericError(LeadError):
    """Non-finite values produced during computation (divergence, overflow)."""

    exit_code = 6
