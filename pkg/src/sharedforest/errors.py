"""Exception hierarchy shared by the library and the command line tool.

Exit-code contract for the CLI: 0 success, 1 configuration error,
2 data error, 3 numeric failure.
"""


class SharedForestError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 3


class ConfigError(SharedForestError):
    """Invalid run configuration (bad field, missing file, bad combination)."""

    exit_code = 1


class DataError(SharedForestError):
    """Malformed or inadmissible input data."""

    exit_code = 2


class NumericError(SharedForestError):
    """Numeric failure (non-convergence, overflow, invalid state)."""

    exit_code = 3


class InvalidTreeError(SharedForestError):
    """A decision tree violates a structural invariant."""

    exit_code = 3
