"""Exception hierarchy shared across the package.

Exit codes used by the CLI: 2 for configuration problems, 3 for data
problems, 4 for numerical failures.
"""


class RoadsError(Exception):
    exit_code = 1


class ConfigurationError(RoadsError):
    """Invalid parameters, incompatible options or malformed config."""

    exit_code = 2


class DataError(RoadsError):
    """Malformed or dimensionally inconsistent input data."""

    exit_code = 3


class GraphStructureError(DataError):
    """A graph violates a structural precondition (usually acyclicity)."""


class DegenerateDataError(DataError):
    """Data that cannot be processed, e.g. a constant column."""


class NumericalError(RoadsError):
    """Non-finite values, singular systems or failed factorizations."""

    exit_code = 4
