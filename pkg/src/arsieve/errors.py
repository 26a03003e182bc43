"""Exception hierarchy shared across the package."""


class ArsieveError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(ArsieveError):
    """An argument violates a documented precondition."""


class InvalidLagError(InvalidInputError):
    """Requested autocovariance lag is out of the admissible range."""


class DegenerateSpectrumError(ArsieveError):
    """Eigenvalue spectrum carries no usable signal (all zero)."""


class NumericFailureError(ArsieveError):
    """A numerical routine failed to converge."""


class SingularSystemError(ArsieveError):
    """Yule-Walker system remained singular after ridge escalation."""


class InsufficientSampleError(InvalidInputError):
    """Sample too short for the requested model order."""


class ExplosiveModelError(ArsieveError):
    """Fitted model has spectral radius above one; refusing to simulate."""


class CsvParseError(ArsieveError):
    """CSV ingestion failure, carrying the offending row/column."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        self.row = row
        self.col = col
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", column {col}" if col is not None else "") + ")"
        super().__init__(message + loc)


class ConfigError(ArsieveError):
    """Experiment or CLI configuration violates the documented schema."""


class ReplicateError(ArsieveError):
    """Failure inside a bootstrap replicate, tagged with its index."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"replicate {index}: {cause}")
