"""Exception hierarchy shared by the estimators and the CLI."""


class PanelEcmError(ValueError):
    """Base class for every error raised by panelecm."""

    pass


class InputError(PanelEcmError):
    """Raised when input data or configuration is unusable."""

    pass


class ComputationError(PanelEcmError):
    """Raised when a well-formed input cannot be estimated."""

    pass


# Panel construction


class MissingCell(InputError):
    """Raised when an (entity, period, variable) cell has no value."""

    def __init__(self, entity: str, period: str, variable: str):
        self.entity = entity
        self.period = period
        self.variable = variable
        super().__init__(f"Missing value for entity {entity!r}, period {period}, variable {variable!r}")


class DuplicateCell(InputError):
    """Raised when an (entity, period, variable) cell appears more than once."""

    def __init__(self, entity: str, period: str, variable: str):
        self.entity = entity
        self.period = period
        self.variable = variable
        super().__init__(f"Duplicate value for entity {entity!r}, period {period}, variable {variable!r}")


class GapInPeriods(InputError):
    """Raised when the period index skips a quarter."""

    pass


class NonPositiveForLog(InputError):
    """Raised when a natural-log transform meets a value <= 0."""

    pass


class MissingVariable(InputError):
    """Raised when an estimator asks for a variable the panel does not hold."""

    pass


class MissingYear(InputError):
    """Raised when annual data lacks a year needed for quarterly expansion."""

    pass


class ParseError(InputError):
    """Raised when a CSV cell cannot be parsed."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        location = ""
        if row is not None:
            location += f" (row {row}"
            location += f", column {column!r})" if column else ")"
        super().__init__(f"{message}{location}")


class ConfigError(InputError):
    """Raised when a pipeline configuration is invalid."""

    pass


class InvalidParameters(InputError):
    """Raised when a data-generating process is asked for impossible parameters."""

    pass


# Numerical kernels and estimators


class SequenceTooShort(ComputationError):
    """Raised when a series is too short for the requested lags."""

    pass


class EmptySequence(ComputationError):
    """Raised when a long-run variance is requested for an empty series."""

    pass


class NegativeBandwidth(ComputationError):
    """Raised when a kernel bandwidth is below zero."""

    pass


class RankDeficient(ComputationError):
    """Raised when a design matrix does not have full column rank."""

    def __init__(self, rank: int, columns: int, context: str = ""):
        self.rank = rank
        self.columns = columns
        where = f" in {context}" if context else ""
        super().__init__(f"Design matrix is rank deficient{where}: rank {rank} < {columns} columns")


class TooFewObservations(ComputationError):
    """Raised when a regression has no residual degrees of freedom."""

    pass


class TooFewPeriods(ComputationError):
    """Raised when the effective time dimension is too short for a test."""

    pass


class TooFewEntities(ComputationError):
    """Raised when an estimator needs more cross-sections than the panel has."""

    pass


class NotConverged(ComputationError):
    """Raised when an iterative estimator is required to converge and did not."""

    pass


class StageError(PanelEcmError):
    """Wraps the first failing pipeline stage so the caller knows which one broke."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage '{stage}' failed: {cause}")
