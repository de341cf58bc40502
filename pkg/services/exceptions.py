"""Exception hierarchy shared by all services.

Every class carries the process exit code the command-line entry point uses
when the exception escapes a subcommand.
"""

from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3
EXIT_TRAINING = 4


class GridPricingError(Exception):
    """Base class for all errors raised by the services."""

    exit_code: int = EXIT_DATA


# ---------- grid model ----------


class CaseParseError(GridPricingError):
    """A case file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFeatureError(CaseParseError):
    """The case file uses a feature outside the supported subset."""


class GridValidationError(GridPricingError):
    """A grid violates one of its structural invariants."""

    def __init__(self, message: str, violations: Optional[list] = None):
        self.violations = list(violations or [])
        super().__init__(message)


class InvalidModificationError(GridPricingError):
    """A modification cannot be applied to the grid."""


class ContingencyImpossibleError(GridPricingError):
    """No admissible contingency could be drawn within the resample budget."""


# ---------- solver ----------


class AssemblyError(GridPricingError):
    """The DC-OPF problem could not be assembled for the given inputs."""


class SolverError(GridPricingError):
    """The optimization solver did not reach an optimal point."""

    exit_code = EXIT_SOLVER

    def __init__(self, message: str, status: Optional[str] = None):
        self.status = status
        super().__init__(message)


class OracleInapplicableError(SolverError):
    """The finite-difference LMP oracle cannot be evaluated here."""


class DatasetGenerationError(SolverError):
    """An instance could not be generated within its resample budget."""

    def __init__(self, message: str, instance: int, status: Optional[str] = None):
        self.instance = instance
        super().__init__(message, status)


class BenchmarkError(SolverError, ValueError):
    """The timing benchmark was configured incorrectly or failed."""


# ---------- surrogates ----------


class TrainingError(GridPricingError):
    """A surrogate model could not be trained."""

    exit_code = EXIT_TRAINING


class ShapeMismatchError(TrainingError, ValueError):
    """Feature and target matrices do not line up."""


class FeatureMismatchError(TrainingError, ValueError):
    """A prediction matrix has a different column count than the training data."""


class TrainingDivergedError(TrainingError):
    """Training produced a non-finite loss."""


class ModelFormatError(GridPricingError):
    """A model file has an unknown format or version."""


class CorruptModelError(ModelFormatError):
    """A model file is truncated or otherwise unreadable."""


# ---------- evaluation ----------


class MapeDenominatorError(GridPricingError, ValueError):
    """A ground-truth price is too close to zero for a percentage error."""

    def __init__(self, row: int, node: int, value: float):
        self.row = row
        self.node = node
        self.value = value
        super().__init__(
            f"ground-truth value {value!r} at (row={row}, node={node}) "
            "is below the MAPE denominator guard"
        )
