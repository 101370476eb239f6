"""Exception hierarchy for the TBN compiler.

Every error carries the process exit code the CLI reports for it.
"""

from typing import Optional


class TbnError(Exception):
    """Base class for all compiler and runtime errors."""

    exit_code = 1


class ConfigError(TbnError):
    """Invalid configuration value."""

    exit_code = 2


class ModelSyntaxError(TbnError):
    """The model file could not be parsed."""

    def __init__(self, message: str, line: int, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ModelError(TbnError):
    """The model is structurally unusable (undeclared names, missing tables)."""


class FactorError(TbnError):
    """Inconsistent factor arithmetic (scope or cardinality mismatch)."""


class EvidenceError(TbnError):
    """A likelihood vector is malformed."""


class EvidenceStreamError(TbnError):
    """An evidence stream record is malformed."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnknownNameError(TbnError):
    """An observable or query target that the plan does not declare."""


class ImpossibleEvidenceError(TbnError):
    """Total probability mass collapsed below the underflow threshold."""

    exit_code = 4

    def __init__(self, message: str, table: Optional[str] = None):
        self.table = table
        super().__init__(message)


class PlanningError(TbnError):
    """The planner was given inputs it cannot plan for."""


class StabilizationError(PlanningError):
    """The past-expression factorization failed to reach a fixpoint."""


class PlanCapacityError(PlanningError):
    """A plan buffer would exceed the configured size cap."""

    def __init__(self, message: str, nodes: tuple = ()):
        self.nodes = tuple(nodes)
        super().__init__(message)


class PlanFormatError(TbnError):
    """A plan file is corrupted, of the wrong version, or fails linting."""


class OracleInfeasibleError(TbnError):
    """The brute-force joint table would exceed the oracle size cap."""
