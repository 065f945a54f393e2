"""Exception types shared across the package.

The CLI maps each family to a distinct exit code, so keep the hierarchy flat.
"""

from __future__ import annotations


class ParseError(ValueError):
    """A cell could not be parsed."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SchemaError(ValueError):
    """Input is missing required columns or fields."""


class DomainError(ValueError):
    """An argument lies outside the domain of a numeric operation."""


class DegenerateDataError(ValueError):
    """Data is numerically degenerate (constant vector, singular design, empty class...)."""


class SingularMatrixError(DegenerateDataError):
    def __init__(self, message: str, column: str | int | None = None):
        self.column = column
        super().__init__(message)


class StageError(RuntimeError):
    """A pipeline stage failed; wraps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
