"""Exception types raised by arts_qkd."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateDistributionError(DomainError):
    """The operation needs a density but the fade has zero log-variance."""


class InsufficientDataError(ValueError):
    """Too few samples to estimate a quantity."""


class CalibrationError(ValueError):
    """Calibration totals imply a negative signal component."""


class ModelInconsistencyError(ValueError):
    """Predicted counts per packet fell below the background floor."""


class TraceFormatError(ValueError):
    """A trace file could not be parsed.

    Carries the 1-based line number and the field name when known, so the
    message points at the offending spot in the file.
    """

    def __init__(self, message: str, row: int | None = None, field: str | None = None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
