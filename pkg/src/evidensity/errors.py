"""Exception hierarchy shared by all evidensity modules.

Everything raised on purpose derives from :class:`EvidensityError`, so the
CLI can separate contract violations (exit code 4) from plain I/O failures
(``OSError``, exit code 3).
"""

from __future__ import annotations


class EvidensityError(Exception):
    """Base class for all errors raised by this package."""


class NpyFormatError(EvidensityError):
    """Malformed array container; carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class RankError(EvidensityError):
    """Array payload is neither a 2-D map nor a 3-D stack."""


class DataError(EvidensityError):
    """Array values violate a domain invariant (non-finite, negative, ...)."""


class SchemaError(EvidensityError):
    """Annotation JSON is structurally invalid."""


class ValidationError(EvidensityError):
    """Semantically invalid values (out-of-bounds points, broken masses)."""


class ParameterError(EvidensityError):
    """An argument is outside its documented range."""


class ShapeError(EvidensityError):
    """Mismatched or degenerate array dimensions."""


class BoundsError(EvidensityError):
    """A region does not lie fully inside the image."""


class TotalConflictError(EvidensityError):
    """A pixel carries mass 1 on the empty set; normalization is singular."""


class PackingError(EvidensityError):
    """Point placement could not satisfy the spacing constraint."""


class CalibrationError(EvidensityError):
    """Count calibration is degenerate (all-zero predictions)."""
