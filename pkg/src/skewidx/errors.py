"""Exception types shared across the package."""

from __future__ import annotations


class SkewIndexError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(SkewIndexError, ValueError):
    pass


class DomainError(SkewIndexError, ValueError):
    """A foreign-key value lies outside ``1..D``.

    ``row`` is the 0-based position of the first offending value and
    ``value`` the value found there.
    """

    def __init__(self, row: int, value: int, cardinality: int):
        self.row = row
        self.value = value
        self.cardinality = cardinality
        super().__init__(
            f"value {value} at row {row} outside identifier domain 1..{cardinality}"
        )


class ColumnFormatError(SkewIndexError):
    """Bad magic or unsupported version in a binary column/index file."""


class LengthMismatchError(SkewIndexError):
    pass


class InvalidGeometryError(SkewIndexError, ValueError):
    pass


class IdentifierSpaceExhausted(SkewIndexError):
    pass


class CorrectnessGateError(SkewIndexError):
    """Two execution paths that must agree produced different results."""
