"""Exception hierarchy.

Every error carries a short machine-readable ``category`` that the CLI prints
and maps to an exit code.
"""

from __future__ import annotations


class TFMSegError(Exception):
    category = "error"
    exit_code = 1


class InvalidInputError(TFMSegError, ValueError):
    category = "invalid-input"
    exit_code = 2


class DimensionMismatchError(InvalidInputError):
    category = "dimension-mismatch"
    exit_code = 3


class ParseError(InvalidInputError):
    category = "parse-error"
    exit_code = 4


class UnsupportedMissingError(TFMSegError):
    """Raised when an operation that needs fully observed data meets a mask."""

    category = "unsupported-missing"
    exit_code = 5


class DegenerateSegmentError(TFMSegError):
    category = "degenerate-segment"
    exit_code = 6


class SegmentTooShortError(TFMSegError):
    category = "segment-too-short"
    exit_code = 7


class RankDeficientError(TFMSegError, ValueError):
    category = "rank-deficient"
    exit_code = 8


class MissingCoefficientsError(TFMSegError):
    category = "missing-coefficients"
    exit_code = 9


class CalibrationError(TFMSegError):
    category = "calibration-error"
    exit_code = 10


ALL_ERRORS = (
    TFMSegError,
    InvalidInputError,
    DimensionMismatchError,
    ParseError,
    UnsupportedMissingError,
    DegenerateSegmentError,
    SegmentTooShortError,
    RankDeficientError,
    MissingCoefficientsError,
    CalibrationError,
)
