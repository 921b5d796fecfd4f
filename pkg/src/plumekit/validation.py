"""Shared exception types and input validation helpers.

Every data-level failure raises a subclass of :class:`PlumekitError`, which
the CLI maps to exit code 2. Usage errors (bad flags) are a separate class
handled by the argument parser.
"""

from __future__ import annotations

import numpy as np


class PlumekitError(Exception):
    """Base class for all data / invariant errors raised by this package."""


class InvariantError(PlumekitError):
    """A domain object violates one of its declared invariants."""


class ShapeMismatchError(PlumekitError):
    """Two rasters that must share a shape do not."""


class DegenerateFitError(PlumekitError):
    """A least-squares fit has no unique solution (singular or empty)."""


class MissingBandError(PlumekitError):
    """A scene lacks a band required by the requested operation."""


class FormatError(PlumekitError):
    """A file on disk is not well-formed BRF."""


def check_same_shape(a, b, what: str = "inputs") -> None:
    """Raise ShapeMismatchError unless the two rasters share (height, width)."""
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"{what} must share a shape, got {a.shape} vs {b.shape}"
        )


def check_finite(values: np.ndarray, what: str = "values") -> None:
    """Raise InvariantError if any element is NaN or infinite."""
    if not np.all(np.isfinite(values)):
        raise InvariantError(f"{what} contain non-finite entries")


def check_positive(value: float, name: str) -> None:
    if not value > 0:
        raise InvariantError(f"{name} must be > 0, got {value}")


def check_non_negative(value: float, name: str) -> None:
    if not value >= 0:
        raise InvariantError(f"{name} must be >= 0, got {value}")


def as_float2d(values, what: str = "values") -> np.ndarray:
    """Coerce to a C-contiguous 2-D float32 array (always a fresh copy)."""
    arr = np.array(values, dtype=np.float32, order="C", copy=True)
    if arr.ndim != 2:
        raise InvariantError(f"{what} must be 2-D, got ndim={arr.ndim}")
    return arr


def as_u8_2d(values, what: str = "labels") -> np.ndarray:
    """Coerce to a C-contiguous 2-D uint8 array (always a fresh copy)."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise InvariantError(f"{what} must be 2-D, got ndim={arr.ndim}")
    if arr.dtype != np.uint8:
        if arr.dtype.kind not in "uib":
            raise InvariantError(f"{what} must be integer-typed, got {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise InvariantError(f"{what} outside the u8 range 0..255")
    return np.array(arr, dtype=np.uint8, order="C", copy=True)
