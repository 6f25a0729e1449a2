"""Array aliases and shape checks shared across modules."""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError

FloatArray = NDArray[np.float64]


def as_vector(
    value: ArrayLike, length: int | None = None, name: str = "vector"
) -> FloatArray:
    """Convert to a 1-D float array, optionally checking its length.

    Raises:
        InputError: If the value is not 1-D or has the wrong length
    """
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise InputError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def as_matrix(
    value: ArrayLike,
    rows: int | None = None,
    cols: int | None = None,
    name: str = "matrix",
) -> FloatArray:
    """Convert to a 2-D float array, optionally checking its shape.

    Raises:
        InputError: If the value is not 2-D or has the wrong shape
    """
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise InputError(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise InputError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    return arr


def require_finite(arr: FloatArray, name: str) -> None:
    """Raise InputError if any entry of ``arr`` is NaN or infinite."""
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
