"""Input validation helpers used by the estimators and model code."""
from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def as_matrix(x, name: str = "X", min_rows: int = 0, n_columns=None) -> np.ndarray:
    """Return ``x`` as a finite 2-D float64 array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise ValidationError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if n_columns is not None and arr.shape[1] != n_columns:
        raise ValidationError(f"{name} has {arr.shape[1]} columns, expected {n_columns}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or infinite values")
    return arr


def as_vector(y, name: str = "y", length=None, allow_nan: bool = False) -> np.ndarray:
    arr = np.asarray(y, dtype=float).reshape(-1)
    if length is not None and arr.shape[0] != length:
        raise ValidationError(f"{name} has {arr.shape[0]} entries, expected {length}")
    if not allow_nan and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or infinite values")
    return arr


def as_index(idx, n: int, name: str = "indices") -> np.ndarray:
    arr = np.asarray(idx if idx is not None else [], dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise ValidationError(f"{name} out of range for {n} nodes")
    return arr
