"""Input-validation helpers shared by the estimators and metrics."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError


def as_float_array(x, name: str) -> np.ndarray:
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} is not numeric: {exc}") from exc
    return arr


def check_vector(y, name: str = "y", length: int | None = None) -> np.ndarray:
    arr = as_float_array(y, name)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ShapeError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_matrix(X, name: str = "X", n_features: int | None = None) -> np.ndarray:
    arr = as_float_array(X, name)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D [n x features], got shape {arr.shape}")
    if n_features is not None and arr.shape[1] != n_features:
        raise ShapeError(f"{name} must have {n_features} feature columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_windows(
    X,
    name: str = "X",
    n_features: int | None = None,
    window_len: int | None = None,
) -> np.ndarray:
    arr = as_float_array(X, name)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be 3-D [n x window x features], got shape {arr.shape}")
    if window_len is not None and arr.shape[1] != window_len:
        raise ShapeError(f"{name} windows must have length {window_len}, got {arr.shape[1]}")
    if n_features is not None and arr.shape[2] != n_features:
        raise ShapeError(f"{name} must have {n_features} feature columns, got {arr.shape[2]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_same_length(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"{what} must have equal length: {a.shape[0]} vs {b.shape[0]}")
