"""Small input-validation helpers used by the estimators and file codecs."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


def as_float_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array and reject NaN/Inf."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_label_vector(y, n: int | None = None, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {n}")
    arr = arr.astype(np.int64)
    bad = np.setdiff1d(np.unique(arr), [0, 1])
    if bad.size:
        raise ValueError(f"{name} contains labels outside {{0, 1}}: {bad.tolist()}")
    return arr


def check_feature_dim(X: np.ndarray, expected: int, name: str = "X") -> None:
    if X.shape[-1] != expected:
        raise DimensionError(
            f"{name} has feature dimension {X.shape[-1]}, expected {expected}"
        )


def check_image_01(image: np.ndarray, side: int | None = None) -> np.ndarray:
    """Validate an H x W x 3 float image with values in [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"expected H x W x 3 image, got shape {arr.shape}")
    if side is not None and arr.shape[:2] != (side, side):
        raise DimensionError(
            f"expected {side} x {side} image, got {arr.shape[0]} x {arr.shape[1]}"
        )
    if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    return arr
