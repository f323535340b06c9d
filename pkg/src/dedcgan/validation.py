"""Input checks shared by the estimator wrappers and the harness."""
from __future__ import annotations

import numpy as np

from .exceptions import EmptyDataset, ShapeMismatch


def check_images(x, channels: int | None = 2, square: bool = True) -> np.ndarray:
    """Return ``x`` as a finite float array ``[n, C, H, W]`` with values in ``[0, 1]``."""
    arr = np.asarray(x)
    if arr.dtype == object or not np.issubdtype(arr.dtype, np.number) or np.iscomplexobj(arr):
        raise TypeError(f"images must be real numeric, got dtype {arr.dtype}")
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ShapeMismatch(f"images must be [n, C, H, W], got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyDataset("no images")
    if channels is not None and arr.shape[1] != channels:
        raise ShapeMismatch(f"expected {channels} channels, got {arr.shape[1]}")
    if square and arr.shape[2] != arr.shape[3]:
        raise ShapeMismatch(f"images must be square, got {arr.shape[2]}x{arr.shape[3]}")
    if not np.isfinite(arr).all():
        raise ValueError("images contain NaN or Inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return arr.astype(np.float64 if arr.dtype == np.float64 else np.float32, copy=False)


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeMismatch(f"labels must be 1-D, got shape {y.shape}")
    if y.shape[0] != n:
        raise ShapeMismatch(f"{y.shape[0]} labels for {n} samples")
    return y


def check_iq(x) -> np.ndarray:
    """Return dual-channel baseband frames as complex ``[n, 2, T]``."""
    arr = np.asarray(x)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != 2:
        raise ShapeMismatch(f"I/Q frames must be [n, 2, T], got {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyDataset("no frames")
    if not np.isfinite(arr).all():
        raise ValueError("frames contain NaN or Inf")
    return arr.astype(np.complex128, copy=False)


def check_fractions(fractions) -> tuple[float, ...]:
    f = tuple(float(v) for v in fractions)
    if any(v < 0 for v in f) or abs(sum(f) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {f}")
    return f
