"""Input validation helpers shared by the functional API and the estimator."""

from __future__ import annotations

import numpy as np


def check_image(img, *, name: str = "img", clip: bool = False) -> np.ndarray:
    """Return ``img`` as a float64 ``(H, W, 3)`` array.

    Raises ValueError for wrong shape or non-finite samples. With
    ``clip=True`` values are clamped to [0, 1].
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if clip:
        arr = np.clip(arr, 0.0, 1.0)
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def check_quality(quality) -> int:
    q = int(quality)
    if q != quality or not 1 <= q <= 100:
        raise ValueError(f"JPEG quality must be an integer in [1, 100], got {quality!r}")
    return q
