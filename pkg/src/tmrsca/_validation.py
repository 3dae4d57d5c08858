"""Input validation shared by the functional API and the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .aes_core import as_block


def check_plaintexts(plaintexts, *, min_rows: int = 1) -> np.ndarray:
    """Return plaintexts as a C-contiguous (N, 16) uint8 matrix.

    Accepts an array-like of octets or a sequence of 16-octet blocks
    (``bytes`` or hex strings).
    """
    if not isinstance(plaintexts, np.ndarray):
        plaintexts = list(plaintexts)
        if len(plaintexts) == 0:
            raise ValueError("plaintext list is empty")
        if isinstance(plaintexts[0], (bytes, bytearray, str)):
            plaintexts = [np.frombuffer(as_block(p, "plaintext"), np.uint8) for p in plaintexts]
    arr = np.asarray(plaintexts)
    if arr.size == 0:
        raise ValueError("plaintext list is empty")
    if arr.ndim != 2 or arr.shape[1] != 16:
        raise ValueError(f"plaintexts must have shape (N, 16), got {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any((arr < 0) | (arr > 255)):
            raise ValueError("plaintext octets must lie in 0..255")
    arr = check_array(arr, dtype=None, ensure_min_samples=min_rows, ensure_all_finite=True)
    return np.ascontiguousarray(arr, dtype=np.uint8)


def check_traces(X, *, min_rows: int = 1) -> np.ndarray:
    """Return power samples as a finite float64 (N, M) matrix; 1-D input becomes one column."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return check_array(arr, dtype=np.float64, ensure_min_samples=min_rows)


def check_byte_index(byte_index: int) -> int:
    if not 0 <= int(byte_index) <= 15:
        raise ValueError(f"byte_index must be in 0..15, got {byte_index}")
    return int(byte_index)


def check_selection(selection: str) -> str:
    if selection not in ("max_signed", "max_abs"):
        raise ValueError(f"selection must be 'max_signed' or 'max_abs', got {selection!r}")
    return selection
