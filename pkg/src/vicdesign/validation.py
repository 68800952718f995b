"""Small input-validation helpers shared by the public entry points."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_finite(x: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} contains non-finite values")
    return x


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise ValidationError(f"{name} must be strictly positive, got {value}")
    return float(value)


def check_nonnegative(value: float, name: str) -> float:
    if not value >= 0:
        raise ValidationError(f"{name} must be non-negative, got {value}")
    return float(value)


def check_in_range(value: float, lo: float, hi: float, name: str,
                   strict_lo: bool = False, strict_hi: bool = False) -> float:
    ok_lo = value > lo if strict_lo else value >= lo
    ok_hi = value < hi if strict_hi else value <= hi
    if not (ok_lo and ok_hi):
        lb = "(" if strict_lo else "["
        rb = ")" if strict_hi else "]"
        raise ValidationError(f"{name} must lie in {lb}{lo}, {hi}{rb}, got {value}")
    return float(value)


def check_strictly_increasing(x: np.ndarray, name: str) -> np.ndarray:
    if x.size >= 2 and not np.all(np.diff(x) > 0):
        raise ValidationError(f"{name} must be strictly increasing")
    return x
