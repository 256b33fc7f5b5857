"""Input validation helpers shared by the estimators and free functions."""
from __future__ import annotations

import numbers

import numpy as np

from .exceptions import DomainError, InvalidDimensionError


def check_samples(x, name="samples", allow_empty=False):
    """Return ``x`` as a finite 1-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidDimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0 and not allow_empty:
        raise DomainError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def check_weights(weights, n, atol=1e-12):
    """Validate an optional probability vector of length ``n``."""
    if weights is None:
        return None
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise InvalidDimensionError(f"weights must have shape ({n},), got {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > atol:
        raise DomainError(f"weights must sum to 1 (got {w.sum()!r})")
    return w


def check_square(m, name="matrix", dtype=None):
    arr = np.atleast_2d(np.asarray(m, dtype=dtype))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidDimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InvalidDimensionError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_scalar(value, name, lower=None, upper=None, lower_open=False, upper_open=False):
    """Bounds-checked float conversion."""
    v = float(value)
    if not np.isfinite(v):
        raise DomainError(f"{name} must be finite, got {value!r}")
    if lower is not None and (v < lower or (lower_open and v == lower)):
        op = ">" if lower_open else ">="
        raise DomainError(f"{name} must be {op} {lower}, got {v}")
    if upper is not None and (v > upper or (upper_open and v == upper)):
        op = "<" if upper_open else "<="
        raise DomainError(f"{name} must be {op} {upper}, got {v}")
    return v


def as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
