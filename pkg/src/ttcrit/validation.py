"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ShapeError, ValidationError


def is_power_of_two(n) -> bool:
    return isinstance(n, numbers.Integral) and n >= 1 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    """Return ``l`` with ``2**l == n``; raise if ``n`` is not a power of two."""
    if not is_power_of_two(int(n)):
        raise ValidationError(f"size {n} must be a power of two")
    return int(n).bit_length() - 1


def check_power_of_two(n, name="size", minimum=1):
    n = int(n)
    if n < minimum or not is_power_of_two(n):
        raise ValidationError(f"{name} {n} must be a power of two >= {minimum}")
    return n


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        cmp = ">" if strict else ">="
        raise ValidationError(f"{name} must be finite and {cmp} 0, got {value}")
    return value


def check_array(a, name="array", ndim=None, nonnegative=False, finite=True, dtype=float):
    """Convert to a float ndarray and check dimensionality and sign."""
    arr = np.asarray(a, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if finite and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if nonnegative and np.any(arr < 0):
        raise ValidationError(f"{name} must be nonnegative")
    return arr


def check_matrix(a, name="matrix", square=False):
    arr = check_array(a, name, ndim=2)
    if square and arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_random_state(seed):
    """Return a ``numpy.random.Generator`` for ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
