"""Input checks shared by the fitting code."""

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError


def as_float_vector(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def check_series(x, y, sigma=None, min_points=1):
    """Validate a sampled curve; returns float arrays ``(x, y, sigma)``."""
    x = as_float_vector(x, "x")
    y = as_float_vector(y, "y")
    if x.shape != y.shape:
        raise InvalidInputError(f"x and y lengths differ ({x.size} vs {y.size})")
    if x.size < min_points:
        raise InvalidInputError(f"need at least {min_points} points, got {x.size}")
    if x.size > 1 and not np.all(np.diff(x) > 0):
        raise InvalidInputError("x must be strictly increasing")
    if sigma is not None:
        sigma = as_float_vector(sigma, "sigma")
        if sigma.shape != x.shape:
            raise InvalidInputError("sigma must have the same length as x")
        if not np.all(sigma > 0):
            raise InvalidInputError("sigma must be positive")
    return x, y, sigma


def check_positive(value, name):
    value = float(value)
    if not (value > 0 and np.isfinite(value)):
        raise InvalidParameterError(f"{name} must be positive and finite, got {value}")
    return value
