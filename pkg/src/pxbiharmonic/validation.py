"""Input validation helpers shared by every module.

These mirror the ``sklearn.utils.validation`` conventions: each helper either
returns a cleaned value or raises a subclass of ``ValueError``.
"""

import numbers

import numpy as np

from .exceptions import GridMismatchError, InvalidFieldError


def check_values(values, shape=None, name="field"):
    """Return ``values`` as a float64 array after shape and finiteness checks."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise InvalidFieldError(f"{name} is empty")
    if shape is not None and arr.shape != tuple(shape):
        if arr.size == int(np.prod(shape)) and arr.ndim == 1:
            arr = arr.reshape(shape)
        else:
            raise InvalidFieldError(
                f"{name} has shape {arr.shape}, expected {tuple(shape)}"
            )
    if not np.all(np.isfinite(arr)):
        raise InvalidFieldError(f"{name} contains non-finite values")
    return arr


def check_field(field, grid=None, name="field"):
    """Validate a ``ScalarField`` (optionally against an expected grid)."""
    from .exponent_field import ScalarField

    if not isinstance(field, ScalarField):
        raise InvalidFieldError(f"{name} must be a ScalarField, got {type(field).__name__}")
    if grid is not None and field.grid != grid:
        raise GridMismatchError(f"{name} lives on {field.grid}, expected {grid}")
    return field


def check_same_grid(*fields):
    """Return the common grid of ``fields`` or raise ``GridMismatchError``."""
    fields = [f for f in fields if f is not None]
    if not fields:
        raise InvalidFieldError("no fields given")
    grid = check_field(fields[0]).grid
    for f in fields[1:]:
        check_field(f)
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {f.grid} vs {grid}")
    return grid


def check_exponent(p, lower=1.0, name="p"):
    """Require ``p > lower`` at every node."""
    vals = p.values if hasattr(p, "values") else np.asarray(p, dtype=float)
    if np.any(vals <= lower):
        bad = int(np.sum(vals <= lower))
        raise InvalidFieldError(f"{name} must exceed {lower} everywhere ({bad} nodes violate)")
    return p


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real, got {value!r}")
    if value < 0 or (strict and value == 0):
        raise ValueError(f"{name} must be {'> 0' if strict else '>= 0'}, got {value!r}")
    return float(value)
