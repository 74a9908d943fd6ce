"""Input validation shared by the estimator wrappers and the CLI."""
from __future__ import annotations

import numbers

import numpy as np

from .greens import MatrixGreenFunction, ScalarGreenFunction


def check_positive(value, name: str, allow_inf: bool = False) -> float:
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number")
    value = float(value)
    if np.isnan(value) or value <= 0 or (np.isinf(value) and not allow_inf):
        raise ValueError(f"{name} must be positive{' or inf' if allow_inf else ' and finite'}, got {value}")
    return value


def check_complex_array(x, name: str, ndim: tuple[int, ...] = (1, 3)) -> np.ndarray:
    """Finite complex array with one of the allowed ranks; matrices must be square."""
    arr = np.asarray(x, dtype=complex)
    if arr.ndim not in ndim:
        raise ValueError(f"{name} must have rank in {ndim}, got shape {arr.shape}")
    if arr.ndim == 3 and arr.shape[1] != arr.shape[2]:
        raise ValueError(f"{name} must hold square matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def gf_values(g, name: str) -> np.ndarray:
    """Values of a Green's function object or a raw array."""
    if isinstance(g, (ScalarGreenFunction, MatrixGreenFunction)):
        return g.values
    return check_complex_array(g, name)


def check_same_grid(a, b):
    grid_a, grid_b = getattr(a, "grid", None), getattr(b, "grid", None)
    if grid_a is not None and grid_b is not None and grid_a != grid_b:
        raise ValueError("inputs live on different frequency grids")
    va, vb = np.shape(getattr(a, "values", a)), np.shape(getattr(b, "values", b))
    if va != vb:
        raise ValueError(f"shape mismatch: {va} vs {vb}")
