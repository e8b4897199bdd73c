"""
Small numerical helpers shared by the dynamics, recovery and identification modules.
"""
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike


def numerical_rank(matrix: ArrayLike, tol: Optional[float] = None) -> int:
    """
    Numerical rank from the singular values.

    The default threshold is ``max(rows, cols) * eps * sigma_max``.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0
    singular_values = np.linalg.svd(matrix, compute_uv=False)
    if tol is None:
        tol = max(matrix.shape) * np.finfo(float).eps * singular_values.max(initial=0.0)
    return int(np.count_nonzero(singular_values > tol))


def spectral_radius(matrix: ArrayLike) -> float:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def spectral_norm(matrix: ArrayLike) -> float:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0.0
    return float(np.linalg.norm(matrix, 2))


def offdiag(matrix: np.ndarray) -> np.ndarray:
    """Copy of a square matrix with its diagonal zeroed."""
    result = np.array(matrix, dtype=float, copy=True)
    np.fill_diagonal(result, 0.0)
    return result
