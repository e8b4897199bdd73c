"""
Scores for recovered trust matrices.
"""
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike

from social_radar.exceptions import DimensionMismatchError, InvalidParameterError
from social_radar.graph import Seed


def _pair(estimate: ArrayLike, truth: ArrayLike):
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise DimensionMismatchError(
            f"Estimate has shape {estimate.shape}, truth has shape {truth.shape}"
        )
    return estimate, truth


def nmse(estimate: ArrayLike, truth: ArrayLike) -> float:
    """``||estimate - truth||_F^2 / ||truth||_F^2``."""
    estimate, truth = _pair(estimate, truth)
    scale = float(np.sum(truth**2))
    if scale == 0.0:
        raise InvalidParameterError("NMSE is undefined for an all-zero truth")
    return float(np.sum((estimate - truth) ** 2)) / scale


def _offdiagonal_mask(shape) -> np.ndarray:
    mask = np.ones(shape, dtype=bool)
    if len(shape) == 2 and shape[0] == shape[1]:
        np.fill_diagonal(mask, False)
    return mask


def support_error(
    estimate: ArrayLike,
    truth: ArrayLike,
    tau: Optional[float] = None,
    support: Optional[ArrayLike] = None,
) -> float:
    """
    Fraction of the allowed entries whose detected pattern disagrees with the truth.

    An entry counts as detected when ``|estimate| > tau``; it is a true edge when
    ``truth > 0``. The average runs over ``support`` (all off-diagonal entries of a
    square matrix by default). ``tau`` defaults to ``1e-4 * max(truth)``.
    """
    estimate, truth = _pair(estimate, truth)
    if tau is None:
        tau = max(1e-4 * float(truth.max(initial=0.0)), np.finfo(float).tiny)
    if tau <= 0:
        raise InvalidParameterError(f"tau must be > 0, got {tau}")
    allowed = (
        _offdiagonal_mask(truth.shape)
        if support is None
        else np.asarray(support, dtype=bool) & _offdiagonal_mask(truth.shape)
    )
    if not allowed.any():
        return 0.0
    mismatched = (np.abs(estimate) > tau) != (truth > 0)
    return float(mismatched[allowed].mean())


def expose_support(truth_support: ArrayLike, p_known: float, seed: Seed = None) -> np.ndarray:
    """
    Allowed support ``S`` when a ``p_known`` fraction of the true zeros is revealed:
    every off-diagonal pair except a uniformly random share of the true zeros.

    For a fixed seed the revealed zeros are nested, so ``S`` shrinks as ``p_known``
    grows.
    """
    if not 0.0 <= p_known <= 1.0:
        raise InvalidParameterError(f"p_known must lie in [0, 1], got {p_known}")
    truth_support = np.asarray(truth_support) != 0
    allowed = _offdiagonal_mask(truth_support.shape)
    zeros = np.flatnonzero(allowed & ~truth_support)
    revealed = np.random.default_rng(seed).permutation(zeros)
    count = int(round(p_known * zeros.size))
    allowed.flat[revealed[:count]] = False
    return allowed
