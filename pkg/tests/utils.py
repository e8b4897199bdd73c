import itertools

import numpy as np

from social_radar.recovery import RecoveryProblem, RecoveryResult


def assert_row_stochastic(B: np.ndarray, D: np.ndarray, tol: float = 1e-10) -> None:
    assert (B >= 0).all() and (D >= 0).all(), "Trust weights unexpectedly negative"
    residual = np.abs(B.sum(axis=1) + D.sum(axis=1) - 1.0).max()
    assert residual <= tol, f"Rows do not sum to one (max residual {residual:.3e})"


def assert_feasible(
    result: RecoveryResult, problem: RecoveryProblem, row_sum_tol: float = 1e-3
) -> None:
    """
    Check the hard constraints of a recovery result: nonnegativity, supports and the
    pinned diagonal hold exactly, the row sums only up to ``row_sum_tol`` (they are
    enforced through a penalty).
    """
    residuals = result.residuals
    assert residuals.nonnegativity == 0.0, f"Negative entries: {residuals}"
    assert residuals.support == 0.0, f"Entries outside the support: {residuals}"
    assert residuals.diagonal <= 1e-12, f"Diagonal not pinned to c: {residuals}"
    assert residuals.row_sum <= row_sum_tol, f"Row sums off: {residuals}"
    np.testing.assert_allclose(np.diag(result.D), problem.c, atol=1e-12)


def naive_is_expander(mask: np.ndarray, alpha: float, delta: float) -> bool:
    """
    Independent expander check over explicit Python sets, largest subsets first.
    """
    n_left = mask.shape[0]
    neighbors = [set(np.flatnonzero(mask[i]).tolist()) for i in range(n_left)]
    largest = int(np.floor(alpha * n_left + 1e-9))
    for size in range(largest, 0, -1):
        for subset in itertools.combinations(reversed(range(n_left)), size):
            edges = sum(len(neighbors[i]) for i in subset)
            reached = set().union(*(neighbors[i] for i in subset))
            if delta * edges > len(reached) + 1e-12:
                return False
    return True
