"""
Network sensing: recover the relative trust matrices ``(B', D')`` from steady-state
data ``(Y_hat, Z)``.

Both problem modes are solved by the same projected/proximal gradient scheme on

    f(B, D) = ||(I - D) Y_hat Z^+ - B||_F^2 + gamma ||B 1 + D 1 - 1||^2

with an optional one-sided l1 weight ``lam`` on the off-diagonal of ``D``, accelerated
with FISTA momentum. The objective separates over the rows of ``(B, D)``, which is
what :func:`solve_rowwise` exploits. :func:`brute_force_l0` is an exhaustive desk-scale
oracle for the sparsest consistent solution.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.optimize
from joblib import Parallel, delayed
from numpy.typing import ArrayLike

from social_radar.dynamics import SteadyStateData
from social_radar.exceptions import (
    DimensionMismatchError,
    DivergenceError,
    InfeasibleProblemError,
    InstanceTooLargeError,
    InvalidParameterError,
    RankDeficientError,
)
from social_radar.identify import stacked_data_matrix
from social_radar.linalg import numerical_rank, offdiag

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 1e-3
DEFAULT_MAX_ITERS = 40_000
DEFAULT_TOL = 1e-10
DEFAULT_EPSILON = 1e-9
LIPSCHITZ_MARGIN = 1.1
DIVERGENCE_FACTOR = 1e6
BRUTE_FORCE_MAX_ORD = 12
BRUTE_FORCE_MAX_CANDIDATES = 20


class RecoveryMode(str, Enum):
    FULL_SUPPORT = "full"
    SPARSE = "sparse"


def full_offdiagonal_mask(n_ord: int) -> np.ndarray:
    mask = np.ones((n_ord, n_ord), dtype=bool)
    np.fill_diagonal(mask, False)
    return mask


def mask_from_pairs(pairs: Iterable[Tuple[int, int]], shape: Tuple[int, int]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for i, j in pairs:
        mask[i, j] = True
    return mask


@dataclass(frozen=True, eq=False)
class RecoveryProblem:
    """
    Data and structural constraints of one recovery. ``support_D`` is the allowed
    off-diagonal support ``S`` of ``D`` (diagonal excluded, it is pinned to ``c``) and
    ``support_B`` the allowed support of ``B``. ``epsilon`` is the residual tolerance
    used by the l0 oracle.
    """

    Y_hat: np.ndarray
    Z: np.ndarray
    support_D: np.ndarray
    support_B: np.ndarray
    c: np.ndarray
    mode: RecoveryMode = RecoveryMode.SPARSE
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        Y_hat = np.atleast_2d(np.asarray(self.Y_hat, dtype=float))
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        n_ord, n_s = Y_hat.shape[0], Z.shape[0]
        support_D = np.asarray(self.support_D, dtype=bool)
        support_B = np.asarray(self.support_B, dtype=bool)
        c = np.array(np.broadcast_to(np.asarray(self.c, dtype=float), (n_ord,)))
        if Y_hat.shape[1] != Z.shape[1]:
            raise DimensionMismatchError(
                f"Y_hat has {Y_hat.shape[1]} discussions, Z has {Z.shape[1]}"
            )
        if support_D.shape != (n_ord, n_ord) or support_B.shape != (n_ord, n_s):
            raise DimensionMismatchError(
                f"Support masks must be {(n_ord, n_ord)} and {(n_ord, n_s)}, got"
                f" {support_D.shape} and {support_B.shape}"
            )
        if np.diag(support_D).any():
            raise InvalidParameterError("Diagonal entries cannot be part of the support S")
        if ((c < 0) | (c >= 1)).any():
            raise InvalidParameterError("Diagonal target c must lie in [0, 1)")
        empty = np.flatnonzero(~support_B.any(axis=1))
        if empty.size:
            raise InfeasibleProblemError(
                f"Rows {empty.tolist()} have no allowed stubborn trust in support_B"
            )
        if self.epsilon < 0:
            raise InvalidParameterError("epsilon must be >= 0")
        object.__setattr__(self, "Y_hat", Y_hat)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "support_D", support_D)
        object.__setattr__(self, "support_B", support_B)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "mode", RecoveryMode(self.mode))

    @property
    def n_ord(self) -> int:
        return self.Y_hat.shape[0]

    @property
    def n_s(self) -> int:
        return self.Z.shape[0]

    @property
    def K(self) -> int:
        return self.Z.shape[1]

    @classmethod
    def from_dataset(
        cls,
        data: SteadyStateData,
        support_D: Optional[ArrayLike] = None,
        support_B: Optional[ArrayLike] = None,
        c: Union[float, ArrayLike] = 0.0,
        mode: Union[RecoveryMode, str] = RecoveryMode.SPARSE,
        epsilon: float = DEFAULT_EPSILON,
    ) -> "RecoveryProblem":
        """Missing supports default to "anything off the diagonal" and "any stubborn"."""
        if support_D is None:
            support_D = full_offdiagonal_mask(data.n_ord)
        if support_B is None:
            support_B = np.ones((data.n_ord, data.n_s), dtype=bool)
        return cls(
            Y_hat=data.Y_hat,
            Z=data.Z,
            support_D=np.asarray(support_D, dtype=bool),
            support_B=np.asarray(support_B, dtype=bool),
            c=np.asarray(c, dtype=float),
            mode=RecoveryMode(mode),
            epsilon=epsilon,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "Y_hat": self.Y_hat.tolist(),
            "Z": self.Z.tolist(),
            "support_D": np.argwhere(self.support_D).tolist(),
            "support_B": np.argwhere(self.support_B).tolist(),
            "c": self.c.tolist(),
            "mode": self.mode.value,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "RecoveryProblem":
        Y_hat = np.atleast_2d(np.asarray(payload["Y_hat"], dtype=float))
        Z = np.atleast_2d(np.asarray(payload["Z"], dtype=float))
        n_ord, n_s = Y_hat.shape[0], Z.shape[0]
        return cls(
            Y_hat=Y_hat,
            Z=Z,
            support_D=mask_from_pairs(payload["support_D"], (n_ord, n_ord)),
            support_B=mask_from_pairs(payload["support_B"], (n_ord, n_s)),
            c=np.asarray(payload.get("c", 0.0), dtype=float),
            mode=RecoveryMode(payload.get("mode", "sparse")),
            epsilon=float(payload.get("epsilon", DEFAULT_EPSILON)),
        )


@dataclass(frozen=True)
class SolverConfig:
    """
    ``lam`` defaults to ``n * 1e-12 * ||Y_hat Z^+||_F`` with ``n = n_s + n_ord``.
    ``step`` is a fixed step size, ``None`` for ``0.9 / L`` with ``L`` from
    :func:`estimate_lipschitz`, or ``"backtracking"``.
    """

    lam: Optional[float] = None
    gamma: float = DEFAULT_GAMMA
    step: Union[float, str, None] = None
    max_iters: int = DEFAULT_MAX_ITERS
    tol: float = DEFAULT_TOL
    restart: bool = True
    rescale_rows: bool = False
    lipschitz_iters: int = 100

    def __post_init__(self):
        if self.lam is not None and self.lam < 0:
            raise InvalidParameterError(f"lam must be >= 0, got {self.lam}")
        if self.gamma <= 0:
            raise InvalidParameterError(f"gamma must be > 0, got {self.gamma}")
        if isinstance(self.step, str):
            if self.step != "backtracking":
                raise InvalidParameterError(f"Unknown step rule {self.step!r}")
        elif self.step is not None and self.step <= 0:
            raise InvalidParameterError(f"step must be > 0, got {self.step}")
        if self.max_iters < 0:
            raise InvalidParameterError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.tol < 0:
            raise InvalidParameterError(f"tol must be >= 0, got {self.tol}")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "SolverConfig":
        unknown = set(payload) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParameterError(f"Unknown solver options: {sorted(unknown)}")
        return cls(**payload)


@dataclass(frozen=True)
class FeasibilityResiduals:
    nonnegativity: float
    support: float
    diagonal: float
    row_sum: float

    def max(self) -> float:
        return max(self.nonnegativity, self.support, self.diagonal, self.row_sum)


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    B: np.ndarray
    D: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    residuals: FeasibilityResiduals
    converged: bool
    lipschitz: Optional[float] = None

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1]) if self.objective_trace.size else math.nan

    def to_dict(self) -> Dict[str, Any]:
        return {
            "B": self.B.tolist(),
            "D": self.D.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "objective": self.objective,
            "lipschitz": self.lipschitz,
            "residuals": {
                "nonnegativity": self.residuals.nonnegativity,
                "support": self.residuals.support,
                "diagonal": self.residuals.diagonal,
                "row_sum": self.residuals.row_sum,
            },
        }


# Building blocks ----------------------------------------------------------------------


def pseudo_inverse_right(Z: ArrayLike) -> np.ndarray:
    """
    Right pseudo-inverse ``Z^+`` with ``Z Z^+ = I`` from a QR factorization of ``Z^T``.

    Raises
    ------
    RankDeficientError
        If ``Z`` does not have full row rank.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n_s = Z.shape[0]
    rank = numerical_rank(Z)
    if rank < n_s:
        raise RankDeficientError(
            rank,
            n_s,
            f"Z must have full row rank {n_s} for a right pseudo-inverse, but its"
            f" numerical rank is {rank}",
        )
    Q, R = scipy.linalg.qr(Z.T, mode="economic")
    return scipy.linalg.solve_triangular(R, Q.T).T


def _residuals(
    B: np.ndarray, D: np.ndarray, M: np.ndarray, M_rows: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    fit = M_rows - D @ M - B
    stochastic = B.sum(axis=1) + D.sum(axis=1) - 1.0
    return fit, stochastic


def _smooth_value(
    B: np.ndarray, D: np.ndarray, M: np.ndarray, M_rows: np.ndarray, gamma: float
) -> float:
    fit, stochastic = _residuals(B, D, M, M_rows)
    return float(np.sum(fit**2) + gamma * np.sum(stochastic**2))


def _smooth_gradient(
    B: np.ndarray, D: np.ndarray, M: np.ndarray, M_rows: np.ndarray, gamma: float
) -> Tuple[np.ndarray, np.ndarray]:
    fit, stochastic = _residuals(B, D, M, M_rows)
    penalty = 2.0 * gamma * stochastic[:, None]
    return -2.0 * fit + penalty, -2.0 * fit @ M.T + penalty


def objective_f(
    B: ArrayLike, D: ArrayLike, Y_hat: ArrayLike, Z_pinv: ArrayLike, gamma: float
) -> float:
    """``||(I - D) Y_hat Z^+ - B||_F^2 + gamma ||B 1 + D 1 - 1||^2``."""
    M = np.asarray(Y_hat, dtype=float) @ np.asarray(Z_pinv, dtype=float)
    return _smooth_value(np.asarray(B, float), np.asarray(D, float), M, M, gamma)


def grad_f(
    B: ArrayLike, D: ArrayLike, Y_hat: ArrayLike, Z_pinv: ArrayLike, gamma: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Analytic gradient of :func:`objective_f`. With ``M = Y_hat Z^+``,
    ``R = (I - D) M - B`` and ``r = B 1 + D 1 - 1``:
    ``grad_B = -2 R + 2 gamma r 1^T`` and ``grad_D = -2 R M^T + 2 gamma r 1^T``.
    """
    M = np.asarray(Y_hat, dtype=float) @ np.asarray(Z_pinv, dtype=float)
    return _smooth_gradient(np.asarray(B, float), np.asarray(D, float), M, M, gamma)


def soft_threshold_one_sided(
    x: Union[float, ArrayLike], tau: float
) -> Union[float, np.ndarray]:
    """``u(x) max(0, x - tau)``, which is ``max(0, x - tau)`` for ``tau >= 0``."""
    if tau < 0:
        raise InvalidParameterError(f"Threshold must be >= 0, got {tau}")
    result = np.maximum(0.0, np.asarray(x, dtype=float) - tau)
    return float(result) if result.ndim == 0 else result


def _project_rows(
    B_tilde: np.ndarray,
    D_tilde: np.ndarray,
    tau: float,
    mask_B: np.ndarray,
    mask_D: np.ndarray,
    D_fixed: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    B = np.where(mask_B, np.maximum(0.0, B_tilde), 0.0)
    D = np.where(mask_D, np.maximum(0.0, D_tilde - tau), 0.0) + D_fixed
    return B, D


def prox_project(
    B_tilde: ArrayLike, D_tilde: ArrayLike, tau: float, problem: RecoveryProblem
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Proximal step onto the feasible set: ``B`` is clipped at zero and masked to its
    support, the off-diagonal of ``D`` is one-sided soft-thresholded by ``tau`` and
    masked to ``S``, and ``diag(D) = c``.
    """
    if tau < 0:
        raise InvalidParameterError(f"Threshold must be >= 0, got {tau}")
    return _project_rows(
        np.asarray(B_tilde, dtype=float),
        np.asarray(D_tilde, dtype=float),
        tau,
        problem.support_B,
        problem.support_D,
        np.diag(problem.c),
    )


def _hessian_apply(vector: np.ndarray, M: np.ndarray, gamma: float) -> np.ndarray:
    # Row subproblem in (d, b): the fit is M^T d + b, the penalty is (1^T d + 1^T b)^2.
    n_ord = M.shape[0]
    d, b = vector[:n_ord], vector[n_ord:]
    fitted = M.T @ d + b
    penalty = 2.0 * gamma * vector.sum()
    return np.concatenate([2.0 * M @ fitted, 2.0 * fitted]) + penalty


def estimate_lipschitz(
    Y_hat: ArrayLike,
    Z_pinv: ArrayLike,
    gamma: float,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> float:
    """
    Lipschitz constant of ``grad f`` by power iteration on the Hessian, with a 10%
    safety margin. Every row of ``(B, D)`` has the same Hessian, so the iteration runs
    on a single ``(n_ord + n_s)`` vector.
    """
    M = np.asarray(Y_hat, dtype=float) @ np.asarray(Z_pinv, dtype=float)
    size = M.shape[0] + M.shape[1]
    vector = 1.0 + np.random.default_rng(0).random(size)
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for _ in range(max_iter):
        image = _hessian_apply(vector, M, gamma)
        rayleigh = float(vector @ image)
        norm = np.linalg.norm(image)
        if norm == 0.0:
            break
        vector = image / norm
        if abs(rayleigh - estimate) <= tol * max(abs(rayleigh), 1.0):
            estimate = rayleigh
            break
        estimate = rayleigh
    return LIPSCHITZ_MARGIN * max(estimate, np.finfo(float).tiny)


def default_lambda(problem: RecoveryProblem, M: np.ndarray) -> float:
    return (problem.n_s + problem.n_ord) * 1e-12 * float(np.linalg.norm(M))


def feasibility_residuals(
    B: np.ndarray, D: np.ndarray, problem: RecoveryProblem
) -> FeasibilityResiduals:
    outside_B = np.where(problem.support_B, 0.0, np.abs(B))
    outside_D = np.where(problem.support_D, 0.0, np.abs(offdiag(D)))
    negative = min(float(B.min(initial=0.0)), float(D.min(initial=0.0)))
    return FeasibilityResiduals(
        nonnegativity=max(0.0, -negative),
        support=float(max(outside_B.max(initial=0.0), outside_D.max(initial=0.0))),
        diagonal=float(np.max(np.abs(np.diag(D) - problem.c), initial=0.0)),
        row_sum=float(
            np.max(np.abs(B.sum(axis=1) + D.sum(axis=1) - 1.0), initial=0.0)
        ),
    )


def _rescale_rows(
    B: np.ndarray, D: np.ndarray, c: np.ndarray, rows: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Scale each row's non-self trust so that the row sums to exactly one."""
    D_off = D.copy()
    D_off[np.arange(rows.size), rows] = 0.0
    mass = B.sum(axis=1) + D_off.sum(axis=1)
    scale = np.divide(1.0 - c, mass, out=np.ones_like(mass), where=mass > 0)
    D_scaled = scale[:, None] * D_off
    D_scaled[np.arange(rows.size), rows] = c
    return scale[:, None] * B, D_scaled


# Solvers ------------------------------------------------------------------------------


@dataclass
class _BlockOutcome:
    B: np.ndarray
    D: np.ndarray
    trace: np.ndarray
    iterations: int
    converged: bool


def _initial_point(
    mask_B: np.ndarray, D_fixed: np.ndarray, c: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    allowed = mask_B.sum(axis=1, keepdims=True)
    B0 = np.where(mask_B, (1.0 - c)[:, None] / np.maximum(allowed, 1), 0.0)
    return B0, D_fixed.copy()


def _solve_block(
    problem: RecoveryProblem,
    M: np.ndarray,
    rows: np.ndarray,
    config: SolverConfig,
    lipschitz: float,
    lam: float,
) -> _BlockOutcome:
    M_rows = M[rows]
    mask_B = problem.support_B[rows]
    mask_D = problem.support_D[rows]
    c = problem.c[rows]
    D_fixed = np.zeros((rows.size, problem.n_ord))
    D_fixed[np.arange(rows.size), rows] = c
    gamma = config.gamma

    def total(B: np.ndarray, D: np.ndarray) -> float:
        return _smooth_value(B, D, M, M_rows, gamma) + lam * float(
            np.sum(np.where(mask_D, D, 0.0))
        )

    backtracking = config.step == "backtracking"
    if backtracking:
        local_L = lipschitz / 8.0
    else:
        step = config.step if config.step is not None else 0.9 / lipschitz
        local_L = 1.0 / float(step)

    B, D = _project_rows(*_initial_point(mask_B, D_fixed, c), 0.0, mask_B, mask_D, D_fixed)
    B_y, D_y = B, D
    momentum = 1.0
    current = total(B, D)
    ceiling = DIVERGENCE_FACTOR * max(current, np.finfo(float).tiny)
    trace = [current]
    converged = config.max_iters == 0
    restarted = False
    iterations = 0

    for iterations in range(1, config.max_iters + 1):
        grad_B, grad_D = _smooth_gradient(B_y, D_y, M, M_rows, gamma)
        while True:
            B_new, D_new = _project_rows(
                B_y - grad_B / local_L,
                D_y - grad_D / local_L,
                lam / local_L,
                mask_B,
                mask_D,
                D_fixed,
            )
            if not backtracking:
                break
            delta_B, delta_D = B_new - B_y, D_new - D_y
            upper = (
                _smooth_value(B_y, D_y, M, M_rows, gamma)
                + float(np.sum(grad_B * delta_B) + np.sum(grad_D * delta_D))
                + 0.5 * local_L * float(np.sum(delta_B**2) + np.sum(delta_D**2))
            )
            if _smooth_value(B_new, D_new, M, M_rows, gamma) <= upper * (1 + 1e-12):
                break
            local_L *= 2.0

        candidate = total(B_new, D_new)
        if not math.isfinite(candidate) or candidate > ceiling:
            raise DivergenceError(
                f"Objective grew to {candidate:.3e} at iteration {iterations}; use a"
                " smaller step size"
            )
        if config.restart and candidate > current and not restarted:
            logger.debug("Momentum restart at iteration %d", iterations)
            B_y, D_y = B, D
            momentum = 1.0
            restarted = True
            trace.append(current)
            continue
        restarted = False

        next_momentum = (1.0 + math.sqrt(1.0 + 4.0 * momentum**2)) / 2.0
        weight = (momentum - 1.0) / next_momentum
        B_y = B_new + weight * (B_new - B)
        D_y = D_new + weight * (D_new - D)
        D_y[np.arange(rows.size), rows] = c
        B, D = B_new, D_new
        momentum = next_momentum
        trace.append(candidate)

        change = abs(current - candidate)
        current = candidate
        if candidate <= 1e-30 or change <= config.tol * max(abs(current), 1e-300):
            converged = True
            break

    D[np.arange(rows.size), rows] = c
    if config.rescale_rows:
        B, D = _rescale_rows(B, D, c, rows)
    return _BlockOutcome(
        B=B, D=D, trace=np.asarray(trace), iterations=iterations, converged=converged
    )


def _prepare(
    problem: RecoveryProblem, config: SolverConfig
) -> Tuple[np.ndarray, float, float]:
    Z_pinv = pseudo_inverse_right(problem.Z)
    M = problem.Y_hat @ Z_pinv
    lipschitz = estimate_lipschitz(
        problem.Y_hat, Z_pinv, config.gamma, max_iter=config.lipschitz_iters
    )
    if isinstance(config.step, (int, float)) and config.step * lipschitz > LIPSCHITZ_MARGIN:
        logger.warning(
            "Fixed step %.3e exceeds 1/L (L ~ %.3e); the iteration may diverge",
            config.step,
            lipschitz,
        )
    lam = config.lam if config.lam is not None else default_lambda(problem, M)
    return M, lipschitz, lam


def _assemble(
    problem: RecoveryProblem,
    blocks: Sequence[Tuple[np.ndarray, _BlockOutcome]],
    lipschitz: float,
) -> RecoveryResult:
    B = np.zeros((problem.n_ord, problem.n_s))
    D = np.zeros((problem.n_ord, problem.n_ord))
    for rows, outcome in blocks:
        B[rows] = outcome.B
        D[rows] = outcome.D
    if len(blocks) == 1:
        trace = blocks[0][1].trace
    else:
        # Objectives of disjoint row blocks add up; pad shorter traces with their tail.
        length = max(outcome.trace.size for _, outcome in blocks)
        trace = np.sum(
            [np.pad(o.trace, (0, length - o.trace.size), mode="edge") for _, o in blocks],
            axis=0,
        )
    converged = all(outcome.converged for _, outcome in blocks)
    iterations = max(outcome.iterations for _, outcome in blocks)
    if not converged:
        logger.warning("Solver stopped at max_iters=%d before converging", iterations)
    return RecoveryResult(
        B=B,
        D=D,
        objective_trace=trace,
        iterations=iterations,
        residuals=feasibility_residuals(B, D, problem),
        converged=converged,
        lipschitz=lipschitz,
    )


def fista_solve(
    problem: RecoveryProblem, config: Optional[SolverConfig] = None
) -> RecoveryResult:
    """
    FISTA on the penalized problem. Each iteration takes a gradient step from the
    extrapolated point, applies :func:`prox_project` and updates the momentum
    ``t <- (1 + sqrt(1 + 4 t^2)) / 2``. With ``restart`` set, an objective increase
    resets the momentum. Stops at ``max_iters`` or when the relative objective change
    falls below ``tol``.

    Raises
    ------
    DivergenceError
        If the objective exceeds ``1e6`` times its initial value.
    """
    config = config or SolverConfig()
    M, lipschitz, lam = _prepare(problem, config)
    rows = np.arange(problem.n_ord)
    outcome = _solve_block(problem, M, rows, config, lipschitz, lam)
    return _assemble(problem, [(rows, outcome)], lipschitz)


def solve_rowwise(
    problem: RecoveryProblem,
    config: Optional[SolverConfig] = None,
    n_jobs: int = 1,
    block_size: int = 1,
) -> RecoveryResult:
    """
    Same problem as :func:`fista_solve`, but with the rows of ``(B, D)`` split into
    independent blocks solved in a joblib pool. Momentum restarts and stopping are
    decided per block.
    """
    config = config or SolverConfig()
    if block_size < 1:
        raise InvalidParameterError(f"block_size must be >= 1, got {block_size}")
    M, lipschitz, lam = _prepare(problem, config)
    row_blocks = [
        np.arange(start, min(start + block_size, problem.n_ord))
        for start in range(0, problem.n_ord, block_size)
    ]
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_solve_block)(problem, M, rows, config, lipschitz, lam)
        for rows in row_blocks
    )
    return _assemble(problem, list(zip(row_blocks, outcomes)), lipschitz)


def solve_ls_full_support(
    problem: RecoveryProblem, config: Optional[SolverConfig] = None
) -> RecoveryResult:
    """
    Constrained least squares when (nearly) the full support is known: FISTA with
    ``lam = 0``, the row-sum equality enforced by the ``gamma`` penalty, and a final
    row rescaling that makes every row sum to exactly one.
    """
    if problem.mode is not RecoveryMode.FULL_SUPPORT:
        raise InvalidParameterError(
            f"solve_ls_full_support needs a full-support problem, got {problem.mode.value!r}"
        )
    config = replace(config or SolverConfig(), lam=0.0, rescale_rows=True)
    return fista_solve(problem, config)


def recover(
    problem: RecoveryProblem, config: Optional[SolverConfig] = None
) -> RecoveryResult:
    if problem.mode is RecoveryMode.FULL_SUPPORT:
        return solve_ls_full_support(problem, config)
    return fista_solve(problem, config)


def _fit_row(
    columns: np.ndarray, target: np.ndarray, total: float
) -> Tuple[np.ndarray, float]:
    """Nonnegative least squares with the row-sum equality appended as a heavy row."""
    weight = 1e3 * max(1.0, float(np.abs(columns).max(initial=0.0)))
    system = np.vstack([columns, weight * np.ones((1, columns.shape[1]))])
    rhs = np.concatenate([target, [weight * total]])
    solution, _ = scipy.optimize.nnls(system, rhs)
    residual = float(np.sum((columns @ solution - target) ** 2))
    return solution, residual


def brute_force_l0(
    problem: RecoveryProblem,
    k_max: Optional[int] = None,
    epsilon: Optional[float] = None,
) -> RecoveryResult:
    """
    Exhaustive l0 oracle. For each ordinary agent, try every support of size
    ``0..k_max`` inside its allowed set ``S_i`` and keep the sparsest one whose data
    residual ``||(1 - c_i) y_i - Y_hat^T d_i - Z^T b_i||^2`` is at most ``epsilon``.

    Raises
    ------
    InstanceTooLargeError
        If ``n_ord > 12`` or some row allows more than 20 candidate neighbors.
    """
    if problem.n_ord > BRUTE_FORCE_MAX_ORD:
        raise InstanceTooLargeError(
            f"Brute force is limited to {BRUTE_FORCE_MAX_ORD} ordinary agents, got"
            f" {problem.n_ord}"
        )
    widest = int(problem.support_D.sum(axis=1).max(initial=0))
    if widest > BRUTE_FORCE_MAX_CANDIDATES:
        raise InstanceTooLargeError(
            f"Brute force is limited to {BRUTE_FORCE_MAX_CANDIDATES} candidates per row,"
            f" got {widest}"
        )
    epsilon = problem.epsilon if epsilon is None else epsilon
    A_tilde = stacked_data_matrix(problem.Y_hat, problem.Z)
    n_ord = problem.n_ord
    B = np.zeros((n_ord, problem.n_s))
    D = np.diag(problem.c)
    evaluated = 0
    all_feasible = True

    for i in range(n_ord):
        candidates = np.flatnonzero(problem.support_D[i])
        stubborn_columns = n_ord + np.flatnonzero(problem.support_B[i])
        limit = candidates.size if k_max is None else min(k_max, candidates.size)
        target = (1.0 - problem.c[i]) * A_tilde[:, i]
        best: Optional[Tuple[float, Tuple[int, ...], np.ndarray]] = None
        for size in range(limit + 1):
            for chosen in itertools.combinations(candidates.tolist(), size):
                columns = np.concatenate([np.asarray(chosen, dtype=int), stubborn_columns])
                solution, residual = _fit_row(
                    A_tilde[:, columns], target, 1.0 - problem.c[i]
                )
                evaluated += 1
                if best is None or residual < best[0]:
                    best = (residual, chosen, solution)
            if best is not None and best[0] <= epsilon:
                break
        assert best is not None
        residual, chosen, solution = best
        if residual > epsilon:
            all_feasible = False
            logger.warning(
                "Row %d: no support with at most %d neighbors reaches residual %.3e"
                " (best %.3e)",
                i,
                limit,
                epsilon,
                residual,
            )
        D[i, list(chosen)] = solution[: len(chosen)]
        B[i, stubborn_columns - n_ord] = solution[len(chosen) :]

    return RecoveryResult(
        B=B,
        D=D,
        objective_trace=np.asarray([]),
        iterations=evaluated,
        residuals=feasibility_residuals(B, D, problem),
        converged=all_feasible,
    )
