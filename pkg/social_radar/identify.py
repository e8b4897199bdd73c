"""
Identifiability certificates for the recovery problem.

Everything here is a finite-instance check: rank and spark conditions on the stacked
data matrix, the closed-form sample-budget conditions for d-regular placements, and
exhaustive expander verification with Monte-Carlo RIP-1 corroboration. Checks return
verdicts and reports rather than raising on a failed condition; they raise only on
malformed input or instances too large to enumerate.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.optimize
import scipy.special
from numpy.typing import ArrayLike

from social_radar.exceptions import (
    DimensionMismatchError,
    InstanceTooLargeError,
    InvalidParameterError,
    NoSolutionError,
)
from social_radar.graph import BipartiteSupport, Seed
from social_radar.linalg import numerical_rank

logger = logging.getLogger(__name__)

SPARK_MAX_CANDIDATES = 20
SPARK_MAX_SPARSITY = 5
EXPANDER_MAX_LEFT = 20
EXACT_DELETION_LIMIT = 100_000
# b_min (2d - 3) - 1 - 2 b_max is evaluated in floating point; margins below this are
# treated as zero so that boundary cases such as (0.2, 0.2, 5) stay on the strict side.
VALUE_CONDITION_TOLERANCE = 1e-12


def stacked_data_matrix(Y_hat: ArrayLike, Z: ArrayLike) -> np.ndarray:
    """``[Y_hat^T  Z^T]``: ordinary columns ``0..n_ord-1`` then stubborn columns."""
    Y_hat = np.atleast_2d(np.asarray(Y_hat, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Y_hat.shape[1] != Z.shape[1]:
        raise DimensionMismatchError(
            f"Y_hat has {Y_hat.shape[1]} discussions, Z has {Z.shape[1]}"
        )
    return np.hstack([Y_hat.T, Z.T])


def _selected_columns(
    A_tilde: np.ndarray, S_i: Iterable[int], omega_B_i: Iterable[int], n_ord: int
) -> Tuple[np.ndarray, np.ndarray]:
    ordinary = np.asarray(sorted(set(S_i)), dtype=int)
    stubborn = n_ord + np.asarray(sorted(set(omega_B_i)), dtype=int)
    n_cols = A_tilde.shape[1]
    if ordinary.size and (ordinary.min() < 0 or ordinary.max() >= n_ord):
        raise InvalidParameterError(f"S_i indices must lie in [0, {n_ord})")
    if stubborn.size and (stubborn.min() < n_ord or stubborn.max() >= n_cols):
        raise InvalidParameterError(f"Omega_B_i indices must lie in [0, {n_cols - n_ord})")
    return ordinary, stubborn


def check_rank_full(
    A_tilde: ArrayLike, S_i: Iterable[int], omega_B_i: Iterable[int], n_ord: int
) -> bool:
    """
    Uniqueness with a known support: ``rank(A_tilde[:, S_i u Omega_B_i])`` must be at
    least ``|Omega_B_i| + |S_i| - 1``. ``S_i`` indexes ordinary agents and
    ``omega_B_i`` stubborn agents; ``n_ord`` locates the split between the two column
    blocks.

    The test runs on ``A_tilde`` alone and tolerates a one-dimensional null space: the
    row-sum equation is left out of the rank count and is what removes that last
    degree of freedom. Compare :func:`check_spark_partial`, which appends the row-sum
    equation and asks for full column rank instead.
    """
    A_tilde = np.atleast_2d(np.asarray(A_tilde, dtype=float))
    ordinary, stubborn = _selected_columns(A_tilde, S_i, omega_B_i, n_ord)
    columns = np.concatenate([ordinary, stubborn])
    if columns.size == 0:
        raise InvalidParameterError("Empty column selection")
    return numerical_rank(A_tilde[:, columns]) >= columns.size - 1


def check_rank_full_rows(
    A_tilde: ArrayLike, support_D: ArrayLike, support_B: ArrayLike
) -> np.ndarray:
    support_D = np.asarray(support_D, dtype=bool)
    support_B = np.asarray(support_B, dtype=bool)
    n_ord = support_D.shape[0]
    return np.array(
        [
            check_rank_full(
                A_tilde, np.flatnonzero(support_D[i]), np.flatnonzero(support_B[i]), n_ord
            )
            for i in range(n_ord)
        ],
        dtype=bool,
    )


def check_spark_partial(
    A_tilde: ArrayLike,
    S_i: Iterable[int],
    omega_B_i: Iterable[int],
    k_i: int,
    n_ord: int,
) -> bool:
    """
    Uniqueness of the sparsest row when only a superset ``S_i`` of the support is
    known and the row has ``k_i`` nonzeros off the diagonal.

    Every candidate subset of ``min(2 k_i, |S_i|)`` ordinary columns, together with the
    stubborn columns, has to be linearly independent once the row-sum equation
    (a row of ones) is appended. Full rank on those subsets implies full rank on every
    smaller subset, so the largest size is the only one enumerated.

    Two feasible ``k_i``-sparse rows differ by a vector supported on at most ``2 k_i``
    ordinary columns plus the stubborn columns, which ``A_tilde`` maps to zero and whose
    entries sum to zero. Full rank of the augmented matrix rules out exactly those
    vectors. The ``rank >= |cols| - 1`` count of :func:`check_rank_full` leaves room
    for one null vector, and over many enumerated subsets one whose entries sum to
    zero does turn up on degenerate data, so the count alone would pass rows that are
    not identifiable. On generic data the two forms agree.

    Raises
    ------
    InstanceTooLargeError
        If ``|S_i| > 20`` or ``k_i > 5``.
    """
    A_tilde = np.atleast_2d(np.asarray(A_tilde, dtype=float))
    if k_i < 0:
        raise InvalidParameterError(f"k_i must be >= 0, got {k_i}")
    ordinary, stubborn = _selected_columns(A_tilde, S_i, omega_B_i, n_ord)
    if ordinary.size > SPARK_MAX_CANDIDATES or k_i > SPARK_MAX_SPARSITY:
        raise InstanceTooLargeError(
            f"Spark enumeration is limited to |S_i| <= {SPARK_MAX_CANDIDATES} and"
            f" k_i <= {SPARK_MAX_SPARSITY}, got {ordinary.size} and {k_i}"
        )
    augmented = np.vstack([A_tilde, np.ones((1, A_tilde.shape[1]))])
    size = min(2 * k_i, ordinary.size)
    for subset in itertools.combinations(ordinary.tolist(), size):
        columns = np.concatenate([np.asarray(subset, dtype=int), stubborn])
        if columns.size == 0:
            continue
        if numerical_rank(augmented[:, columns]) < columns.size:
            logger.debug("Spark condition fails on ordinary columns %s", subset)
            return False
    return True


def check_spark_partial_rows(
    A_tilde: ArrayLike,
    support_D: ArrayLike,
    support_B: ArrayLike,
    sparsity: Sequence[int],
) -> np.ndarray:
    support_D = np.asarray(support_D, dtype=bool)
    support_B = np.asarray(support_B, dtype=bool)
    n_ord = support_D.shape[0]
    if len(sparsity) != n_ord:
        raise DimensionMismatchError(f"Expected {n_ord} row sparsities, got {len(sparsity)}")
    return np.array(
        [
            check_spark_partial(
                A_tilde,
                np.flatnonzero(support_D[i]),
                np.flatnonzero(support_B[i]),
                int(sparsity[i]),
                n_ord,
            )
            for i in range(n_ord)
        ],
        dtype=bool,
    )


# Sample-budget conditions for d-regular placements -------------------------------------


def binary_entropy(x: float) -> float:
    """Binary entropy in nats; 0 at the boundary points by continuity."""
    if not 0.0 <= x <= 1.0:
        raise InvalidParameterError(f"Binary entropy is defined on [0, 1], got {x}")
    return float(scipy.special.entr(x) + scipy.special.entr(1.0 - x))


def _budget_gap(beta_prime: float, alpha: float, d: int) -> float:
    ratio = (binary_entropy(alpha) + beta_prime * binary_entropy(alpha / beta_prime)) / (
        alpha * math.log(beta_prime / alpha)
    )
    return ratio - (d - 1)


def theorem1_min_beta(alpha: float, d: int, n_i: Optional[int] = None) -> float:
    """
    Smallest stubborn-to-ordinary ratio ``beta`` for which a ``d``-regular placement
    identifies rows whose sparsity fraction is at most ``alpha / 2``.

    Solves ``d - 1 = (H(alpha) + b H(alpha / b)) / (alpha log(b / alpha))`` for
    ``b > alpha``. That is the large-population value; with ``n_i`` given, the finite
    correction ``d / n_i`` is added.

    Raises
    ------
    NoSolutionError
        If the equation has no root in ``(alpha, 1]``.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if d <= 4:
        raise InvalidParameterError(f"The budget condition needs d > 4, got {d}")
    if n_i is not None and n_i < 1:
        raise InvalidParameterError(f"n_i must be >= 1, got {n_i}")

    upper_gap = _budget_gap(1.0, alpha, d)
    if upper_gap > 0:
        raise NoSolutionError(
            f"No beta in ({alpha}, 1] satisfies the budget condition for d={d}"
        )
    lower = alpha * (1.0 + 1e-9)
    if upper_gap == 0:
        beta = 1.0
    else:
        beta = scipy.optimize.brentq(_budget_gap, lower, 1.0, args=(alpha, d), xtol=1e-12)
    if n_i is not None:
        beta += d / n_i
    return float(beta)


def theorem1_value_margin(b_min: float, b_max: float, d: int) -> float:
    if not 0.0 < b_min <= b_max:
        raise InvalidParameterError(f"Need 0 < b_min <= b_max, got {b_min}, {b_max}")
    return b_min * (2 * d - 3) - 1.0 - 2.0 * b_max


def theorem1_value_condition(b_min: float, b_max: float, d: int) -> bool:
    return theorem1_value_margin(b_min, b_max, d) > VALUE_CONDITION_TOLERANCE


def theorem1_failure_bound(d: int, beta: float, n_i: int) -> float:
    """Leading term ``(d / beta)^4 (d - 1) / n_i^2`` of the failure probability bound."""
    if d < 4 or beta <= 0 or n_i < 1:
        raise InvalidParameterError(
            f"Need d >= 4, beta > 0 and n_i >= 1, got d={d}, beta={beta}, n_i={n_i}"
        )
    return (d / beta) ** 4 * (d - 1) / n_i**2


def failure_bound_exponent(d: int) -> int:
    """Exponent of ``n`` in the higher-order term of the failure bound."""
    return 2 - (d - 1) * (d - 3)


def asymptotic_budget(p: float) -> float:
    """Required ``n_s / (n - n_s)`` for rows with sparsity fraction ``p``."""
    if not 0.0 < p < 0.5:
        raise InvalidParameterError(f"p must lie in (0, 0.5), got {p}")
    return 2.0 * p


@dataclass(frozen=True)
class Theorem1Report:
    alpha: float
    d: int
    min_beta: float
    failure_exponent: int
    value_margin: Optional[float] = None
    value_condition: Optional[bool] = None
    n_i: Optional[int] = None
    required_n_s: Optional[int] = None
    failure_bound: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def theorem1_report(
    alpha: float,
    d: int,
    b_min: Optional[float] = None,
    b_max: Optional[float] = None,
    n_i: Optional[int] = None,
) -> Theorem1Report:
    min_beta = theorem1_min_beta(alpha, d)
    margin = condition = None
    if b_min is not None:
        margin = theorem1_value_margin(b_min, b_max if b_max is not None else b_min, d)
        condition = margin > VALUE_CONDITION_TOLERANCE
    required = bound = None
    if n_i is not None:
        required = math.ceil(theorem1_min_beta(alpha, d, n_i) * n_i)
        bound = theorem1_failure_bound(d, min_beta, n_i)
    return Theorem1Report(
        alpha=alpha,
        d=d,
        min_beta=min_beta,
        failure_exponent=failure_bound_exponent(d),
        value_margin=margin,
        value_condition=condition,
        n_i=n_i,
        required_n_s=required,
        failure_bound=bound,
    )


# Expanders and RIP-1 ------------------------------------------------------------------


@dataclass(frozen=True)
class ExpanderSpec:
    """
    Expansion parameters of a nonnegative sensing matrix whose columns are the left
    vertices: every left subset of at most ``alpha`` of the columns reaches at least
    ``delta`` times its edge count of distinct rows. ``d_l``/``d_u`` bound the column
    degrees and ``a_min``/``a_max`` the nonzero entries.
    """

    alpha: float
    delta: float
    d_l: int
    d_u: int
    a_min: float
    a_max: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0 or not 0.0 < self.delta <= 1.0:
            raise InvalidParameterError("alpha and delta must lie in (0, 1]")
        if not 0 <= self.d_l <= self.d_u:
            raise InvalidParameterError(f"Need d_l <= d_u, got {self.d_l}, {self.d_u}")
        if not 0.0 < self.a_min <= self.a_max:
            raise InvalidParameterError(
                f"Need 0 < a_min <= a_max, got {self.a_min}, {self.a_max}"
            )

    @property
    def lower_constant(self) -> float:
        return self.a_min * self.delta * self.d_l - self.a_max * (
            self.d_u - self.delta * self.d_l
        )

    @property
    def upper_constant(self) -> float:
        return self.d_u * self.a_max

    @classmethod
    def from_matrix(cls, A: ArrayLike, alpha: float, delta: float) -> "ExpanderSpec":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if (A < 0).any():
            raise InvalidParameterError("Sensing matrix must be nonnegative")
        nonzero = A[A > 0]
        if nonzero.size == 0:
            raise InvalidParameterError("Sensing matrix has no nonzero entries")
        degrees = (A > 0).sum(axis=0)
        return cls(
            alpha=alpha,
            delta=delta,
            d_l=int(degrees.min()),
            d_u=int(degrees.max()),
            a_min=float(nonzero.min()),
            a_max=float(nonzero.max()),
        )


@dataclass(frozen=True)
class ExpanderVerdict:
    holds: bool
    witness: Optional[Tuple[int, ...]] = None
    edges: Optional[int] = None
    neighbors: Optional[int] = None

    def __bool__(self) -> bool:
        return self.holds


def _max_subset_size(alpha: float, n_left: int) -> int:
    return int(math.floor(alpha * n_left + 1e-9))


def is_expander(support: BipartiteSupport, alpha: float, delta: float) -> ExpanderVerdict:
    """
    Exhaustively check that every set ``S`` of at most ``alpha * n_ord`` ordinary agents
    satisfies ``delta |E(S)| <= |N(S)|`` in the stubborn-to-ordinary graph. Returns the
    first violating set as the witness.
    """
    if not 0.0 < alpha <= 1.0 or not 0.0 < delta <= 1.0:
        raise InvalidParameterError("alpha and delta must lie in (0, 1]")
    if support.n_ord > EXPANDER_MAX_LEFT:
        raise InstanceTooLargeError(
            f"Expander verification is limited to {EXPANDER_MAX_LEFT} left vertices,"
            f" got {support.n_ord}"
        )
    mask = support.mask()
    degrees = mask.sum(axis=1).tolist()
    neighborhoods = [
        sum(1 << int(j) for j in np.flatnonzero(mask[i])) for i in range(support.n_ord)
    ]
    for size in range(1, _max_subset_size(alpha, support.n_ord) + 1):
        for subset in itertools.combinations(range(support.n_ord), size):
            edges = sum(degrees[i] for i in subset)
            reached = 0
            for i in subset:
                reached |= neighborhoods[i]
            neighbors = bin(reached).count("1")
            if delta * edges > neighbors + 1e-12:
                return ExpanderVerdict(
                    holds=False, witness=subset, edges=edges, neighbors=neighbors
                )
    return ExpanderVerdict(holds=True)


@dataclass(frozen=True)
class Rip1Report:
    trials: int
    k: int
    lower_constant: float
    upper_constant: float
    lower_violations: int
    upper_violations: int
    worst_lower_ratio: float
    worst_upper_ratio: float
    inverse_constant: Optional[float] = None
    inverse_violations: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.lower_violations == 0 and self.upper_violations == 0

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), "passed": self.passed}


def rip1_check(
    A: ArrayLike,
    spec: ExpanderSpec,
    trials: int = 1000,
    seed: Seed = None,
    k: Optional[int] = None,
    D_prime: Optional[ArrayLike] = None,
    certify: bool = True,
) -> Rip1Report:
    """
    Monte-Carlo corroboration of the l1 restricted isometry of an expander-supported
    matrix: for random ``k``-sparse signed ``x``,
    ``lower ||x||_1 <= ||A x||_1 <= d_u a_max ||x||_1``.

    With ``D_prime`` the bound ``margin ||x||_1 <= ||A (I - D')^{-T} x||_1`` is evaluated
    as well and only reported. ``certify`` runs :func:`is_expander` on the support of
    ``A`` first and refuses uncertified matrices.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n_left = A.shape[1]
    if trials < 0:
        raise InvalidParameterError(f"trials must be >= 0, got {trials}")
    if certify:
        support = BipartiteSupport.from_mask(A.T > 0)
        verdict = is_expander(support, spec.alpha, spec.delta)
        if not verdict:
            raise InvalidParameterError(
                f"Support is not an ({spec.alpha}, {spec.delta}) expander; violating"
                f" columns {verdict.witness}"
            )
    k = k if k is not None else max(1, _max_subset_size(spec.alpha, n_left))
    if not 0 <= k <= n_left:
        raise InvalidParameterError(f"k must lie in [0, {n_left}], got {k}")

    inverse = margin = None
    if D_prime is not None:
        D_prime = np.atleast_2d(np.asarray(D_prime, dtype=float))
        inverse = A @ np.linalg.inv(np.eye(n_left) - D_prime).T
        margin = corollary1_margin(spec.a_min, spec.a_max, spec.d_l, spec.d_u, spec.delta)

    rng = np.random.default_rng(seed)
    lower_violations = upper_violations = 0
    inverse_violations = 0
    worst_lower, worst_upper = math.inf, 0.0
    for _ in range(trials):
        x = np.zeros(n_left)
        chosen = rng.choice(n_left, size=k, replace=False)
        x[chosen] = rng.standard_normal(k)
        size = np.abs(x).sum()
        if size == 0:
            continue
        image = np.abs(A @ x).sum()
        ratio = image / size
        worst_lower = min(worst_lower, ratio)
        worst_upper = max(worst_upper, ratio)
        if ratio < spec.lower_constant - 1e-12:
            lower_violations += 1
        if ratio > spec.upper_constant + 1e-12:
            upper_violations += 1
        if inverse is not None and np.abs(inverse @ x).sum() < margin * size - 1e-12:
            inverse_violations += 1

    if lower_violations or upper_violations:
        logger.info(
            "RIP-1 bounds violated: %d lower, %d upper out of %d trials",
            lower_violations,
            upper_violations,
            trials,
        )
    return Rip1Report(
        trials=trials,
        k=k,
        lower_constant=spec.lower_constant,
        upper_constant=spec.upper_constant,
        lower_violations=lower_violations,
        upper_violations=upper_violations,
        worst_lower_ratio=worst_lower if math.isfinite(worst_lower) else 0.0,
        worst_upper_ratio=worst_upper,
        inverse_constant=margin,
        inverse_violations=inverse_violations if inverse is not None else None,
    )


def corollary1_margin(
    b_min: float, b_max: float, d_l: int, d_u: int, delta: float
) -> float:
    """
    Uniqueness margin ``b_min delta d_l - b_max (d_u - delta d_l) - (1 - d_l b_min)``;
    a positive value means the sparse solution is unique.
    """
    if min(b_min, b_max, d_l, d_u, delta) <= 0:
        raise InvalidParameterError("All inputs must be positive")
    return b_min * delta * d_l - b_max * (d_u - delta * d_l) - (1.0 - d_l * b_min)


@dataclass(frozen=True)
class RowDeletionReport:
    d: int
    trials: int
    frequency: float
    analytic_bound: float
    exact_frequency: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _keeps_degree(mask: np.ndarray, deleted: Sequence[int]) -> bool:
    return bool(np.all(mask[:, list(deleted)].sum(axis=1) <= 1))


def row_deletion_degree_check(
    support: BipartiteSupport, trials: int = 1000, seed: Seed = None
) -> RowDeletionReport:
    """
    Delete ``d`` stubborn agents uniformly at random and record how often every
    ordinary agent keeps degree ``d - 1`` or ``d``. The analytic bound
    ``1 - n^2 (d - 1) (d / (beta n))^4`` (clipped to ``[0, 1]``) is returned for
    context; when there are at most 10^5 deletion sets the exact frequency is
    enumerated too.
    """
    if not support.is_d_regular():
        raise InvalidParameterError("Row deletion check needs a d-regular support")
    if trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {trials}")
    mask = support.mask()
    degrees = support.row_degrees()
    d = int(degrees[0]) if degrees.size else 0
    if not 0 < d <= support.n_s:
        raise InvalidParameterError(f"Degree d={d} must lie in [1, {support.n_s}]")

    rng = np.random.default_rng(seed)
    kept = sum(
        _keeps_degree(mask, rng.choice(support.n_s, size=d, replace=False))
        for _ in range(trials)
    )

    exact = None
    if math.comb(support.n_s, d) <= EXACT_DELETION_LIMIT:
        outcomes = [
            _keeps_degree(mask, deleted)
            for deleted in itertools.combinations(range(support.n_s), d)
        ]
        exact = float(np.mean(outcomes))

    n = support.n_ord
    beta = support.n_s / n
    bound = 1.0 - n**2 * (d - 1) * (d / (beta * n)) ** 4
    return RowDeletionReport(
        d=d,
        trials=trials,
        frequency=kept / trials,
        analytic_bound=float(np.clip(bound, 0.0, 1.0)),
        exact_frequency=exact,
    )
