"""
DeGroot opinion dynamics with stubborn agents.

Opinions are stacked stubborn-first, ``x = (z, y)``. The deterministic model applies the
expected trust matrix at every step; the randomized models draw a fresh trust matrix
``W(t)`` each step, either by neighbor sampling (whose mean is exactly the generator's
matrix) or by broadcast gossip.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import scipy.linalg
from joblib import Parallel, delayed
from numpy.typing import ArrayLike

from social_radar.exceptions import (
    DimensionMismatchError,
    InvalidParameterError,
    MissingSamplesError,
    SingularSystemError,
)
from social_radar.graph import Seed, TrustMatrix, int_seed
from social_radar.linalg import numerical_rank, offdiag, spectral_norm, spectral_radius

logger = logging.getLogger(__name__)

DEFAULT_GOSSIP_WEIGHT = 0.5
STEADY_STATE_TOLERANCE = 1e-12


class DynamicsModel(str, Enum):
    DETERMINISTIC = "det"
    NEIGHBOR_SAMPLING = "ns"
    BROADCAST_GOSSIP = "bg"


@dataclass(frozen=True, eq=False)
class OpinionState:
    z: np.ndarray
    y: np.ndarray
    t: int = 0

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.z, self.y])


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Sampling instants within ``(burn_in, horizon]``, sorted and distinct."""

    burn_in: int
    horizon: int
    instants: np.ndarray

    def __post_init__(self):
        instants = np.sort(np.asarray(self.instants, dtype=np.int64).ravel())
        if instants.size:
            if instants[0] <= self.burn_in or instants[-1] > self.horizon:
                raise InvalidParameterError(
                    f"Sampling instants must lie in ({self.burn_in}, {self.horizon}]"
                )
            if np.any(np.diff(instants) == 0):
                raise InvalidParameterError("Sampling instants must be distinct")
        object.__setattr__(self, "instants", instants)

    def __len__(self) -> int:
        return int(self.instants.size)


@dataclass(frozen=True, eq=False)
class OpinionTrace:
    """
    Noisy observations ``x_hat(t) = x(t) + n(t)`` of one discussion. Row ``r`` of
    ``observations`` is the stacked opinion vector at time ``times[r]``.
    """

    times: np.ndarray
    observations: np.ndarray
    n_s: int
    sigma: float
    model: DynamicsModel
    discussion: int = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.int64)
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise InvalidParameterError("Trace times must be strictly increasing")
        if self.observations.shape[0] != times.size:
            raise DimensionMismatchError("One observation row is needed per time index")
        object.__setattr__(self, "times", times)

    @property
    def stubborn(self) -> np.ndarray:
        return self.observations[:, : self.n_s]

    @property
    def ordinary(self) -> np.ndarray:
        return self.observations[:, self.n_s :]


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Knobs for steady-state collection. ``horizon`` is ``T_max`` for randomized
    dynamics and the iteration cap for deterministic noiseless iteration.
    """

    horizon: int = 10_000
    n_samples: Optional[int] = None
    burn_in: Optional[int] = None
    gossip_weight: float = DEFAULT_GOSSIP_WEIGHT
    tol: float = STEADY_STATE_TOLERANCE

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidParameterError(f"horizon must be >= 1, got {self.horizon}")
        if self.n_samples is not None and self.n_samples < 1:
            raise InvalidParameterError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.burn_in is not None and self.burn_in < 0:
            raise InvalidParameterError(f"burn_in must be >= 0, got {self.burn_in}")
        _check_gossip_weight(self.gossip_weight)


@dataclass(frozen=True, eq=False)
class SteadyStateData:
    """
    Excitation ``Z`` (``n_s x K``) and estimated steady states ``Y_hat``
    (``n_ord x K``), plus the per-column variance of the temporal-average estimator.
    """

    Z: np.ndarray
    Y_hat: np.ndarray
    sigma: float = 0.0
    model: DynamicsModel = DynamicsModel.DETERMINISTIC
    seed: Optional[int] = None
    variance: Optional[np.ndarray] = None

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        Y_hat = np.atleast_2d(np.asarray(self.Y_hat, dtype=float))
        if Z.shape[1] != Y_hat.shape[1]:
            raise DimensionMismatchError(
                f"Z has {Z.shape[1]} discussions, Y_hat has {Y_hat.shape[1]}"
            )
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "Y_hat", Y_hat)
        object.__setattr__(self, "model", DynamicsModel(self.model))
        variance = (
            np.zeros(Z.shape[1]) if self.variance is None else np.asarray(self.variance)
        )
        object.__setattr__(self, "variance", variance)

    @property
    def K(self) -> int:
        return self.Z.shape[1]

    @property
    def n_s(self) -> int:
        return self.Z.shape[0]

    @property
    def n_ord(self) -> int:
        return self.Y_hat.shape[0]

    @property
    def z_rank(self) -> int:
        return numerical_rank(self.Z)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "Z": self.Z.tolist(),
            "Y_hat": self.Y_hat.tolist(),
            "K": self.K,
            "sigma": self.sigma,
            "model": self.model.value,
            "seeds": [] if self.seed is None else [self.seed],
            "variance": np.asarray(self.variance).tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "SteadyStateData":
        seeds = payload.get("seeds") or []
        return cls(
            Z=np.asarray(payload["Z"], dtype=float),
            Y_hat=np.asarray(payload["Y_hat"], dtype=float),
            sigma=float(payload.get("sigma", 0.0)),
            model=DynamicsModel(payload.get("model", "det")),
            seed=int(seeds[0]) if seeds else None,
            variance=payload.get("variance"),
        )


def _check_gossip_weight(gossip_weight: float) -> None:
    if not 0.0 < gossip_weight <= 1.0:
        raise InvalidParameterError(
            f"Broadcast weight must lie in (0, 1], got {gossip_weight}"
        )


def _check_state(W: TrustMatrix, z: np.ndarray, y: np.ndarray) -> None:
    if z.shape != (W.n_s,) or y.shape != (W.n_ord,):
        raise DimensionMismatchError(
            f"State has {z.shape} stubborn and {y.shape} ordinary opinions, trust"
            f" matrix expects ({W.n_s},) and ({W.n_ord},)"
        )


# Steps --------------------------------------------------------------------------------


def step_deterministic(W: TrustMatrix, state: OpinionState) -> OpinionState:
    z = np.asarray(state.z, dtype=float)
    y = np.asarray(state.y, dtype=float)
    _check_state(W, z, y)
    return OpinionState(z=z, y=W.B @ z + W.D @ y, t=state.t + 1)


def _neighbor_cumulative(W: TrustMatrix) -> np.ndarray:
    return np.cumsum(np.hstack([W.B, W.D]), axis=1)


def _sample_neighbors(cumulative: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Column index each ordinary agent copies from, drawn with its trust row as pmf."""
    draws = rng.random(cumulative.shape[0]) * cumulative[:, -1]
    choice = (cumulative <= draws[:, None]).sum(axis=1)
    return np.minimum(choice, cumulative.shape[1] - 1)


def _gossip_listeners(W: TrustMatrix, broadcaster: int) -> np.ndarray:
    if broadcaster < W.n_s:
        return np.flatnonzero(W.B[:, broadcaster] > 0)
    column = broadcaster - W.n_s
    listeners = W.D[:, column] > 0
    listeners[column] = False
    return np.flatnonzero(listeners)


def sample_random_w(
    W: TrustMatrix,
    model: Union[DynamicsModel, str],
    seed: Seed = None,
    gossip_weight: float = DEFAULT_GOSSIP_WEIGHT,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw one realization ``(B(t), D(t))`` of the random trust matrix. Stubborn rows are
    always the identity and are not returned.

    ``neighbor_sampling`` turns every ordinary row into a canonical basis vector on
    neighbor ``j`` with probability ``W_ij``. ``broadcast_gossip`` picks one agent
    uniformly; every ordinary agent listening to it moves ``gossip_weight`` of its trust
    onto the broadcaster while everybody else keeps an identity row.
    """
    model = DynamicsModel(model)
    rng = np.random.default_rng(seed)
    n_s, n_ord = W.n_s, W.n_ord
    if model is DynamicsModel.DETERMINISTIC:
        return np.array(W.B), np.array(W.D)
    if model is DynamicsModel.NEIGHBOR_SAMPLING:
        choice = _sample_neighbors(_neighbor_cumulative(W), rng)
        realized = np.zeros((n_ord, n_s + n_ord))
        realized[np.arange(n_ord), choice] = 1.0
        return realized[:, :n_s], realized[:, n_s:]

    _check_gossip_weight(gossip_weight)
    broadcaster = int(rng.integers(n_s + n_ord))
    listeners = _gossip_listeners(W, broadcaster)
    B_t = np.zeros((n_ord, n_s))
    D_t = np.eye(n_ord)
    D_t[listeners, listeners] = 1.0 - gossip_weight
    if broadcaster < n_s:
        B_t[listeners, broadcaster] = gossip_weight
    else:
        D_t[listeners, broadcaster - n_s] = gossip_weight
    return B_t, D_t


def gossip_mean_matrix(
    W: TrustMatrix, gossip_weight: float = DEFAULT_GOSSIP_WEIGHT
) -> TrustMatrix:
    """
    Expected trust matrix of broadcast gossip over the support of ``W``. It differs
    from ``W`` itself, which only contributes its sparsity pattern.
    """
    _check_gossip_weight(gossip_weight)
    rate = gossip_weight / (W.n_s + W.n_ord)
    listens_B = (W.B > 0).astype(float)
    listens_D = (offdiag(W.D) > 0).astype(float)
    degree = listens_B.sum(axis=1) + listens_D.sum(axis=1)
    D_mean = rate * listens_D + np.diag(1.0 - rate * degree)
    return TrustMatrix(B=rate * listens_B, D=D_mean)


def simulate(
    W: TrustMatrix,
    z0: ArrayLike,
    y0: ArrayLike,
    T: int,
    model: Union[DynamicsModel, str] = DynamicsModel.DETERMINISTIC,
    sigma: float = 0.0,
    seed: Seed = None,
    gossip_weight: float = DEFAULT_GOSSIP_WEIGHT,
    record: Optional[SampleSet] = None,
    discussion: int = 0,
) -> OpinionTrace:
    """
    Run one discussion for ``T`` steps and return the noisy observations
    ``x(t) + N(0, sigma^2)``. By default every instant ``0..T`` is recorded; pass
    ``record`` to keep only the sampled instants, which bounds memory on long horizons.
    """
    if T < 1:
        raise InvalidParameterError(f"Horizon T must be >= 1, got {T}")
    if sigma < 0:
        raise InvalidParameterError(f"Noise level sigma must be >= 0, got {sigma}")
    model = DynamicsModel(model)
    if model is DynamicsModel.BROADCAST_GOSSIP:
        _check_gossip_weight(gossip_weight)
    z = np.asarray(z0, dtype=float)
    y = np.array(y0, dtype=float)
    _check_state(W, z, y)
    rng = np.random.default_rng(seed)
    n_s, n_ord = W.n_s, W.n_ord

    times = np.arange(T + 1) if record is None else record.instants
    if times.size and times[-1] > T:
        raise InvalidParameterError(f"Recording instants exceed the horizon {T}")
    observations = np.empty((times.size, n_s + n_ord))
    x = np.concatenate([z, y])
    cursor = 0

    def observe(t: int) -> None:
        nonlocal cursor
        if cursor < times.size and times[cursor] == t:
            noise = sigma * rng.standard_normal(x.size) if sigma > 0 else 0.0
            observations[cursor] = x + noise
            cursor += 1

    observe(0)
    cumulative = _neighbor_cumulative(W) if model is DynamicsModel.NEIGHBOR_SAMPLING else None
    for t in range(1, T + 1):
        if model is DynamicsModel.DETERMINISTIC:
            x[n_s:] = W.B @ z + W.D @ x[n_s:]
        elif cumulative is not None:
            x[n_s:] = x[_sample_neighbors(cumulative, rng)]
        else:
            broadcaster = int(rng.integers(n_s + n_ord))
            listeners = _gossip_listeners(W, broadcaster) + n_s
            x[listeners] = (1.0 - gossip_weight) * x[listeners] + gossip_weight * x[
                broadcaster
            ]
        observe(t)

    return OpinionTrace(
        times=times,
        observations=observations,
        n_s=n_s,
        sigma=sigma,
        model=model,
        discussion=discussion,
    )


# Steady states ------------------------------------------------------------------------


def steady_state_exact(B: ArrayLike, D: ArrayLike, Z: ArrayLike) -> np.ndarray:
    """``Y = (I - D)^-1 B Z`` through a linear solve."""
    B = np.asarray(B, dtype=float)
    D = np.asarray(D, dtype=float)
    Z = np.asarray(Z, dtype=float)
    system = np.eye(D.shape[0]) - D
    condition = np.linalg.cond(system)
    if not np.isfinite(condition) or condition > 1.0 / np.finfo(float).eps:
        raise SingularSystemError(
            f"I - D is numerically singular (condition number {condition:.3e})"
        )
    return scipy.linalg.solve(system, B @ Z)


def iterate_steady_state(
    W: TrustMatrix,
    Z: ArrayLike,
    Y0: Optional[ArrayLike] = None,
    max_steps: int = 100_000,
    tol: float = STEADY_STATE_TOLERANCE,
) -> Tuple[np.ndarray, int, float]:
    """
    Iterate ``Y <- B Z + D Y`` for all discussions at once until the largest change
    drops below ``tol``. Returns ``(Y, steps, last_change)``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Y = np.zeros((W.n_ord, Z.shape[1])) if Y0 is None else np.array(Y0, dtype=float)
    drive = W.B @ Z
    change = math.inf
    steps = 0
    while steps < max_steps:
        Y_next = drive + W.D @ Y
        change = float(np.max(np.abs(Y_next - Y), initial=0.0))
        Y = Y_next
        steps += 1
        if change < tol:
            break
    else:
        logger.warning(
            "Deterministic iteration stopped after %d steps with change %.3e", steps, change
        )
    return Y, steps, change


def temporal_average(trace: OpinionTrace, samples: SampleSet) -> np.ndarray:
    """Mean of the observations over the sampled instants only."""
    if len(samples) == 0:
        raise MissingSamplesError("The sample set is empty")
    positions = np.searchsorted(trace.times, samples.instants)
    present = positions < trace.times.size
    present[present] = trace.times[positions[present]] == samples.instants[present]
    if not present.all():
        missing = samples.instants[~present]
        raise MissingSamplesError(
            f"{missing.size} sampling instants are not in the trace (first: {missing[0]})"
        )
    return trace.observations[positions].mean(axis=0)


def uniform_sampling_set(T_o: int, T_max: int, m: int, seed: Seed = None) -> SampleSet:
    """``m`` distinct instants drawn uniformly without replacement from ``(T_o, T_max]``."""
    if T_o < 0 or m < 1 or T_max - T_o < m:
        raise InvalidParameterError(
            f"Cannot draw {m} distinct instants from ({T_o}, {T_max}]"
        )
    rng = np.random.default_rng(seed)
    instants = rng.choice(T_max - T_o, size=m, replace=False) + T_o + 1
    return SampleSet(burn_in=T_o, horizon=T_max, instants=instants)


def mse_bound(lambda_d: float, samples: SampleSet, c_prime: float = 1.0) -> float:
    """
    Schedule-ranking bound on the estimator's mean squared error,
    ``(C'/m) * sum_i lambda^(min_l |t_(l+i) - t_l|)``. ``C'`` is an unknown constant,
    so only comparisons between schedules are meaningful.
    """
    if not 0.0 <= lambda_d < 1.0:
        raise InvalidParameterError(f"lambda_d must lie in [0, 1), got {lambda_d}")
    instants = samples.instants
    m = instants.size
    if m == 0:
        raise MissingSamplesError("The sample set is empty")
    total = 0.0
    for i in range(m):
        # the i-th minimal gap is at least i
        if i > 0 and lambda_d**i == 0.0:
            break
        gap = int(np.min(instants[i:] - instants[: m - i]))
        total += lambda_d**gap
    return c_prime / m * total


def default_burn_in(D: ArrayLike, level: float = 1e-6) -> int:
    """
    Burn-in ``T_o = ceil(log(level) / log(r))`` with contraction rate ``r``.

    ``r`` is ``max(rho(D), ||D||_2)`` when the spectral norm is below one, so that
    ``||D^t||_2 <= r^t <= level`` holds after ``T_o`` steps even for non-normal ``D``.
    Otherwise only the asymptotic rate ``rho(D)`` is available and the level is
    reached up to a transient.
    """
    D = np.asarray(D, dtype=float)
    radius = spectral_radius(D)
    if radius >= 1.0:
        raise InvalidParameterError(
            f"Spectral radius of D is {radius:.6f} >= 1; supply a burn-in explicitly"
        )
    norm = spectral_norm(D)
    rate = max(radius, norm) if norm < 1.0 else radius
    if rate == 0.0:
        return 1
    return max(1, math.ceil(math.log(level) / math.log(rate)))


# Data collection ----------------------------------------------------------------------


def _run_discussion(
    W: TrustMatrix,
    z: np.ndarray,
    model: DynamicsModel,
    sigma: float,
    burn_in: int,
    horizon: int,
    n_samples: int,
    gossip_weight: float,
    seed: np.random.SeedSequence,
    discussion: int,
) -> Tuple[np.ndarray, float]:
    rng = np.random.default_rng(seed)
    y0 = rng.standard_normal(W.n_ord)
    samples = uniform_sampling_set(burn_in, horizon, n_samples, rng)
    trace = simulate(
        W,
        z,
        y0,
        horizon,
        model=model,
        sigma=sigma,
        seed=rng,
        gossip_weight=gossip_weight,
        record=samples,
        discussion=discussion,
    )
    estimate = temporal_average(trace, samples)[W.n_s :]
    if len(samples) > 1:
        spread = float(np.mean(np.var(trace.ordinary, axis=0, ddof=1)))
    else:
        spread = 0.0
    return estimate, spread / len(samples)


def collect_dataset(
    W: TrustMatrix,
    K: int,
    Z: Optional[ArrayLike] = None,
    estimator: Optional[EstimatorConfig] = None,
    model: Union[DynamicsModel, str] = DynamicsModel.DETERMINISTIC,
    sigma: float = 0.0,
    seed: Seed = None,
    n_jobs: int = 1,
) -> SteadyStateData:
    """
    Run ``K`` independent discussions and collect ``(Z, Y_hat)``.

    ``Z`` defaults to i.i.d. standard normal stubborn opinions. Deterministic noiseless
    data comes from iterating the dynamics to a fixed point; every other combination
    simulates each discussion and applies the temporal-average estimator on uniformly
    drawn instants after the burn-in.
    """
    model = DynamicsModel(model)
    estimator = estimator or EstimatorConfig()
    if K < 1:
        raise InvalidParameterError(f"K must be >= 1, got {K}")
    root_seed = int_seed(seed)
    z_seq, y_seq, *discussion_seqs = np.random.SeedSequence(root_seed).spawn(K + 2)

    if Z is None:
        Z = np.random.default_rng(z_seq).standard_normal((W.n_s, K))
    else:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape != (W.n_s, K):
            raise DimensionMismatchError(f"Z must be {(W.n_s, K)}, got {Z.shape}")
    if K < W.n_s:
        logger.warning(
            "Only K=%d discussions for n_s=%d stubborn agents; Z cannot have full row rank",
            K,
            W.n_s,
        )
    rank = numerical_rank(Z)
    if rank < W.n_s:
        logger.warning("Excitation matrix Z is rank deficient (rank %d < %d)", rank, W.n_s)

    if model is DynamicsModel.DETERMINISTIC and sigma == 0.0:
        Y0 = np.random.default_rng(y_seq).standard_normal((W.n_ord, K))
        Y_hat, steps, change = iterate_steady_state(
            W, Z, Y0, max_steps=estimator.horizon, tol=estimator.tol
        )
        logger.debug("Deterministic data converged in %d steps (change %.2e)", steps, change)
        return SteadyStateData(Z=Z, Y_hat=Y_hat, sigma=sigma, model=model, seed=root_seed)

    burn_in = estimator.burn_in
    if burn_in is None:
        mean_D = (
            gossip_mean_matrix(W, estimator.gossip_weight).D
            if model is DynamicsModel.BROADCAST_GOSSIP
            else W.D
        )
        burn_in = default_burn_in(mean_D)
    n_samples = estimator.n_samples or min(1000, estimator.horizon - burn_in)
    if n_samples < 1:
        raise InvalidParameterError(
            f"Burn-in {burn_in} leaves no room for samples before horizon {estimator.horizon}"
        )
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_run_discussion)(
            W,
            Z[:, k],
            model,
            sigma,
            burn_in,
            estimator.horizon,
            n_samples,
            estimator.gossip_weight,
            discussion_seqs[k],
            k,
        )
        for k in range(K)
    )
    Y_hat = np.column_stack([estimate for estimate, _ in outcomes])
    variance = np.array([spread for _, spread in outcomes])
    return SteadyStateData(
        Z=Z, Y_hat=Y_hat, sigma=sigma, model=model, seed=root_seed, variance=variance
    )
