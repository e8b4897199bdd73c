"""
Monte-Carlo sweeps: generate an instance, collect steady-state data, recover the
relative trust matrices and score them, for every grid point, network and trial.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from social_radar.config import ExperimentConfig
from social_radar.dynamics import DynamicsModel, collect_dataset, gossip_mean_matrix
from social_radar.exceptions import SocialRadarError
from social_radar.graph import (
    NetworkInstance,
    NetworkModel,
    NetworkTopology,
    TrustMatrix,
    build_trust_matrix,
    generate_instance,
    place_stubborn,
    relative_trust_of,
)
from social_radar.metrics import expose_support, nmse, support_error
from social_radar.recovery import RecoveryMode, RecoveryProblem, recover

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ("nmse_D", "nmse_B", "support_error", "runtime")


@dataclass(frozen=True)
class TrialResult:
    sweep: str
    value: Any
    network: str
    trial: int
    n_ord: int
    n_s: int
    K: int
    nmse_D: float = math.nan
    nmse_B: float = math.nan
    support_error: float = math.nan
    runtime: float = math.nan
    converged: bool = False
    iterations: int = 0
    failed: bool = False
    error: str = ""


@dataclass
class ResultTable:
    """One row per (grid point, network, trial)."""

    rows: List[TrialResult] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def failed(self) -> List[TrialResult]:
        return [row for row in self.rows if row.failed]

    def to_frame(self) -> pd.DataFrame:
        columns = list(TrialResult.__dataclass_fields__)
        return pd.DataFrame([asdict(row) for row in self.rows], columns=columns)

    def summary(self) -> pd.DataFrame:
        """Mean and standard error of the scores per network and grid point."""
        frame = self.to_frame()
        if frame.empty:
            return frame
        grouped = frame.groupby(["network", "value"], sort=False)
        stats = grouped[list(SCORE_COLUMNS)].agg(["mean", "sem"])
        stats.columns = [f"{score}_{stat}" for score, stat in stats.columns]
        stats["median_nmse_D"] = grouped["nmse_D"].median()
        stats["trials"] = grouped["trial"].count()
        stats["failed"] = grouped["failed"].sum()
        return stats.reset_index()

    def summary_records(self) -> List[Dict[str, Any]]:
        frame = self.summary()
        return [
            {key: _plain(value) for key, value in record.items()}
            for record in frame.to_dict(orient="records")
        ]


def _plain(value: Any) -> Any:
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return None if np.isnan(value) else float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _value_label(config: ExperimentConfig, value: Any) -> Any:
    return value.tag if config.sweep == "model" else value


def _build_instance(
    config: ExperimentConfig,
    network: Optional[NetworkModel],
    topology: Optional[NetworkTopology],
    n_ord: int,
    n_s: int,
    seed: np.random.SeedSequence,
) -> NetworkInstance:
    if topology is None:
        assert network is not None
        return generate_instance(network, config.placement, n_ord, n_s, seed=seed)
    support_seq, weight_seq = seed.spawn(2)
    support = place_stubborn(topology.n_ord, n_s, config.placement, seed=support_seq)
    trust = build_trust_matrix(topology, support, seed=weight_seq)
    return NetworkInstance(topology=topology, support=support, trust=trust)


def _expected_trust(config: ExperimentConfig, instance: NetworkInstance) -> TrustMatrix:
    if config.data.model is DynamicsModel.BROADCAST_GOSSIP:
        return gossip_mean_matrix(instance.trust, config.data.estimator.gossip_weight)
    return instance.trust


def run_trial(
    config: ExperimentConfig,
    point: int,
    value: Any,
    network_index: int,
    network: Optional[NetworkModel],
    trial: int,
    topology: Optional[NetworkTopology] = None,
) -> TrialResult:
    """
    A single generate, collect, recover and score pass. Library errors are caught and
    turn into a failed row so that the rest of the sweep keeps going.
    """
    n_ord, n_s = config.point_sizes(value)
    if topology is not None:
        n_ord, label = topology.n_ord, topology.model_tag
    else:
        assert network is not None
        label = network.tag
    K = config.discussions(n_s)
    base = {
        "sweep": config.sweep,
        "value": _value_label(config, value),
        "network": label,
        "trial": trial,
        "n_ord": n_ord,
        "n_s": n_s,
        "K": K,
    }
    instance_seq, data_seq, support_seq = np.random.SeedSequence(
        [config.seed, point, network_index, trial]
    ).spawn(3)

    started = time.perf_counter()
    try:
        instance = _build_instance(config, network, topology, n_ord, n_s, instance_seq)
        data = collect_dataset(
            instance.trust,
            K,
            estimator=config.data.estimator,
            model=config.data.model,
            sigma=config.data.sigma,
            seed=data_seq,
        )
        truth = relative_trust_of(_expected_trust(config, instance), config.c)
        # The stubborn placement is known in both modes.
        support_B = instance.support.mask()
        if config.mode is RecoveryMode.FULL_SUPPORT:
            support_D = instance.topology.adjacency()
        else:
            support_D = expose_support(
                instance.topology.adjacency(), config.point_p_known(value), seed=support_seq
            )
        problem = RecoveryProblem.from_dataset(
            data, support_D=support_D, support_B=support_B, c=config.c, mode=config.mode
        )
        result = recover(problem, config.solver)
    except (SocialRadarError, np.linalg.LinAlgError) as exc:
        logger.error(
            "Trial %d at %s=%s on %s failed: %s", trial, config.sweep, base["value"], label, exc
        )
        return TrialResult(
            **base, runtime=time.perf_counter() - started, failed=True, error=str(exc)
        )

    return TrialResult(
        **base,
        nmse_D=nmse(result.D, truth.D),
        nmse_B=nmse(result.B, truth.B),
        support_error=support_error(result.D, truth.D, tau=config.tau, support=support_D),
        runtime=time.perf_counter() - started,
        converged=result.converged,
        iterations=result.iterations,
    )


def _tasks(config: ExperimentConfig, topology: Optional[NetworkTopology]) -> Sequence[tuple]:
    tasks = []
    for point, value in enumerate(config.grid):
        networks: Sequence[Optional[NetworkModel]] = (
            [None] if topology is not None else config.point_networks(value)
        )
        for network_index, network in enumerate(networks):
            for trial in range(config.trials):
                tasks.append((point, value, network_index, network, trial))
    return tasks


def run_experiment(config: ExperimentConfig) -> ResultTable:
    """
    Run every (grid point, network, trial) of ``config`` in a joblib pool. Trial seeds
    derive from ``(seed, point, network, trial)``, so identical configs give identical
    scores regardless of ``n_jobs``.
    """
    topology = None
    if config.edge_list is not None:
        topology = NetworkTopology.from_edge_list(config.edge_list)
        logger.info(
            "Ingested %s: %d agents, %d directed edges",
            config.edge_list,
            topology.n_ord,
            len(topology.edges),
        )
    tasks = _tasks(config, topology)
    logger.info(
        "Running %s: %d grid points, %d trials in total", config.name, len(config.grid), len(tasks)
    )
    rows = Parallel(n_jobs=config.n_jobs)(
        delayed(run_trial)(config, point, value, network_index, network, trial, topology)
        for point, value, network_index, network, trial in tasks
    )
    table = ResultTable(rows=list(rows))
    if table.failed:
        logger.warning("%d of %d trials failed", len(table.failed), len(table))
    return table
