"""
Experiment configuration loaded from JSON.

A config describes one sweep: which variable changes (``n_s``, ``n_ord``, ``p_known``
or the network ``model``), the grid of values it takes, how many trials run per grid
point, and the fixed generator, data-collection and solver settings. See the README
for the full schema.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from social_radar.dynamics import DynamicsModel, EstimatorConfig
from social_radar.exceptions import ConfigError, SocialRadarError
from social_radar.graph import (
    DRegular,
    ErdosRenyi,
    NetworkModel,
    Placement,
    network_from_dict,
    network_to_dict,
    placement_from_dict,
    placement_to_dict,
)
from social_radar.recovery import RecoveryMode, SolverConfig

logger = logging.getLogger(__name__)

SWEEP_VARIABLES = ("n_s", "n_ord", "p_known", "model")


@dataclass(frozen=True)
class DataConfig:
    """
    How steady states are collected. The default is deterministic noiseless iteration;
    any other combination runs the randomized dynamics with the temporal-average
    estimator configured by ``estimator``.
    """

    model: DynamicsModel = DynamicsModel.DETERMINISTIC
    sigma: float = 0.0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        object.__setattr__(self, "model", DynamicsModel(self.model))
        if self.sigma < 0:
            raise ConfigError(f"data.sigma must be >= 0, got {self.sigma}")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "DataConfig":
        payload = dict(payload)
        _reject_unknown("data", payload, {"model", "sigma", "estimator"})
        estimator = payload.pop("estimator", {})
        _reject_unknown(
            "data.estimator", estimator, {f.name for f in fields(EstimatorConfig)}
        )
        return cls(
            model=DynamicsModel(payload.get("model", "det")),
            sigma=float(payload.get("sigma", 0.0)),
            estimator=EstimatorConfig(**estimator),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model.value,
            "sigma": self.sigma,
            "estimator": {
                f.name: getattr(self.estimator, f.name) for f in fields(EstimatorConfig)
            },
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One sweep. ``K`` is ``ceil(k_factor * n_s)`` discussions per instance. When
    ``beta`` is set, the stubborn population follows the ordinary one as
    ``n_s = ceil(beta * n_ord)``. Every entry of ``networks`` is swept separately
    unless the sweep variable is ``model``, in which case ``grid`` holds the network
    dicts. ``edge_list`` replaces generated topologies with an ingested graph.
    """

    sweep: str
    grid: Tuple[Any, ...]
    name: str = "experiment"
    trials: int = 100
    n_ord: int = 60
    n_s: Optional[int] = None
    beta: Optional[float] = None
    networks: Tuple[NetworkModel, ...] = (ErdosRenyi(p=0.1),)
    placement: Placement = DRegular(d=5)
    mode: RecoveryMode = RecoveryMode.SPARSE
    p_known: float = 0.0
    k_factor: float = 2.0
    c: float = 0.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    data: DataConfig = field(default_factory=DataConfig)
    tau: Optional[float] = None
    edge_list: Optional[str] = None
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.sweep not in SWEEP_VARIABLES:
            raise ConfigError(
                f"Unknown sweep variable {self.sweep!r}; use one of {SWEEP_VARIABLES}"
            )
        if not self.grid:
            raise ConfigError("grid must contain at least one value")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.n_ord < 2:
            raise ConfigError(f"n_ord must be >= 2, got {self.n_ord}")
        if self.sweep != "n_s" and self.n_s is None and self.beta is None:
            raise ConfigError("Set n_s or beta unless n_s is the sweep variable")
        if self.beta is not None and self.beta <= 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")
        if not self.networks:
            raise ConfigError("networks must name at least one network model")
        if not 0.0 <= self.p_known <= 1.0:
            raise ConfigError(f"p_known must lie in [0, 1], got {self.p_known}")
        if self.k_factor <= 0:
            raise ConfigError(f"k_factor must be > 0, got {self.k_factor}")
        if not 0.0 <= self.c < 1.0:
            raise ConfigError(f"c must lie in [0, 1), got {self.c}")
        if self.tau is not None and self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        object.__setattr__(self, "mode", RecoveryMode(self.mode))
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "networks", tuple(self.networks))

    def point_networks(self, value: Any) -> Tuple[NetworkModel, ...]:
        if self.sweep == "model":
            return (value,)
        return self.networks

    def point_sizes(self, value: Any) -> Tuple[int, int]:
        """``(n_ord, n_s)`` at a grid point."""
        n_ord = int(value) if self.sweep == "n_ord" else self.n_ord
        if self.sweep == "n_s":
            n_s = int(value)
        elif self.beta is not None:
            n_s = math.ceil(self.beta * n_ord)
        else:
            assert self.n_s is not None
            n_s = self.n_s
        return n_ord, n_s

    def point_p_known(self, value: Any) -> float:
        return float(value) if self.sweep == "p_known" else self.p_known

    def discussions(self, n_s: int) -> int:
        return max(1, math.ceil(self.k_factor * n_s))

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ExperimentConfig":
        """
        Raises
        ------
        ConfigError
            On unknown keys, missing required keys or out-of-range values.
        """
        payload = dict(payload)
        _reject_unknown("config", payload, {f.name for f in fields(cls)})
        try:
            sweep = payload.pop("sweep")
            grid = payload.pop("grid")
        except KeyError as exc:
            raise ConfigError(f"Missing required key {exc}") from exc
        try:
            if sweep == "model":
                grid = [network_from_dict(entry) for entry in grid]
            if "networks" in payload:
                payload["networks"] = tuple(
                    network_from_dict(entry) for entry in payload["networks"]
                )
            if "placement" in payload:
                payload["placement"] = placement_from_dict(payload["placement"])
            if "mode" in payload:
                payload["mode"] = RecoveryMode(payload["mode"])
            if "solver" in payload:
                payload["solver"] = SolverConfig.from_dict(payload["solver"])
            if "data" in payload:
                payload["data"] = DataConfig.from_dict(payload["data"])
            return cls(sweep=sweep, grid=tuple(grid), **payload)
        except ConfigError:
            raise
        except (SocialRadarError, ValueError, TypeError) as exc:
            raise ConfigError(f"Invalid experiment config: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        grid = (
            [network_to_dict(model) for model in self.grid]
            if self.sweep == "model"
            else list(self.grid)
        )
        return {
            "sweep": self.sweep,
            "grid": grid,
            "name": self.name,
            "trials": self.trials,
            "n_ord": self.n_ord,
            "n_s": self.n_s,
            "beta": self.beta,
            "networks": [network_to_dict(model) for model in self.networks],
            "placement": placement_to_dict(self.placement),
            "mode": self.mode.value,
            "p_known": self.p_known,
            "k_factor": self.k_factor,
            "c": self.c,
            "solver": {f.name: getattr(self.solver, f.name) for f in fields(SolverConfig)},
            "data": self.data.to_dict(),
            "tau": self.tau,
            "edge_list": self.edge_list,
            "seed": self.seed,
            "n_jobs": self.n_jobs,
        }


def _reject_unknown(section: str, payload: Dict[str, Any], allowed) -> None:
    unknown = set(payload) - set(allowed)
    if unknown:
        raise ConfigError(f"Unknown keys in {section}: {sorted(unknown)}")


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Config {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"Config {path} must hold a JSON object")
    logger.debug("Loaded experiment config from %s", path)
    return ExperimentConfig.from_dict(payload)
