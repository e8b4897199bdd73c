"""
Persistence: JSON for matrices, datasets, instances and recovery results; CSV through
pandas for opinion traces, objective traces and result tables.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from social_radar.dynamics import OpinionTrace, SteadyStateData
from social_radar.exceptions import InvalidParameterError
from social_radar.graph import BipartiteSupport, NetworkInstance, NetworkTopology, TrustMatrix
from social_radar.recovery import RecoveryResult

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, allow_nan=True))
    logger.debug("Wrote %s", path)
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise InvalidParameterError(f"Cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InvalidParameterError(f"{path} must hold a JSON object")
    return payload


def _field(payload: Dict[str, Any], key: str, path: PathLike) -> Any:
    try:
        return payload[key]
    except KeyError as exc:
        raise InvalidParameterError(f"{path} is missing the {key!r} field") from exc


def save_trust(trust: TrustMatrix, path: PathLike) -> Path:
    return write_json(trust.to_dict(), path)


def load_trust(path: PathLike) -> TrustMatrix:
    payload = read_json(path)
    # an instance file carries the trust matrix under "trust"
    payload = payload.get("trust", payload)
    for key in ("n_ord", "n_s", "B", "D"):
        _field(payload, key, path)
    return TrustMatrix.from_dict(payload)


def save_instance(instance: NetworkInstance, path: PathLike) -> Path:
    return write_json(
        {
            "n_ord": instance.topology.n_ord,
            "n_s": instance.support.n_s,
            "model": instance.topology.model_tag,
            "edges": sorted(instance.topology.edges),
            "stubborn_edges": sorted(instance.support.edges),
            "trust": instance.trust.to_dict(),
        },
        path,
    )


def load_instance(path: PathLike) -> NetworkInstance:
    payload = read_json(path)
    n_ord = int(_field(payload, "n_ord", path))
    n_s = int(_field(payload, "n_s", path))
    topology = NetworkTopology(
        n_ord=n_ord,
        edges=frozenset(tuple(edge) for edge in _field(payload, "edges", path)),
        model_tag=payload.get("model", "ingested"),
    )
    support = BipartiteSupport(
        n_ord=n_ord,
        n_s=n_s,
        edges=frozenset(tuple(edge) for edge in _field(payload, "stubborn_edges", path)),
    )
    trust = TrustMatrix.from_dict(_field(payload, "trust", path))
    return NetworkInstance(topology=topology, support=support, trust=trust)


def save_dataset(data: SteadyStateData, path: PathLike) -> Path:
    return write_json(data.to_dict(), path)


def load_dataset(path: PathLike) -> SteadyStateData:
    payload = read_json(path)
    _field(payload, "Z", path)
    _field(payload, "Y_hat", path)
    return SteadyStateData.from_dict(payload)


def trace_frame(trace: OpinionTrace) -> pd.DataFrame:
    columns = [f"z{j}" for j in range(trace.n_s)] + [
        f"y{i}" for i in range(trace.observations.shape[1] - trace.n_s)
    ]
    frame = pd.DataFrame(trace.observations, columns=columns)
    frame.insert(0, "t", np.asarray(trace.times))
    return frame


def save_trace_csv(trace: OpinionTrace, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace_frame(trace).to_csv(path, index=False)
    return path


def save_objective_trace(result: RecoveryResult, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            "iteration": np.arange(result.objective_trace.size),
            "objective": result.objective_trace,
        }
    )
    frame.to_csv(path, index=False)
    return path


def save_results_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def load_results_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)
