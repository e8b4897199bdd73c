"""
Network generation, stubborn-agent placement and trust-matrix bookkeeping.

The population is split into ``n_s`` stubborn agents and ``n_ord`` ordinary agents.
The full trust matrix has the block form ``[[I, 0], [B, D]]`` with the stubborn agents
first, so only the ``B`` (ordinary <- stubborn) and ``D`` (ordinary <- ordinary) blocks
are stored.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, ClassVar, Dict, FrozenSet, Iterable, Optional, Tuple, Union

import networkx as nx
import numpy as np
from numpy.typing import ArrayLike

from social_radar.exceptions import (
    AmbiguityOutOfClassError,
    DimensionMismatchError,
    InfeasibleProblemError,
    InvalidParameterError,
    SingularSystemError,
)
from social_radar.linalg import offdiag, spectral_norm, spectral_radius

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator, np.random.SeedSequence, None]
Edge = Tuple[int, int]

ROW_SUM_TOLERANCE = 1e-12
# Looser tolerance for matrices coming out of a solver or a file rather than from
# build_trust_matrix.
INPUT_ROW_SUM_TOLERANCE = 1e-8


def int_seed(seed: Seed) -> int:
    """Collapse any accepted seed into a plain integer (networkx wants ints)."""
    if isinstance(seed, (int, np.integer)) and not isinstance(seed, bool):
        return int(seed)
    return int(np.random.default_rng(seed).integers(2**32))


# Network models -----------------------------------------------------------------------


@dataclass(frozen=True)
class ErdosRenyi:
    p: float
    tag: ClassVar[str] = "ER"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise InvalidParameterError(f"ER connectivity p must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class BarabasiAlbert:
    m: int
    tag: ClassVar[str] = "BA"

    def __post_init__(self):
        if self.m < 1:
            raise InvalidParameterError(f"BA attachment m must be >= 1, got {self.m}")


@dataclass(frozen=True)
class WattsStrogatz:
    """Ring lattice with ``b`` neighbors on each side, rewired with ``p_rewire``."""

    b: int
    p_rewire: float
    tag: ClassVar[str] = "WS"

    def __post_init__(self):
        if self.b < 1:
            raise InvalidParameterError(f"WS ring half-width b must be >= 1, got {self.b}")
        if not 0.0 <= self.p_rewire <= 1.0:
            raise InvalidParameterError(
                f"WS rewiring probability must be in [0, 1], got {self.p_rewire}"
            )


NetworkModel = Union[ErdosRenyi, BarabasiAlbert, WattsStrogatz]

_NETWORK_PARAMS = {"er": ("p",), "ba": ("m",), "ws": ("b", "p_rewire")}


def network_from_dict(spec: Dict[str, Any]) -> NetworkModel:
    """
    Parse a network model from a plain dict such as ``{"model": "er", "p": 0.1}``.

    Accepted models are ``er`` (``p``), ``ba`` (``m``) and ``ws`` (``b``, ``p_rewire``).
    """
    params = dict(spec)
    name = str(params.pop("model", "")).lower()
    expected = _NETWORK_PARAMS.get(name)
    if expected is None:
        raise InvalidParameterError(f"Unknown network model {name!r}; use er, ba or ws")
    if set(params) != set(expected):
        raise InvalidParameterError(
            f"Network model {name!r} takes parameters {sorted(expected)}, got"
            f" {sorted(params)}"
        )
    if name == "er":
        return ErdosRenyi(p=float(params["p"]))
    if name == "ba":
        return BarabasiAlbert(m=int(params["m"]))
    return WattsStrogatz(b=int(params["b"]), p_rewire=float(params["p_rewire"]))


def network_to_dict(model: NetworkModel) -> Dict[str, Any]:
    if isinstance(model, ErdosRenyi):
        return {"model": "er", "p": model.p}
    if isinstance(model, BarabasiAlbert):
        return {"model": "ba", "m": model.m}
    return {"model": "ws", "b": model.b, "p_rewire": model.p_rewire}


# Stubborn placements ------------------------------------------------------------------


@dataclass(frozen=True)
class DRegular:
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise InvalidParameterError(f"Placement degree d must be >= 1, got {self.d}")


@dataclass(frozen=True)
class ErBipartite:
    p_s: float

    def __post_init__(self):
        if not 0.0 <= self.p_s <= 1.0:
            raise InvalidParameterError(
                f"Bipartite connectivity p_s must be in [0, 1], got {self.p_s}"
            )


Placement = Union[DRegular, ErBipartite]


def placement_from_dict(spec: Dict[str, Any]) -> Placement:
    """Parse ``{"mode": "d_regular", "d": 5}`` or ``{"mode": "er_bipartite", "p_s": 0.1}``."""
    mode = str(spec.get("mode", "")).lower()
    try:
        if mode == "d_regular":
            return DRegular(d=int(spec["d"]))
        if mode == "er_bipartite":
            return ErBipartite(p_s=float(spec["p_s"]))
    except KeyError as exc:
        raise InvalidParameterError(
            f"Placement {mode!r} is missing parameter {exc}"
        ) from exc
    raise InvalidParameterError(
        f"Unknown placement mode {mode!r}; use d_regular or er_bipartite"
    )


def placement_to_dict(placement: Placement) -> Dict[str, Any]:
    if isinstance(placement, DRegular):
        return {"mode": "d_regular", "d": placement.d}
    return {"mode": "er_bipartite", "p_s": placement.p_s}


# Domain types -------------------------------------------------------------------------


def _freeze_edges(edges: Iterable[Edge]) -> FrozenSet[Edge]:
    return frozenset((int(i), int(j)) for i, j in edges)


@dataclass(frozen=True)
class NetworkTopology:
    """
    Directed ordinary-to-ordinary trust graph; ``(i, j)`` means agent ``i`` trusts
    agent ``j``. Self-trust is never an edge, it lives on the diagonal of ``D``.
    """

    n_ord: int
    edges: FrozenSet[Edge] = field(default_factory=frozenset)
    model_tag: str = "ingested"

    def __post_init__(self):
        edges = _freeze_edges(self.edges)
        object.__setattr__(self, "edges", edges)
        for i, j in edges:
            if i == j:
                raise InvalidParameterError(f"Self-loop on agent {i} is not allowed")
            if not (0 <= i < self.n_ord and 0 <= j < self.n_ord):
                raise InvalidParameterError(
                    f"Edge ({i}, {j}) is outside the vertex range [0, {self.n_ord})"
                )

    def adjacency(self) -> np.ndarray:
        mask = np.zeros((self.n_ord, self.n_ord), dtype=bool)
        if self.edges:
            rows, cols = zip(*self.edges)
            mask[list(rows), list(cols)] = True
        return mask

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n_ord))
        graph.add_edges_from(self.edges)
        return graph

    @classmethod
    def from_networkx(
        cls,
        graph: nx.Graph,
        n_ord: Optional[int] = None,
        model_tag: str = "ingested",
        symmetrize: bool = True,
    ) -> "NetworkTopology":
        """
        Build a topology from a networkx graph. Undirected graphs, and directed ones
        when ``symmetrize`` is set, contribute both directions of every edge.
        """
        if n_ord is None:
            n_ord = (max(graph.nodes) + 1) if graph.number_of_nodes() else 0
        edges = set()
        for i, j in graph.edges():
            if i == j:
                continue
            edges.add((i, j))
            if symmetrize or not graph.is_directed():
                edges.add((j, i))
        return cls(n_ord=n_ord, edges=frozenset(edges), model_tag=model_tag)

    @classmethod
    def from_edge_list(
        cls,
        path: Union[str, Path],
        n_ord: Optional[int] = None,
        symmetrize: bool = True,
    ) -> "NetworkTopology":
        """
        Read a plain-text edge list with one ``i j [weight]`` per line, 0-based ids,
        and ``#`` comment lines. The optional weight column is ignored; trust weights
        are drawn by :func:`build_trust_matrix`. Self-loops are dropped.
        """
        graph = nx.read_edgelist(
            path, comments="#", nodetype=int, create_using=nx.DiGraph, data=False
        )
        return cls.from_networkx(graph, n_ord=n_ord, symmetrize=symmetrize)


@dataclass(frozen=True)
class BipartiteSupport:
    """
    Stubborn-to-ordinary adjacency: ``(i, j)`` means ordinary agent ``i`` listens to
    stubborn agent ``j``. The placement generators guarantee every ordinary agent has
    at least one stubborn neighbor.
    """

    n_ord: int
    n_s: int
    edges: FrozenSet[Edge] = field(default_factory=frozenset)

    def __post_init__(self):
        edges = _freeze_edges(self.edges)
        object.__setattr__(self, "edges", edges)
        for i, j in edges:
            if not (0 <= i < self.n_ord and 0 <= j < self.n_s):
                raise InvalidParameterError(
                    f"Bipartite edge ({i}, {j}) is outside [0, {self.n_ord}) x [0, {self.n_s})"
                )

    def mask(self) -> np.ndarray:
        mask = np.zeros((self.n_ord, self.n_s), dtype=bool)
        if self.edges:
            rows, cols = zip(*self.edges)
            mask[list(rows), list(cols)] = True
        return mask

    def row_degrees(self) -> np.ndarray:
        return self.mask().sum(axis=1)

    def empty_rows(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.row_degrees() == 0))

    def neighbors(self, i: int) -> FrozenSet[int]:
        return frozenset(j for row, j in self.edges if row == i)

    def is_d_regular(self, d: Optional[int] = None) -> bool:
        degrees = self.row_degrees()
        if degrees.size == 0:
            return True
        target = int(degrees[0]) if d is None else d
        return bool(np.all(degrees == target))

    @classmethod
    def from_mask(cls, mask: ArrayLike) -> "BipartiteSupport":
        mask = np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask)
        return cls(
            n_ord=mask.shape[0],
            n_s=mask.shape[1],
            edges=frozenset(zip(rows.tolist(), cols.tolist())),
        )


@dataclass(frozen=True, eq=False)
class TrustMatrix:
    """
    The ordinary rows of the trust matrix: ``B`` is ``n_ord x n_s`` and ``D`` is
    ``n_ord x n_ord``. Both are nonnegative and ``B 1 + D 1 = 1`` row-wise for a valid
    matrix (see :func:`validate_trust_matrix`).
    """

    B: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        D = np.array(self.D, dtype=float)
        if B.ndim != 2 or D.ndim != 2:
            raise DimensionMismatchError("B and D must be two-dimensional")
        if D.shape[0] != D.shape[1] or D.shape[0] != B.shape[0]:
            raise DimensionMismatchError(
                f"Inconsistent block shapes: B is {B.shape}, D is {D.shape}"
            )
        if (B < 0).any() or (D < 0).any():
            raise InvalidParameterError("Trust weights must be nonnegative")
        B.flags.writeable = False
        D.flags.writeable = False
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "D", D)

    @property
    def n_ord(self) -> int:
        return self.D.shape[0]

    @property
    def n_s(self) -> int:
        return self.B.shape[1]

    def row_sums(self) -> np.ndarray:
        return self.B.sum(axis=1) + self.D.sum(axis=1)

    def row_sum_residual(self) -> float:
        if self.n_ord == 0:
            return 0.0
        return float(np.max(np.abs(self.row_sums() - 1.0)))

    def full_matrix(self) -> np.ndarray:
        """The complete ``(n_s + n_ord)`` square trust matrix, stubborn agents first."""
        n_s, n_ord = self.n_s, self.n_ord
        full = np.zeros((n_s + n_ord, n_s + n_ord))
        full[:n_s, :n_s] = np.eye(n_s)
        full[n_s:, :n_s] = self.B
        full[n_s:, n_s:] = self.D
        return full

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_ord": self.n_ord,
            "n_s": self.n_s,
            "B": self.B.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "TrustMatrix":
        n_ord, n_s = int(payload["n_ord"]), int(payload["n_s"])
        B = np.asarray(payload["B"], dtype=float).reshape(n_ord, n_s)
        D = np.asarray(payload["D"], dtype=float).reshape(n_ord, n_ord)
        return cls(B=B, D=D)


@dataclass(frozen=True, eq=False)
class RelativeTrustPair:
    """Canonical representative ``(B', D')`` of an ambiguity class, pinned by ``diag(D') = c``."""

    B: np.ndarray
    D: np.ndarray
    c: np.ndarray

    def to_trust_matrix(self) -> TrustMatrix:
        return TrustMatrix(B=self.B, D=self.D)


@dataclass(frozen=True)
class ValidationReport:
    row_sum_residual: float
    is_row_stochastic: bool
    is_nonnegative: bool
    support_B_respected: bool
    support_D_respected: bool
    satisfies_assumption_2: bool
    rows_without_stubborn: Tuple[int, ...]
    weakly_connected: bool
    strongly_connected: bool
    spectral_norm_D: float
    spectral_radius_D: float

    @property
    def passed(self) -> bool:
        return (
            self.is_row_stochastic
            and self.is_nonnegative
            and self.support_B_respected
            and self.support_D_respected
            and self.satisfies_assumption_2
            and self.weakly_connected
            and self.spectral_radius_D < 1.0
        )


@dataclass(frozen=True)
class NetworkInstance:
    topology: NetworkTopology
    support: BipartiteSupport
    trust: TrustMatrix


# Operations ---------------------------------------------------------------------------


def gen_network(model: NetworkModel, n_ord: int, seed: Seed = None) -> NetworkTopology:
    """
    Generate an ordinary-agent topology. ER/BA/WS graphs are generated undirected and
    every undirected edge becomes two directed edges, so that the independently drawn
    weights make the trust matrix asymmetric in general.
    """
    if n_ord < 2:
        raise InvalidParameterError(f"n_ord must be >= 2, got {n_ord}")
    nx_seed = int_seed(seed)
    if isinstance(model, ErdosRenyi):
        graph = nx.gnp_random_graph(n_ord, model.p, seed=nx_seed)
    elif isinstance(model, BarabasiAlbert):
        if model.m >= n_ord:
            raise InvalidParameterError(
                f"BA attachment m={model.m} must be smaller than n_ord={n_ord}"
            )
        graph = nx.barabasi_albert_graph(n_ord, model.m, seed=nx_seed)
    elif isinstance(model, WattsStrogatz):
        if 2 * model.b >= n_ord:
            raise InvalidParameterError(
                f"WS ring needs 2*b < n_ord, got b={model.b} and n_ord={n_ord}"
            )
        graph = nx.watts_strogatz_graph(n_ord, 2 * model.b, model.p_rewire, seed=nx_seed)
    else:
        raise InvalidParameterError(f"Unsupported network model {model!r}")
    return NetworkTopology.from_networkx(graph, n_ord=n_ord, model_tag=model.tag)


def place_stubborn(
    n_ord: int, n_s: int, mode: Placement, seed: Seed = None
) -> BipartiteSupport:
    """
    Choose which stubborn agents every ordinary agent listens to.

    ``DRegular(d)`` gives every ordinary agent exactly ``d`` distinct stubborn
    neighbors drawn without replacement. ``ErBipartite(p_s)`` includes each pair
    independently with probability ``p_s`` and then gives every empty row one
    uniformly chosen neighbor so that nobody is left without a stubborn neighbor.
    """
    if n_s < 1:
        raise InvalidParameterError(f"n_s must be >= 1, got {n_s}")
    if n_ord < 1:
        raise InvalidParameterError(f"n_ord must be >= 1, got {n_ord}")
    rng = np.random.default_rng(seed)
    if isinstance(mode, DRegular):
        if mode.d > n_s:
            raise InvalidParameterError(
                f"Placement degree d={mode.d} exceeds the number of stubborn agents {n_s}"
            )
        mask = np.zeros((n_ord, n_s), dtype=bool)
        for i in range(n_ord):
            mask[i, rng.choice(n_s, size=mode.d, replace=False)] = True
    elif isinstance(mode, ErBipartite):
        mask = rng.random((n_ord, n_s)) < mode.p_s
        empty = np.flatnonzero(~mask.any(axis=1))
        if empty.size:
            logger.debug("Repairing %d ordinary agents without stubborn neighbors", empty.size)
            mask[empty, rng.integers(n_s, size=empty.size)] = True
    else:
        raise InvalidParameterError(f"Unsupported placement {mode!r}")
    return BipartiteSupport.from_mask(mask)


def build_trust_matrix(
    topology: NetworkTopology, support: BipartiteSupport, seed: Seed = None
) -> TrustMatrix:
    """
    Draw weights uniformly from ``(0, 1]`` on the declared supports, keep zero
    self-trust, and divide every row by its sum.
    """
    if topology.n_ord != support.n_ord:
        raise DimensionMismatchError(
            f"Topology has {topology.n_ord} ordinary agents, support has {support.n_ord}"
        )
    rng = np.random.default_rng(seed)
    mask_B = support.mask()
    mask_D = topology.adjacency()
    # 1 - U[0, 1) lies in (0, 1], so no declared edge ends up with zero weight.
    weights_B = np.where(mask_B, 1.0 - rng.random(mask_B.shape), 0.0)
    weights_D = np.where(mask_D, 1.0 - rng.random(mask_D.shape), 0.0)
    totals = weights_B.sum(axis=1) + weights_D.sum(axis=1)
    isolated = np.flatnonzero(totals == 0.0)
    if isolated.size:
        raise InfeasibleProblemError(
            f"Ordinary agents {isolated.tolist()} have no neighbors at all, so their"
            " trust row cannot be normalized"
        )
    return TrustMatrix(B=weights_B / totals[:, None], D=weights_D / totals[:, None])


def generate_instance(
    network: NetworkModel,
    placement: Placement,
    n_ord: int,
    n_s: int,
    seed: Seed = None,
) -> NetworkInstance:
    """Topology, placement and weights from three independent child streams of ``seed``."""
    topology_seq, support_seq, weight_seq = np.random.SeedSequence(int_seed(seed)).spawn(3)
    topology = gen_network(network, n_ord, seed=topology_seq)
    support = place_stubborn(n_ord, n_s, placement, seed=support_seq)
    trust = build_trust_matrix(topology, support, seed=weight_seq)
    return NetworkInstance(topology=topology, support=support, trust=trust)


def _check_row_stochastic(B: np.ndarray, D: np.ndarray, tol: float) -> None:
    residual = np.abs(B.sum(axis=1) + D.sum(axis=1) - 1.0)
    if residual.size and residual.max() > tol:
        raise InvalidParameterError(
            f"Trust rows must sum to one (max residual {residual.max():.3e})"
        )


def apply_ambiguity(
    B: ArrayLike, D: ArrayLike, scaling: ArrayLike
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Move ``(B, D)`` inside its ambiguity class: scale the off-diagonal trust of row
    ``i`` by ``scaling[i]`` and reset the self-trust so rows still sum to one. Both
    pairs produce the same steady state ``(I - D)^-1 B``.

    Raises
    ------
    AmbiguityOutOfClassError
        If the rescaled self-trust of some row would be negative.
    """
    B = np.asarray(B, dtype=float)
    D = np.asarray(D, dtype=float)
    scaling = np.broadcast_to(np.asarray(scaling, dtype=float), (D.shape[0],))
    if (scaling <= 0).any():
        raise InvalidParameterError("Ambiguity scaling must be strictly positive")
    _check_row_stochastic(B, D, INPUT_ROW_SUM_TOLERANCE)
    off = offdiag(D)
    new_diag = 1.0 - scaling * (B.sum(axis=1) + off.sum(axis=1))
    if (new_diag < -ROW_SUM_TOLERANCE).any():
        rows = np.flatnonzero(new_diag < -ROW_SUM_TOLERANCE).tolist()
        raise AmbiguityOutOfClassError(
            f"Scaling is out of the ambiguity class: self-trust of rows {rows} would be"
            " negative"
        )
    B_scaled = scaling[:, None] * B
    D_scaled = scaling[:, None] * off
    np.fill_diagonal(D_scaled, np.clip(new_diag, 0.0, None))
    return B_scaled, D_scaled


def canonical_relative_trust(
    B: ArrayLike, D: ArrayLike, c: Union[float, ArrayLike] = 0.0
) -> RelativeTrustPair:
    """
    Canonical relative trust ``B' = (I - Diag(c)) Lambda_s^-1 B`` with
    ``Lambda_s = I - Diag(diag(D))``; the off-diagonal of ``D`` is rescaled the same
    way and its diagonal is pinned to ``c``.
    """
    B = np.asarray(B, dtype=float)
    D = np.asarray(D, dtype=float)
    n_ord = D.shape[0]
    c = np.array(np.broadcast_to(np.asarray(c, dtype=float), (n_ord,)))
    if ((c < 0) | (c >= 1)).any():
        raise InvalidParameterError("Diagonal target c must lie in [0, 1)")
    _check_row_stochastic(B, D, INPUT_ROW_SUM_TOLERANCE)
    self_trust = np.diag(D)
    if (self_trust >= 1.0).any():
        rows = np.flatnonzero(self_trust >= 1.0).tolist()
        raise SingularSystemError(
            f"Rows {rows} have full self-trust, so the relative trust is undefined"
        )
    scale = (1.0 - c) / (1.0 - self_trust)
    B_rel = scale[:, None] * B
    D_rel = scale[:, None] * offdiag(D)
    np.fill_diagonal(D_rel, c)
    return RelativeTrustPair(B=B_rel, D=D_rel, c=c)


def relative_trust_of(trust: TrustMatrix, c: Union[float, ArrayLike] = 0.0) -> RelativeTrustPair:
    return canonical_relative_trust(trust.B, trust.D, c)


def validate_trust_matrix(
    W: TrustMatrix,
    topology: Optional[NetworkTopology] = None,
    support: Optional[BipartiteSupport] = None,
) -> ValidationReport:
    """
    Report-only validation of a trust matrix against its declared structure. When
    ``topology`` or ``support`` are omitted they are read off the matrix itself.
    """
    if topology is None:
        topology = NetworkTopology(
            n_ord=W.n_ord,
            edges=frozenset(zip(*(idx.tolist() for idx in np.nonzero(offdiag(W.D) > 0)))),
        )
    if support is None:
        support = BipartiteSupport.from_mask(W.B > 0)

    residual = W.row_sum_residual()
    b_outside = (W.B > 0) & ~support.mask()
    d_outside = (offdiag(W.D) > 0) & ~topology.adjacency()
    rows_without_stubborn = tuple(int(i) for i in np.flatnonzero(~(W.B > 0).any(axis=1)))

    graph = topology.to_networkx()
    if graph.number_of_nodes() == 0:
        weakly, strongly = True, True
    else:
        weakly = nx.is_weakly_connected(graph)
        strongly = nx.is_strongly_connected(graph)

    report = ValidationReport(
        row_sum_residual=residual,
        is_row_stochastic=residual <= ROW_SUM_TOLERANCE,
        is_nonnegative=bool((W.B >= 0).all() and (W.D >= 0).all()),
        support_B_respected=not bool(b_outside.any()),
        support_D_respected=not bool(d_outside.any()),
        satisfies_assumption_2=not rows_without_stubborn,
        rows_without_stubborn=rows_without_stubborn,
        weakly_connected=weakly,
        strongly_connected=strongly,
        spectral_norm_D=spectral_norm(W.D),
        spectral_radius_D=spectral_radius(W.D),
    )
    if not report.passed:
        logger.info("Trust matrix failed validation: %s", report)
    return report
