"""Causal graph, coupling matrices and the flat parameter layout.

Nodes are indexed from 0 internally. Labels (``B1``, ``B2``, ...) and
report output use 1-based numbering.

A coupling ``A[m][e, c]`` is the influence of cause ``c`` on effect ``e``
at lag ``m``; ``m = 0`` is the instantaneous (structural) term.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

Edge = tuple[int, int]  # (cause, effect)


class GraphError(ValueError):
    """Raised when a graph or coupling set is malformed."""


@dataclass(frozen=True)
class CausalGraph:
    node_count: int
    lag_order: int
    inst_edges: frozenset[Edge] = frozenset()
    lag_edges: tuple[frozenset[Edge], ...] = ()
    node_labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inst_edges", frozenset(tuple(e) for e in self.inst_edges))
        lag_edges = tuple(frozenset(tuple(e) for e in s) for s in self.lag_edges)
        if len(lag_edges) < self.lag_order:
            lag_edges = lag_edges + (frozenset(),) * (self.lag_order - len(lag_edges))
        if len(lag_edges) != self.lag_order:
            raise GraphError(
                f"lag_edges has {len(lag_edges)} entries for lag_order {self.lag_order}"
            )
        object.__setattr__(self, "lag_edges", lag_edges)
        if not self.node_labels:
            labels = tuple(f"B{i + 1}" for i in range(self.node_count))
            object.__setattr__(self, "node_labels", labels)
        else:
            object.__setattr__(self, "node_labels", tuple(self.node_labels))
        if len(self.node_labels) != self.node_count:
            raise GraphError("node_labels length does not match node_count")

    def edges(self, lag: int) -> frozenset[Edge]:
        if lag == 0:
            return self.inst_edges
        return self.lag_edges[lag - 1]

    def mask(self, lag: int) -> np.ndarray:
        """Boolean ``G x G`` matrix, ``mask[e, c]`` true where edge ``c -> e`` exists."""
        out = np.zeros((self.node_count, self.node_count), dtype=bool)
        for c, e in self.edges(lag):
            out[e, c] = True
        return out

    def masks(self) -> np.ndarray:
        return np.stack([self.mask(m) for m in range(self.lag_order + 1)])

    @property
    def edge_count(self) -> int:
        return sum(len(self.edges(m)) for m in range(self.lag_order + 1))

    def index(self, node: int | str) -> int:
        """Resolve a label or a 1-based integer to a 0-based node index."""
        if isinstance(node, str):
            if node in self.node_labels:
                return self.node_labels.index(node)
            try:
                node = int(node)
            except ValueError:
                raise GraphError(f"unknown node {node!r}") from None
        idx = int(node) - 1
        if not 0 <= idx < self.node_count:
            raise GraphError(f"node {node} out of range 1..{self.node_count}")
        return idx

    def topological_order(self) -> list[int]:
        order = _topological_order(self.node_count, self.inst_edges)
        if order is None:
            raise GraphError("instantaneous edges contain a cycle")
        return order

    def without_edges(self, edges: Iterable[tuple[int, int, int]]) -> "CausalGraph":
        """Copy with the given ``(cause, effect, lag)`` edges deleted."""
        drop: dict[int, set[Edge]] = {}
        for c, e, m in edges:
            drop.setdefault(m, set()).add((c, e))
        inst = self.inst_edges - drop.get(0, set())
        lagged = tuple(s - drop.get(m + 1, set()) for m, s in enumerate(self.lag_edges))
        return CausalGraph(self.node_count, self.lag_order, inst, lagged, self.node_labels)


def _topological_order(n: int, edges: Iterable[Edge]) -> list[int] | None:
    # Kahn's algorithm; smallest available index first so the order is deterministic.
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    indeg = [0] * n
    for c, e in edges:
        if 0 <= c < n and 0 <= e < n and c != e:
            children[c].append(e)
            indeg[e] += 1
    ready = sorted(i for i in range(n) if indeg[i] == 0)
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for child in sorted(children[node]):
            indeg[child] -= 1
            if indeg[child] == 0:
                ready.append(child)
                ready.sort()
    if len(order) != n:
        return None
    return order


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_graph(graph: CausalGraph) -> ValidationReport:
    """Collect structural violations without raising.

    Checks index range, self-edges, and acyclicity of the instantaneous
    edges. Lagged edges may form feedback loops.
    """
    report = ValidationReport()
    n = graph.node_count
    if n < 1:
        report.violations.append("node_count must be positive")
    if graph.lag_order < 0:
        report.violations.append("lag_order must be non-negative")
    for m in range(graph.lag_order + 1):
        for c, e in sorted(graph.edges(m)):
            if not (0 <= c < n and 0 <= e < n):
                report.violations.append(f"index out of range: edge ({c}, {e}) at lag {m}")
            elif c == e:
                report.violations.append(f"self-edge on node {c + 1} at lag {m}")
    if _topological_order(n, graph.inst_edges) is None:
        report.violations.append("cycle in instantaneous edges")
    return report


@dataclass(frozen=True)
class CouplingSet:
    """Stack of ``M + 1`` coupling matrices, shape ``(M + 1, G, G)``."""

    matrices: np.ndarray

    def __post_init__(self):
        a = np.array(self.matrices, dtype=float)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise GraphError(f"coupling stack must be (M+1, G, G), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise GraphError("couplings must be finite")
        if np.any(np.einsum("mii->mi", a) != 0.0):
            raise GraphError("coupling matrices must have zero diagonals")
        a.setflags(write=False)
        object.__setattr__(self, "matrices", a)

    @classmethod
    def zeros(cls, node_count: int, lag_order: int) -> "CouplingSet":
        return cls(np.zeros((lag_order + 1, node_count, node_count)))

    @classmethod
    def from_edges(cls, graph: CausalGraph, values: dict[tuple[int, int, int], float]) -> "CouplingSet":
        """Build from ``{(cause, effect, lag): k}`` with 0-based indices."""
        a = np.zeros((graph.lag_order + 1, graph.node_count, graph.node_count))
        for (c, e, m), k in values.items():
            if (c, e) not in graph.edges(m):
                raise GraphError(f"edge {c + 1}->{e + 1} at lag {m} not in graph")
            a[m, e, c] = k
        return cls(a)

    @property
    def lag_order(self) -> int:
        return self.matrices.shape[0] - 1

    @property
    def node_count(self) -> int:
        return self.matrices.shape[1]

    def __getitem__(self, lag: int) -> np.ndarray:
        return self.matrices[lag]

    def respects(self, graph: CausalGraph) -> bool:
        if self.matrices.shape != (graph.lag_order + 1, graph.node_count, graph.node_count):
            return False
        return not np.any(self.matrices[~graph.masks()] != 0.0)

    def scaled(self, factor: float) -> "CouplingSet":
        return CouplingSet(self.matrices * factor)

    def __eq__(self, other):
        if not isinstance(other, CouplingSet):
            return NotImplemented
        return self.matrices.shape == other.matrices.shape and bool(
            np.array_equal(self.matrices, other.matrices)
        )

    __hash__ = None


@dataclass(frozen=True)
class ParamLayout:
    """Ordered ``(lag, effect, cause)`` triples for the free couplings."""

    node_count: int
    lag_order: int
    triples: tuple[tuple[int, int, int], ...]

    @classmethod
    def from_graph(cls, graph: CausalGraph) -> "ParamLayout":
        triples = []
        for m in range(graph.lag_order + 1):
            triples.extend((m, e, c) for c, e in graph.edges(m))
        triples.sort()
        return cls(graph.node_count, graph.lag_order, tuple(triples))

    @property
    def size(self) -> int:
        return len(self.triples)

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.array(self.triples, dtype=int).reshape(-1, 3)
        return t[:, 0], t[:, 1], t[:, 2]

    def labels(self, node_labels: Sequence[str] | None = None) -> list[str]:
        """Human-readable names such as ``k1<-3@1`` (effect, cause, lag)."""
        names = node_labels or [str(i + 1) for i in range(self.node_count)]
        return [f"k{names[e]}<-{names[c]}@{m}" for m, e, c in self.triples]

    def matches(self, graph: CausalGraph) -> bool:
        return self == ParamLayout.from_graph(graph)


def flatten(couplings: CouplingSet, layout: ParamLayout) -> np.ndarray:
    a = couplings.matrices
    if a.shape != (layout.lag_order + 1, layout.node_count, layout.node_count):
        raise GraphError(f"coupling shape {a.shape} does not match layout")
    m, e, c = layout.index_arrays()
    vec = a[m, e, c].copy()
    mask = np.zeros(a.shape, dtype=bool)
    mask[m, e, c] = True
    if np.any(a[~mask] != 0.0):
        raise GraphError("couplings have non-zero entries outside the layout")
    return vec


def unflatten(vec, layout: ParamLayout) -> CouplingSet:
    return CouplingSet(unflatten_array(vec, layout))


def unflatten_array(vec, layout: ParamLayout) -> np.ndarray:
    """Like :func:`unflatten` but returns a bare array and keeps the dtype.

    A leading batch axis is allowed: ``vec`` of shape ``(B, Q)`` gives
    ``(B, M + 1, G, G)``. Complex input stays complex, which the
    complex-step Jacobian relies on.
    """
    vec = np.asarray(vec)
    if vec.shape[-1] != layout.size:
        raise GraphError(f"parameter vector length {vec.shape[-1]} != layout size {layout.size}")
    dtype = np.result_type(vec.dtype, float)
    shape = vec.shape[:-1] + (layout.lag_order + 1, layout.node_count, layout.node_count)
    out = np.zeros(shape, dtype=dtype)
    m, e, c = layout.index_arrays()
    out[..., m, e, c] = vec
    return out


# -- graph file -------------------------------------------------------------


def graph_to_dict(graph: CausalGraph) -> dict:
    grouped: dict[Edge, list[int]] = {}
    for m in range(graph.lag_order + 1):
        for edge in graph.edges(m):
            grouped.setdefault(edge, []).append(m)
    edges = [
        {
            "cause": graph.node_labels[c],
            "effect": graph.node_labels[e],
            "lags": sorted(lags),
        }
        for (c, e), lags in sorted(grouped.items(), key=lambda kv: (kv[0][1], kv[0][0]))
    ]
    return {"nodes": list(graph.node_labels), "lag_order": graph.lag_order, "edges": edges}


def graph_from_dict(doc: dict) -> CausalGraph:
    try:
        labels = [str(x) for x in doc["nodes"]]
        lag_order = int(doc["lag_order"])
        raw_edges = doc["edges"]
    except KeyError as exc:
        raise GraphError(f"graph document missing field {exc}") from None
    n = len(labels)

    def resolve(node) -> int:
        if isinstance(node, str) and node in labels:
            return labels.index(node)
        try:
            idx = int(node) - 1
        except (TypeError, ValueError):
            raise GraphError(f"unknown node {node!r}") from None
        if not 0 <= idx < n:
            raise GraphError(f"node {node} out of range 1..{n}")
        return idx

    inst: set[Edge] = set()
    lagged: list[set[Edge]] = [set() for _ in range(lag_order)]
    for item in raw_edges:
        c, e = resolve(item["cause"]), resolve(item["effect"])
        for m in item.get("lags", [0]):
            m = int(m)
            if m == 0:
                inst.add((c, e))
            elif 1 <= m <= lag_order:
                lagged[m - 1].add((c, e))
            else:
                raise GraphError(f"lag {m} outside 0..{lag_order}")
    return CausalGraph(n, lag_order, frozenset(inst), tuple(frozenset(s) for s in lagged), tuple(labels))


def load_graph(path: str | Path) -> CausalGraph:
    with open(path) as fh:
        return graph_from_dict(json.load(fh))


def save_graph(graph: CausalGraph, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(graph_to_dict(graph), fh, indent=2)
        fh.write("\n")
