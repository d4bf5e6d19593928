"""Mutable directed graph with dual adjacency, vertex features and update events.

Adjacency is kept as ``dict[vertex, dict[neighbor, weight]]`` in both directions so
that every mutation costs O(degree) at worst and never triggers a structure rebuild.
Features live in a growable dense float64 matrix indexed by vertex id.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import (
    BatchError,
    DimensionMismatch,
    DuplicateEdge,
    DuplicateVertex,
    EmptyGraph,
    IncGNNError,
    MissingEdge,
    MissingVertex,
    ParseError,
)

# ---------------------------------------------------------------------------
# update events


@dataclass(frozen=True)
class EdgeAdd:
    u: int
    v: int
    weight: float = 1.0
    seq: int = 0
    code = "EA"


@dataclass(frozen=True)
class EdgeDel:
    u: int
    v: int
    seq: int = 0
    code = "ED"


@dataclass(frozen=True)
class VertexAdd:
    u: int
    features: tuple[float, ...] | None = None
    seq: int = 0
    code = "VA"


@dataclass(frozen=True)
class VertexDel:
    u: int
    seq: int = 0
    code = "VD"


@dataclass(frozen=True)
class FeatureUpdate:
    u: int
    features: tuple[float, ...] = ()
    seq: int = 0
    code = "FU"


UpdateEvent = Union[EdgeAdd, EdgeDel, VertexAdd, VertexDel, FeatureUpdate]

EDGE_ADDED = "edge_added"
EDGE_DELETED = "edge_deleted"
FEATURE_CHANGED = "feature_changed"
SELF = "self"


@dataclass(frozen=True, eq=False)
class Seed:
    """Start of a hop-0 -> hop-1 propagation: ``root`` influences ``target``."""

    root: int
    kind: str
    target: int
    weight: float = 1.0
    old: np.ndarray | None = None
    new: np.ndarray | None = None


@dataclass
class ApplyResult:
    seeds: list[Seed] = field(default_factory=list)
    removed_edges: list[tuple[int, int, float]] = field(default_factory=list)
    created: list[int] = field(default_factory=list)
    structural: dict[str, int] = field(default_factory=dict)


def event_roots(e: UpdateEvent) -> tuple[int, ...]:
    """Vertices an event is incident on, source first."""
    if isinstance(e, (EdgeAdd, EdgeDel)):
        return (e.u, e.v)
    return (e.u,)


# ---------------------------------------------------------------------------
# graph


class DynamicGraph:
    """Directed graph; ``out_adj`` and ``in_adj`` mirror each other exactly."""

    def __init__(self, d0: int, capacity: int = 16):
        if d0 < 1:
            raise DimensionMismatch(f"feature width must be positive, got {d0}")
        self.d0 = d0
        self.out_adj: dict[int, dict[int, float]] = {}
        self.in_adj: dict[int, dict[int, float]] = {}
        self._feat = np.zeros((max(capacity, 1), d0), dtype=np.float64)
        self.n_edges = 0
        self.next_id = 0

    # -- basic queries -----------------------------------------------------

    @property
    def vertices(self):
        return self.out_adj.keys()

    def __contains__(self, u: int) -> bool:
        return u in self.out_adj

    def __len__(self) -> int:
        return len(self.out_adj)

    @property
    def num_vertices(self) -> int:
        return len(self.out_adj)

    @property
    def num_edges(self) -> int:
        return self.n_edges

    @property
    def capacity(self) -> int:
        return self._feat.shape[0]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.out_adj.get(u)
        return nb is not None and v in nb

    def weight(self, u: int, v: int) -> float:
        try:
            return self.out_adj[u][v]
        except KeyError:
            raise MissingEdge(f"no edge {u}->{v}") from None

    def in_degree(self, v: int) -> int:
        return len(self.in_adj[v])

    def out_degree(self, v: int) -> int:
        return len(self.out_adj[v])

    def sorted_vertices(self) -> list[int]:
        return sorted(self.out_adj)

    def neighbors(self, v: int, direction: str = "out") -> list[tuple[int, float]]:
        """Copy of the adjacency list of ``v``, sorted by neighbor id."""
        adj = self._adj(direction)
        if v not in adj:
            raise MissingVertex(f"vertex {v} not in graph")
        return sorted(adj[v].items())

    def _adj(self, direction: str) -> dict[int, dict[int, float]]:
        if direction == "out":
            return self.out_adj
        if direction == "in":
            return self.in_adj
        raise ValueError(f"direction must be 'in' or 'out', not {direction!r}")

    def edges(self) -> Iterator[tuple[int, int, float]]:
        for u in sorted(self.out_adj):
            for v, w in sorted(self.out_adj[u].items()):
                yield u, v, w

    def degree_stats(self) -> tuple[float, dict[int, int]]:
        """Average in-degree ``|E|/|V|`` and the per-vertex in-degrees."""
        if not self.out_adj:
            raise EmptyGraph("degree statistics of an empty graph")
        per_vertex = {v: len(nb) for v, nb in self.in_adj.items()}
        return self.n_edges / len(self.out_adj), per_vertex

    def avg_degree(self) -> float:
        return self.n_edges / len(self.out_adj) if self.out_adj else 0.0

    # -- features ----------------------------------------------------------

    def features(self, u: int) -> np.ndarray:
        if u not in self.out_adj:
            raise MissingVertex(f"vertex {u} not in graph")
        return self._feat[u].copy()

    def feature_rows(self, ids) -> np.ndarray:
        return self._feat[np.asarray(ids, dtype=np.int64)]

    def set_features(self, u: int, x) -> None:
        if u not in self.out_adj:
            raise MissingVertex(f"vertex {u} not in graph")
        self._feat[u] = self._check_features(x)

    def _check_features(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64).reshape(-1)
        if arr.shape[0] != self.d0:
            raise DimensionMismatch(f"feature vector has length {arr.shape[0]}, expected {self.d0}")
        return arr

    def _ensure_capacity(self, u: int) -> None:
        cap = self._feat.shape[0]
        if u < cap:
            return
        new_cap = max(cap * 2, u + 1)
        grown = np.zeros((new_cap, self.d0), dtype=np.float64)
        grown[:cap] = self._feat
        self._feat = grown

    # -- raw mutations -----------------------------------------------------

    def add_vertex(self, u: int, features=None) -> None:
        if u < 0:
            raise MissingVertex(f"vertex ids are non-negative, got {u}")
        if u in self.out_adj:
            raise DuplicateVertex(f"vertex {u} already exists")
        x = np.zeros(self.d0) if features is None else self._check_features(features)
        self._ensure_capacity(u)
        self._feat[u] = x
        self.out_adj[u] = {}
        self.in_adj[u] = {}
        if u >= self.next_id:
            self.next_id = u + 1

    def add_edge(self, u: int, v: int, weight: float = 1.0) -> None:
        if u not in self.out_adj:
            raise MissingVertex(f"edge source {u} not in graph")
        if v not in self.out_adj:
            raise MissingVertex(f"edge sink {v} not in graph")
        if v in self.out_adj[u]:
            raise DuplicateEdge(f"edge {u}->{v} already exists")
        w = float(weight)
        self.out_adj[u][v] = w
        self.in_adj[v][u] = w
        self.n_edges += 1

    def remove_edge(self, u: int, v: int) -> float:
        try:
            w = self.out_adj[u].pop(v)
        except KeyError:
            raise MissingEdge(f"no edge {u}->{v}") from None
        del self.in_adj[v][u]
        self.n_edges -= 1
        return w

    def remove_vertex(self, u: int) -> list[tuple[int, int, float]]:
        """Drop ``u`` and every incident edge; returns removed edges (out-edges first)."""
        if u not in self.out_adj:
            raise MissingVertex(f"vertex {u} not in graph")
        removed = []
        for v in sorted(self.out_adj[u]):
            removed.append((u, v, self.remove_edge(u, v)))
        for w in sorted(self.in_adj[u]):
            removed.append((w, u, self.remove_edge(w, u)))
        del self.out_adj[u]
        del self.in_adj[u]
        self._feat[u] = 0.0
        return removed

    # -- event application -------------------------------------------------

    def apply_event(self, e: UpdateEvent, auto_vertex_add: bool = False) -> ApplyResult:
        res = ApplyResult()
        if isinstance(e, EdgeAdd):
            for x in (e.u, e.v):
                if x not in self.out_adj:
                    if not auto_vertex_add:
                        raise MissingVertex(f"edge endpoint {x} not in graph")
                    self.add_vertex(x)
                    res.created.append(x)
            self.add_edge(e.u, e.v, e.weight)
            res.seeds.append(Seed(e.u, EDGE_ADDED, e.v, float(e.weight)))
            res.structural = {"edges_added": 1, "vertices_added": len(res.created)}
        elif isinstance(e, EdgeDel):
            for x in (e.u, e.v):
                if x not in self.out_adj:
                    raise MissingVertex(f"edge endpoint {x} not in graph")
            w = self.remove_edge(e.u, e.v)
            res.seeds.append(Seed(e.u, EDGE_DELETED, e.v, w))
            res.removed_edges.append((e.u, e.v, w))
            res.structural = {"edges_removed": 1}
        elif isinstance(e, VertexAdd):
            self.add_vertex(e.u, e.features)
            res.created.append(e.u)
            res.structural = {"vertices_added": 1}
        elif isinstance(e, VertexDel):
            removed = self.remove_vertex(e.u)
            res.removed_edges = removed
            res.seeds = [
                Seed(e.u, EDGE_DELETED, v, w) for (s, v, w) in removed if s == e.u and v != e.u
            ]
            res.structural = {"edges_removed": len(removed), "vertices_removed": 1}
        elif isinstance(e, FeatureUpdate):
            if e.u not in self.out_adj:
                raise MissingVertex(f"vertex {e.u} not in graph")
            new = self._check_features(e.features)
            old = self._feat[e.u].copy()
            self._feat[e.u] = new
            res.seeds = [
                Seed(e.u, FEATURE_CHANGED, v, w, old, new) for v, w in sorted(self.out_adj[e.u].items())
            ]
            res.seeds.append(Seed(e.u, SELF, e.u, 1.0, old, new))
            res.structural = {"features_changed": 1}
        else:
            raise TypeError(f"unknown event {e!r}")
        return res

    def validate(self, events: Sequence[UpdateEvent], auto_vertex_add: bool = False) -> None:
        """Check a whole batch against the current graph without mutating it.

        Raises :class:`BatchError` naming the first offending event.
        """
        ov = _Overlay(self)
        for i, e in enumerate(events):
            try:
                ov.step(e, auto_vertex_add)
            except IncGNNError as exc:
                raise BatchError(i, exc) from exc

    # -- misc --------------------------------------------------------------

    def copy(self) -> "DynamicGraph":
        g = DynamicGraph.__new__(DynamicGraph)
        g.d0 = self.d0
        g.out_adj = {u: dict(nb) for u, nb in self.out_adj.items()}
        g.in_adj = {u: dict(nb) for u, nb in self.in_adj.items()}
        g._feat = self._feat.copy()
        g.n_edges = self.n_edges
        g.next_id = self.next_id
        return g

    def check_mirror(self) -> bool:
        """Full cross-scan of both adjacencies (test helper, O(V+E))."""
        if self.out_adj.keys() != self.in_adj.keys():
            return False
        count = 0
        for u, nb in self.out_adj.items():
            for v, w in nb.items():
                if v not in self.in_adj or self.in_adj[v].get(u) != w:
                    return False
                count += 1
        back = sum(len(nb) for nb in self.in_adj.values())
        return count == back == self.n_edges

    def adjacency_state(self) -> tuple:
        """Hashable snapshot of topology and weights, for equality checks."""
        return tuple(self.edges()), tuple(sorted(self.out_adj))


class _Overlay:
    """Sparse record of pending changes used to pre-validate a batch."""

    def __init__(self, g: DynamicGraph):
        self.g = g
        self.added_v: set[int] = set()
        self.removed_v: set[int] = set()
        self.added_e: set[tuple[int, int]] = set()
        self.removed_e: set[tuple[int, int]] = set()

    def has_v(self, u: int) -> bool:
        if u in self.added_v:
            return True
        return u in self.g.out_adj and u not in self.removed_v

    def has_e(self, u: int, v: int) -> bool:
        if (u, v) in self.added_e:
            return True
        return (u, v) not in self.removed_e and self.g.has_edge(u, v) and u not in self.removed_v and v not in self.removed_v

    def _need(self, u: int) -> None:
        if not self.has_v(u):
            raise MissingVertex(f"vertex {u} not in graph")

    def step(self, e: UpdateEvent, auto_vertex_add: bool) -> None:
        g = self.g
        if isinstance(e, EdgeAdd):
            for x in (e.u, e.v):
                if not self.has_v(x):
                    if not auto_vertex_add:
                        raise MissingVertex(f"edge endpoint {x} not in graph")
                    if x < 0:
                        raise MissingVertex(f"vertex ids are non-negative, got {x}")
                    self.added_v.add(x)
            if self.has_e(e.u, e.v):
                raise DuplicateEdge(f"edge {e.u}->{e.v} already exists")
            if not np.isfinite(e.weight):
                raise DimensionMismatch(f"edge weight must be finite, got {e.weight}")
            self.removed_e.discard((e.u, e.v))
            self.added_e.add((e.u, e.v))
        elif isinstance(e, EdgeDel):
            self._need(e.u)
            self._need(e.v)
            if not self.has_e(e.u, e.v):
                raise MissingEdge(f"no edge {e.u}->{e.v}")
            self.added_e.discard((e.u, e.v))
            self.removed_e.add((e.u, e.v))
        elif isinstance(e, VertexAdd):
            if e.u < 0:
                raise MissingVertex(f"vertex ids are non-negative, got {e.u}")
            if self.has_v(e.u):
                raise DuplicateVertex(f"vertex {e.u} already exists")
            if e.features is not None and len(e.features) != g.d0:
                raise DimensionMismatch(f"feature vector has length {len(e.features)}, expected {g.d0}")
            self.added_v.add(e.u)
        elif isinstance(e, VertexDel):
            self._need(e.u)
            u = e.u
            self.added_e = {(a, b) for (a, b) in self.added_e if a != u and b != u}
            if u in g.out_adj:
                for v in g.out_adj[u]:
                    self.removed_e.add((u, v))
                for w in g.in_adj[u]:
                    self.removed_e.add((w, u))
            self.added_v.discard(u)
            if u in g.out_adj:
                self.removed_v.add(u)
        elif isinstance(e, FeatureUpdate):
            self._need(e.u)
            if len(e.features) != g.d0:
                raise DimensionMismatch(f"feature vector has length {len(e.features)}, expected {g.d0}")
        else:
            raise TypeError(f"unknown event {e!r}")


# ---------------------------------------------------------------------------
# files

_FEAT_MAGIC = b"IGNF"


def read_edges(path: str | Path) -> list[tuple[int, int, float]]:
    """Parse ``u v [w]`` lines; ``#`` starts a comment line."""
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ParseError(f"expected 'u v [w]', got {line!r}", lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise ParseError(f"bad number in {line!r}", lineno) from None
            if u < 0 or v < 0:
                raise ParseError("vertex ids must be non-negative", lineno)
            edges.append((u, v, w))
    return edges


def write_edges(path: str | Path, edges: Iterable[tuple[int, int, float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# directed\n")
        for u, v, w in edges:
            fh.write(f"{u} {v} {w!r}\n")


def read_features(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(ids, X)``. Binary files start with ``IGNF``; otherwise text.

    Text layout: header ``n d0`` then ``n`` rows ``id f_0 ... f_{d0-1}``.
    Binary layout (little-endian): magic, u32 version, u64 n, u32 d0,
    int64[n] ids, float64[n*d0] row-major features.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _FEAT_MAGIC:
        raw = path.read_bytes()
        _, version, n, d0 = struct.unpack_from("<4sIQI", raw, 0)
        if version != 1:
            raise ParseError(f"unsupported feature file version {version}")
        off = struct.calcsize("<4sIQI")
        ids = np.frombuffer(raw, dtype="<i8", count=n, offset=off).astype(np.int64)
        off += 8 * n
        X = np.frombuffer(raw, dtype="<f8", count=n * d0, offset=off).reshape(n, d0).astype(np.float64)
        return ids, X
    rows: list[list[float]] = []
    ids_l: list[int] = []
    n = d0 = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if n is None:
                    n, d0 = int(parts[0]), int(parts[1])
                    continue
                if len(parts) != d0 + 1:
                    raise DimensionMismatch(f"line {lineno}: expected id plus {d0} features, got {len(parts)} fields")
                ids_l.append(int(parts[0]))
                rows.append([float(x) for x in parts[1:]])
            except (ValueError, IndexError):
                raise ParseError(f"malformed feature line {line!r}", lineno) from None
    if n is None:
        raise ParseError("feature file has no header")
    if len(rows) != n:
        raise ParseError(f"header declares {n} rows, found {len(rows)}")
    return np.asarray(ids_l, dtype=np.int64), np.asarray(rows, dtype=np.float64).reshape(n, d0)


def write_features(path: str | Path, ids, X, binary: bool = False) -> None:
    ids = np.asarray(ids, dtype=np.int64)
    X = np.asarray(X, dtype=np.float64)
    n, d0 = X.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sIQI", _FEAT_MAGIC, 1, n, d0))
            fh.write(ids.astype("<i8").tobytes())
            fh.write(X.astype("<f8").tobytes())
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {d0}\n")
        for i, row in zip(ids, X):
            fh.write(" ".join([str(int(i))] + [repr(float(x)) for x in row]) + "\n")


def build_graph(ids, X, edges: Iterable[tuple[int, int, float]]) -> DynamicGraph:
    X = np.asarray(X, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    cap = int(ids.max()) + 1 if len(ids) else 1
    g = DynamicGraph(X.shape[1], capacity=cap)
    for i, row in zip(ids.tolist(), X):
        g.add_vertex(i, row)
    for u, v, w in edges:
        g.add_edge(u, v, w)
    return g


def read_graph(edges_path: str | Path, features_path: str | Path) -> DynamicGraph:
    ids, X = read_features(features_path)
    edges = read_edges(edges_path)
    known = set(ids.tolist())
    for u, v, _ in edges:
        for x in (u, v):
            if x not in known:
                raise MissingVertex(f"edge endpoint {x} has no feature row")
    return build_graph(ids, X, edges)


def write_graph(g: DynamicGraph, edges_path: str | Path, features_path: str | Path, binary: bool = False) -> None:
    ids = g.sorted_vertices()
    write_edges(edges_path, g.edges())
    write_features(features_path, ids, g.feature_rows(ids) if ids else np.zeros((0, g.d0)), binary=binary)
