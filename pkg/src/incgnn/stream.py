"""Trace files, batching and a seeded synthetic update stream.

Trace lines::

    EA u v [w]
    ED u v
    VA u f_0 ... f_{d0-1}
    VD u
    FU u f_0 ... f_{d0-1}

Blank lines and ``#`` comments are ignored.  Sequence numbers are assigned in
file order starting at 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, InfeasibleConfig, ParseError
from .graph import DynamicGraph, EdgeAdd, EdgeDel, FeatureUpdate, UpdateEvent, VertexAdd, VertexDel

KINDS = ("EA", "ED", "VA", "VD", "FU")


@dataclass
class TraceConfig:
    """Event mix and sampling options.

    The default mix is a documented stand-in (additions outweigh deletions so the
    graph keeps growing), not a measured production workload.
    """

    n_events: int = 1000
    p_ea: float = 0.55
    p_ed: float = 0.15
    p_va: float = 0.10
    p_vd: float = 0.02
    p_fu: float = 0.18
    seed: int = 0
    feature_low: float = -1.0
    feature_high: float = 1.0
    endpoints: str = "uniform"
    weighted: bool = False
    weight_low: float = 0.5
    weight_high: float = 2.0
    self_loops: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def probs(self) -> tuple[float, ...]:
        return (self.p_ea, self.p_ed, self.p_va, self.p_vd, self.p_fu)

    def validate(self) -> None:
        if any(p < 0 for p in self.probs):
            raise InfeasibleConfig("event probabilities must be non-negative")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise InfeasibleConfig(f"event probabilities sum to {sum(self.probs)}, not 1")
        if self.endpoints not in ("uniform", "degree"):
            raise InfeasibleConfig(f"unknown endpoint sampling {self.endpoints!r}")
        if self.n_events < 0:
            raise InfeasibleConfig("n_events must be non-negative")

    @classmethod
    def from_file(cls, path) -> "TraceConfig":
        """Read ``key = value`` lines; unknown keys are an error."""
        known = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected key = value, got {raw!r}", lineno)
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ParseError(f"unknown key {key!r}", lineno)
            kw[key] = _coerce(getattr(cls, key, None), val, lineno)
        return cls(**kw)


def _coerce(default, val: str, lineno: int):
    try:
        if isinstance(default, bool):
            if val.lower() in ("1", "true", "yes", "on"):
                return True
            if val.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(val)
        if isinstance(default, int):
            return int(val)
        if isinstance(default, float):
            return float(val)
    except ValueError:
        raise ParseError(f"bad value {val!r}", lineno) from None
    return val


# ---------------------------------------------------------------------------
# parsing / writing


def _floats(parts: Sequence[str], lineno: int) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ParseError(f"non-numeric feature in {parts!r}", lineno) from None


def _vid(tok: str, lineno: int) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise ParseError(f"bad vertex id {tok!r}", lineno) from None
    if v < 0:
        raise ParseError(f"negative vertex id {v}", lineno)
    return v


def parse_lines(lines: Iterable[str], d0: int | None = None) -> Iterator[UpdateEvent]:
    seq = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].upper()
        args = parts[1:]
        if kind == "EA":
            if len(args) not in (2, 3):
                raise ParseError(f"EA takes 2 or 3 fields, got {len(args)}", lineno)
            w = _floats(args[2:], lineno)[0] if len(args) == 3 else 1.0
            if not math.isfinite(w):
                raise ParseError("edge weight must be finite", lineno)
            ev = EdgeAdd(_vid(args[0], lineno), _vid(args[1], lineno), w, seq)
        elif kind == "ED":
            if len(args) != 2:
                raise ParseError(f"ED takes 2 fields, got {len(args)}", lineno)
            ev = EdgeDel(_vid(args[0], lineno), _vid(args[1], lineno), seq)
        elif kind in ("VA", "FU"):
            if not args:
                raise ParseError(f"{kind} needs a vertex id", lineno)
            feats = _floats(args[1:], lineno)
            if kind == "VA" and not feats:
                feats = None
            elif d0 is None:
                d0 = len(feats)
            if feats is not None and len(feats) != d0:
                raise DimensionMismatch(f"line {lineno}: {kind} has {len(feats)} features, expected {d0}")
            u = _vid(args[0], lineno)
            ev = VertexAdd(u, feats, seq) if kind == "VA" else FeatureUpdate(u, feats, seq)
        elif kind == "VD":
            if len(args) != 1:
                raise ParseError(f"VD takes 1 field, got {len(args)}", lineno)
            ev = VertexDel(_vid(args[0], lineno), seq)
        else:
            raise ParseError(f"unknown event kind {parts[0]!r}", lineno)
        seq += 1
        yield ev


def parse_trace(path, d0: int | None = None) -> Iterator[UpdateEvent]:
    """Yield events from a trace file in order."""
    with open(path, "r", encoding="utf-8") as fh:
        yield from parse_lines(fh, d0)


def format_event(e: UpdateEvent) -> str:
    if isinstance(e, EdgeAdd):
        return f"EA {e.u} {e.v} {e.weight!r}"
    if isinstance(e, EdgeDel):
        return f"ED {e.u} {e.v}"
    if isinstance(e, VertexAdd):
        feats = "" if e.features is None else " " + " ".join(repr(float(x)) for x in e.features)
        return f"VA {e.u}{feats}"
    if isinstance(e, VertexDel):
        return f"VD {e.u}"
    if isinstance(e, FeatureUpdate):
        return f"FU {e.u} " + " ".join(repr(float(x)) for x in e.features)
    raise TypeError(f"unknown event {e!r}")


def write_trace(path, events: Iterable[UpdateEvent], header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for e in events:
            fh.write(format_event(e) + "\n")


def next_batch(it: Iterator[UpdateEvent], bs: int) -> list[UpdateEvent]:
    """Up to ``bs`` events from ``it``, order preserved."""
    if bs < 1:
        raise ValueError("batch size must be at least 1")
    return list(itertools.islice(it, bs))


def batches(events: Iterable[UpdateEvent], bs: int) -> Iterator[list[UpdateEvent]]:
    it = iter(events)
    while True:
        b = next_batch(it, bs)
        if not b:
            return
        yield b


# ---------------------------------------------------------------------------
# generator


class _Bag:
    """Set with O(1) insert, delete and uniform sampling."""

    def __init__(self, items=()):
        self.items: list = []
        self.pos: dict = {}
        for x in items:
            self.add(x)

    def add(self, x) -> None:
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x) -> None:
        i = self.pos.pop(x, None)
        if i is None:
            return
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i

    def sample(self, rng):
        return self.items[int(rng.integers(len(self.items)))]

    def __contains__(self, x) -> bool:
        return x in self.pos

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class _LiveState:
    d0: int
    vertices: _Bag
    edges: _Bag
    out_adj: dict
    in_adj: dict
    next_id: int
    holdout_vertices: list = field(default_factory=list)
    holdout_edges: list = field(default_factory=list)

    @classmethod
    def from_graph(cls, g: DynamicGraph) -> "_LiveState":
        edges = _Bag((u, v) for u, v, _ in g.edges())
        out_adj = {u: set(nb) for u, nb in g.out_adj.items()}
        in_adj = {u: set(nb) for u, nb in g.in_adj.items()}
        return cls(g.d0, _Bag(g.sorted_vertices()), edges, out_adj, in_adj, g.next_id)

    def add_vertex(self, u):
        self.vertices.add(u)
        self.out_adj[u] = set()
        self.in_adj[u] = set()
        self.next_id = max(self.next_id, u + 1)

    def remove_vertex(self, u):
        for v in self.out_adj.pop(u):
            self.in_adj[v].discard(u)
            self.edges.discard((u, v))
        for w in self.in_adj.pop(u):
            if w in self.out_adj:
                self.out_adj[w].discard(u)
            self.edges.discard((w, u))
        self.vertices.discard(u)

    def add_edge(self, u, v):
        self.out_adj[u].add(v)
        self.in_adj[v].add(u)
        self.edges.add((u, v))

    def remove_edge(self, u, v):
        self.out_adj[u].discard(v)
        self.in_adj[v].discard(u)
        self.edges.discard((u, v))


def _features(rng, cfg: TraceConfig, d0: int) -> tuple[float, ...]:
    return tuple(float(x) for x in rng.uniform(cfg.feature_low, cfg.feature_high, size=d0))


def _pick_sink(rng, st: _LiveState, cfg: TraceConfig):
    if cfg.endpoints == "degree" and len(st.edges) and rng.random() < 0.5:
        return st.edges.sample(rng)[1]
    return st.vertices.sample(rng)


def _try_edge(rng, st: _LiveState, cfg: TraceConfig, attempts: int = 32):
    while st.holdout_edges:
        u, v = st.holdout_edges.pop()
        if u in st.out_adj and v in st.in_adj and v not in st.out_adj[u] and (cfg.self_loops or u != v):
            return u, v
    if len(st.vertices) == 0 or (len(st.vertices) < 2 and not cfg.self_loops):
        return None
    for _ in range(attempts):
        u = st.vertices.sample(rng)
        v = _pick_sink(rng, st, cfg)
        if (u != v or cfg.self_loops) and v not in st.out_adj[u]:
            return u, v
    return None


def generate_events(cfg: TraceConfig, g0: DynamicGraph, holdout=None) -> list[UpdateEvent]:
    """Draw ``cfg.n_events`` valid events against a private copy of ``g0``'s state.

    ``holdout`` may be ``(vertex_rows, edges)`` produced by the snapshot tool; held
    out vertices are re-added first by VA events and held out edges are preferred
    by EA events.  A kind that is impossible in the current state is redrawn among
    the kinds that are possible.
    """
    if g0.num_vertices == 0:
        raise InfeasibleConfig("initial graph is empty")
    if cfg.p_ed > 0 and g0.num_edges == 0 and cfg.p_ea == 0:
        raise InfeasibleConfig("edge deletions requested on an edgeless graph without edge additions")
    rng = np.random.default_rng(cfg.seed)
    st = _LiveState.from_graph(g0)
    if holdout is not None:
        hv, he = holdout
        st.holdout_vertices = list(reversed(list(hv)))
        st.holdout_edges = list(reversed([(u, v) for u, v, *_ in he]))
    probs = np.asarray(cfg.probs, dtype=np.float64)
    events: list[UpdateEvent] = []
    for seq in range(cfg.n_events):
        k = int(rng.choice(5, p=probs))
        ev = _draw(k, rng, st, cfg, seq)
        if ev is None:
            order = [i for i in range(5) if probs[i] > 0 and i != k]
            for i in order:
                ev = _draw(i, rng, st, cfg, seq)
                if ev is not None:
                    break
        if ev is None:
            raise InfeasibleConfig(f"no event kind is possible at step {seq}")
        events.append(ev)
    return events


def _draw(k: int, rng, st: _LiveState, cfg: TraceConfig, seq: int):
    if k == 0:
        pair = _try_edge(rng, st, cfg)
        if pair is None:
            return None
        w = float(rng.uniform(cfg.weight_low, cfg.weight_high)) if cfg.weighted else 1.0
        st.add_edge(*pair)
        return EdgeAdd(pair[0], pair[1], w, seq)
    if k == 1:
        if not len(st.edges):
            return None
        u, v = st.edges.sample(rng)
        st.remove_edge(u, v)
        return EdgeDel(u, v, seq)
    if k == 2:
        while st.holdout_vertices:
            u, feats = st.holdout_vertices.pop()
            if u not in st.vertices:
                st.add_vertex(u)
                return VertexAdd(u, tuple(float(x) for x in feats), seq)
        u = st.next_id
        st.add_vertex(u)
        return VertexAdd(u, _features(rng, cfg, st.d0), seq)
    if k == 3:
        if len(st.vertices) <= 1:
            return None
        u = st.vertices.sample(rng)
        st.remove_vertex(u)
        return VertexDel(u, seq)
    if k == 4:
        if not len(st.vertices):
            return None
        u = st.vertices.sample(rng)
        return FeatureUpdate(u, _features(rng, cfg, st.d0), seq)
    raise ValueError(k)


def generate_trace(cfg: TraceConfig, g0: DynamicGraph, path, holdout=None) -> list[UpdateEvent]:
    """Generate events and write them to ``path``; returns the events."""
    events = generate_events(cfg, g0, holdout)
    write_trace(path, events, header=f"seed={cfg.seed} n_events={cfg.n_events} mix={','.join(map(repr, cfg.probs))}")
    return events


def snapshot80(ids, X, edges, seed: int = 0, frac: float = 0.2):
    """Split a full graph into an initial snapshot and held-out parts.

    A random ``frac`` of vertices is removed first (with incident edges), then
    further random edges are removed until ``frac`` of all edges are held out.
    Returns ``(keep_ids, keep_X, keep_edges, held_vertex_rows, held_edges)``;
    held-out vertices come as ``(id, features)`` pairs.
    """
    rng = np.random.default_rng(seed)
    ids = np.asarray(ids, dtype=np.int64)
    X = np.asarray(X, dtype=np.float64)
    edges = sorted((int(u), int(v), float(w)) for u, v, w in edges)
    n_drop = int(round(frac * len(ids)))
    drop = set(rng.choice(ids, size=n_drop, replace=False).tolist()) if n_drop else set()
    keep_mask = np.array([i not in drop for i in ids.tolist()], dtype=bool)
    kept_edges = [e for e in edges if e[0] not in drop and e[1] not in drop]
    held_edges = [e for e in edges if e[0] in drop or e[1] in drop]
    target = int(round(frac * len(edges)))
    extra = max(0, target - len(held_edges))
    if extra and kept_edges:
        pick = set(rng.choice(len(kept_edges), size=min(extra, len(kept_edges)), replace=False).tolist())
        held_edges += [e for i, e in enumerate(kept_edges) if i in pick]
        kept_edges = [e for i, e in enumerate(kept_edges) if i not in pick]
    order = rng.permutation(len(held_edges))
    held_edges = [held_edges[i] for i in order]
    held_vertices = [(int(i), X[k]) for k, i in enumerate(ids.tolist()) if i in drop]
    return ids[keep_mask], X[keep_mask], kept_edges, held_vertices, held_edges
