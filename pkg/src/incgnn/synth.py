"""Seeded synthetic graphs and streams used by tests, benchmarks and the CLI."""

from __future__ import annotations

import numpy as np

from .graph import DynamicGraph, EdgeAdd, EdgeDel, FeatureUpdate, UpdateEvent, VertexAdd


def _features(rng, n: int, d0: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, d0))


def from_edges(n: int, edges, X: np.ndarray) -> DynamicGraph:
    g = DynamicGraph(X.shape[1], capacity=n)
    for i in range(n):
        g.add_vertex(i, X[i])
    for u, v, w in edges:
        g.add_edge(u, v, w)
    return g


def random_graph(n: int, avg_degree: float, d0: int, seed: int = 0, weighted: bool = False) -> DynamicGraph:
    """Directed G(n, m) graph with ``m = round(n * avg_degree)`` distinct non-loop edges."""
    rng = np.random.default_rng(seed)
    X = _features(rng, n, d0)
    m = min(int(round(n * avg_degree)), n * (n - 1))
    seen: set[tuple[int, int]] = set()
    edges = []
    while len(edges) < m:
        u, v = (int(x) for x in rng.integers(n, size=2))
        if u == v or (u, v) in seen:
            continue
        seen.add((u, v))
        w = float(rng.uniform(0.5, 2.0)) if weighted else 1.0
        edges.append((u, v, w))
    return from_edges(n, edges, X)


def regular_graph(n: int, delta: int, d0: int, seed: int = 0) -> DynamicGraph:
    """Every vertex has in-degree and out-degree exactly ``delta``.

    Built as a circulant graph with ``delta`` distinct random offsets, then
    relabelled by a random permutation.
    """
    if not 0 < delta < n:
        raise ValueError("need 0 < delta < n")
    rng = np.random.default_rng(seed)
    X = _features(rng, n, d0)
    offsets = rng.choice(np.arange(1, n), size=delta, replace=False)
    perm = rng.permutation(n)
    edges = []
    for s in offsets.tolist():
        for i in range(n):
            edges.append((int(perm[i]), int(perm[(i + s) % n]), 1.0))
    return from_edges(n, edges, X)


def planted_partition(n: int, k: int = 2, avg_degree: float = 8.0, p_in: float = 0.9, d0: int = 4,
                      seed: int = 0) -> tuple[DynamicGraph, dict[int, int]]:
    """Graph with ``k`` contiguous-id communities; about ``p_in`` of the edges stay inside one."""
    rng = np.random.default_rng(seed)
    X = _features(rng, n, d0)
    comm = {i: i * k // n for i in range(n)}
    members = [[i for i in range(n) if comm[i] == c] for c in range(k)]
    m = int(round(n * avg_degree))
    seen: set[tuple[int, int]] = set()
    edges = []
    while len(edges) < m:
        u = int(rng.integers(n))
        c = comm[u] if rng.random() < p_in else int(rng.integers(k))
        pool = members[c]
        v = pool[int(rng.integers(len(pool)))]
        if u == v or (u, v) in seen:
            continue
        seen.add((u, v))
        edges.append((u, v, 1.0))
    return from_edges(n, edges, X), comm


def planted_stream(g0: DynamicGraph, comm: dict[int, int], n_events: int, k: int = 2, seed: int = 0,
                   p_va: float = 0.2, p_in: float = 0.95, p_ed: float = 0.03, p_fu: float = 0.02,
                   edges_per_vertex: int = 4) -> list[UpdateEvent]:
    """Community-aligned growth stream with preferential attachment.

    New vertices join a random community and then attach to vertices of that
    community chosen in proportion to in-degree, so hubs stay hubs.  Remaining
    edge additions connect existing vertices, mostly inside one community.
    """
    rng = np.random.default_rng(seed)
    comm = dict(comm)
    d0 = g0.d0
    members = [[] for _ in range(k)]
    for v in sorted(comm):
        members[comm[v]].append(v)
    # endpoint lists for degree-proportional draws: one entry per in-edge, plus one per vertex
    targets = [list(m) for m in members]
    for u, v, _ in g0.edges():
        targets[comm[v]].append(v)
    out_sets = {u: set(g0.out_adj[u]) for u in g0.vertices}
    edge_list = [(u, v) for u, v, _ in g0.edges()]
    edge_pos = {e: i for i, e in enumerate(edge_list)}
    next_id = g0.next_id
    pending: list[tuple[int, int]] = []
    events: list[UpdateEvent] = []

    def add_edge(u, v, seq):
        out_sets[u].add(v)
        edge_pos[(u, v)] = len(edge_list)
        edge_list.append((u, v))
        targets[comm[v]].append(v)
        return EdgeAdd(u, v, 1.0, seq)

    while len(events) < n_events:
        seq = len(events)
        r = rng.random()
        if pending and r < 0.6:
            u, left = pending[0]
            c = comm[u] if rng.random() < p_in else int(rng.integers(k))
            pool = targets[c]
            v = pool[int(rng.integers(len(pool)))]
            if v == u or v in out_sets[u]:
                continue
            events.append(add_edge(u, v, seq))
            if left <= 1:
                pending.pop(0)
            else:
                pending[0] = (u, left - 1)
            continue
        r = rng.random()
        if r < p_va:
            u = next_id
            next_id += 1
            c = int(rng.integers(k))
            comm[u] = c
            members[c].append(u)
            targets[c].append(u)
            out_sets[u] = set()
            pending.append((u, edges_per_vertex))
            events.append(VertexAdd(u, tuple(float(x) for x in rng.uniform(-1, 1, d0)), seq))
        elif r < p_va + p_ed and edge_list:
            i = int(rng.integers(len(edge_list)))
            u, v = edge_list[i]
            last = edge_list.pop()
            if i < len(edge_list):
                edge_list[i] = last
                edge_pos[last] = i
            del edge_pos[(u, v)]
            out_sets[u].discard(v)
            events.append(EdgeDel(u, v, seq))
        elif r < p_va + p_ed + p_fu:
            c = int(rng.integers(k))
            u = members[c][int(rng.integers(len(members[c])))]
            events.append(FeatureUpdate(u, tuple(float(x) for x in rng.uniform(-1, 1, d0)), seq))
        else:
            c = int(rng.integers(k))
            u = members[c][int(rng.integers(len(members[c])))]
            c2 = c if rng.random() < p_in else int(rng.integers(k))
            pool = targets[c2]
            v = pool[int(rng.integers(len(pool)))]
            if v == u or v in out_sets[u]:
                continue
            events.append(add_edge(u, v, seq))
    return events
