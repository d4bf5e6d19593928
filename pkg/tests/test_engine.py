from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import A, B, C, D, E
from incgnn.engine import REASON_RECOMPUTE, IncrementalEngine
from incgnn.errors import BatchError
from incgnn.graph import DynamicGraph, EdgeAdd, EdgeDel, FeatureUpdate, VertexAdd, VertexDel
from incgnn.kernels import AGGREGATORS
from incgnn.model import LayerSpec, ModelSpec, bootstrap_forward, model_to_json
from incgnn.recompute import RecomputeEngine, deviation
from incgnn.stream import TraceConfig, batches, generate_events
from incgnn.synth import random_graph
from oracle import forward_graph

ENGINES = [IncrementalEngine, RecomputeEngine]


def check_against_bootstrap(eng, m):
    ids = eng.graph.sorted_vertices()
    ref = bootstrap_forward(eng.graph, m)
    for l in range(1, m.L + 1):
        d = deviation(eng.store.embeddings(ids, l), ref.embeddings(ids, l), m.dtype)
        assert d.ok, (l, d)


@pytest.mark.parametrize("cls", ENGINES)
def test_fixture_edge_add(cls, five_graph, five_model):
    eng = cls(five_graph, five_model)
    res = eng.process_batch([EdgeAdd(C, A)])
    assert res.changed_final == {A, B, D}
    assert set(res.frontiers[1].ids()) == {A}
    assert C not in res.changed_final and E not in res.changed_final


def test_fixture_matches_naive_oracle(five_graph, five_model, five_doc):
    eng = IncrementalEngine(five_graph, five_model)
    eng.process_batch([EdgeAdd(C, A)])
    eng.process_batch([FeatureUpdate(C, (0.5, -2.0)), VertexDel(D)])
    H = forward_graph(eng.graph, five_doc)
    for v in eng.graph.sorted_vertices():
        np.testing.assert_allclose(eng.store.H[2][v], H[2][v], rtol=0, atol=1e-12)


CASES = [(agg, "gc") for agg in AGGREGATORS if agg != "attention"] + [
    ("sum", "gs"), ("mean", "gi"), ("weighted_sum", "gs"), ("max", "gi"), ("min", "gs"), ("attention", "ga")]


@pytest.mark.parametrize("agg, arch", CASES)
@pytest.mark.parametrize("cls", ENGINES)
def test_matches_naive_oracle_after_every_batch(cls, agg, arch):
    g = random_graph(40, 3, 3, seed=7, weighted=True)
    m = ModelSpec.random([3, 4, 3], agg, arch, seed=8, precision="f64")
    events = generate_events(TraceConfig(n_events=80, seed=9, weighted=True), g)
    eng = cls(g.copy(), m)
    doc = model_to_json(m)
    for b in batches(events, 8):
        eng.process_batch(b)
        H = forward_graph(eng.graph, doc)
        ids = eng.graph.sorted_vertices()
        ref = np.array([H[m.L][v] for v in ids])
        assert deviation(eng.store.embeddings(ids), ref, m.dtype).ok


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), agg=st.sampled_from(AGGREGATORS), bs=st.sampled_from([1, 3, 17]),
       precision=st.sampled_from(["f32", "f64"]))
def test_random_streams_stay_exact(seed, agg, bs, precision):
    g = random_graph(30, 3, 4, seed=seed)
    m = ModelSpec.random([4, 4, 4], agg, seed=seed + 1, precision=precision)
    events = generate_events(TraceConfig(n_events=60, seed=seed + 2), g)
    eng = IncrementalEngine(g, m)
    for b in batches(events, bs):
        eng.process_batch(b)
    check_against_bootstrap(eng, m)


def _scalar_max_graph():
    """B(5) -> A, C(4) -> A, A -> X; one-dimensional identity model."""
    g = DynamicGraph(1)
    for v, x in enumerate([0.0, 5.0, 4.0, 0.0]):
        g.add_vertex(v, [x])
    g.add_edge(1, 0)
    g.add_edge(2, 0)
    g.add_edge(0, 3)
    ly = LayerSpec(np.ones((1, 1)), np.zeros(1), activation="identity")
    m = ModelSpec("max", [ly, ly]).astype("f64")
    return g, m


def test_max_nochange_sends_nothing_downstream():
    g, m = _scalar_max_graph()
    eng = IncrementalEngine(g, m)
    res = eng.process_batch([FeatureUpdate(2, (2.0,))])
    assert res.messages[1] == 1
    assert res.messages[2] == 0
    assert res.changed_final == set()
    assert eng.store.H[1][0].tolist() == [5.0]


def test_max_retraction_recomputes_to_runner_up():
    g, m = _scalar_max_graph()
    g.set_features(2, [6.0])
    eng = IncrementalEngine(g, m)
    res = eng.process_batch([FeatureUpdate(2, (4.0,))])
    assert res.frontiers[1].active[0] == REASON_RECOMPUTE
    assert eng.store.H[1][0].tolist() == [5.0]
    res = eng.process_batch([FeatureUpdate(2, (8.0,))])
    assert res.frontiers[1].active[0] != REASON_RECOMPUTE
    assert eng.store.H[1][0].tolist() == [8.0]
    check_against_bootstrap(eng, m)


def test_changes_stay_within_l_hops():
    g = random_graph(200, 2, 4, seed=3)
    m = ModelSpec.random([4, 4, 4], "sum", "gs", seed=1, precision="f64")
    eng = IncrementalEngine(g, m)
    events = generate_events(TraceConfig(n_events=100, seed=4), g)
    for b in batches(events, 5):
        before = eng.store.H[m.L].copy()
        union = eng.graph.copy()
        union.validate(b)
        # out-neighbourhoods in the graph before and after the batch
        roots = set()
        after = union.copy()
        for e in b:
            after.apply_event(e)
            roots.update({e.u, e.v} if hasattr(e, "v") else {e.u})
        reach = set(roots)
        frontier = set(roots)
        for _ in range(m.L):
            nxt = set()
            for u in frontier:
                for gr in (union, after):
                    if u in gr:
                        nxt.update(gr.out_adj[u])
            frontier = nxt - reach
            reach |= nxt
        eng.process_batch(b)
        cap = min(len(before), len(eng.store.H[m.L]))
        for v in range(cap):
            if v not in reach and v in eng.graph:
                assert np.array_equal(before[v], eng.store.H[m.L][v]), v


def test_rp_ops_never_exceed_rc():
    g = random_graph(150, 5, 8, seed=2)
    m = ModelSpec.random([8, 8, 8, 8], "sum", seed=3)
    events = generate_events(TraceConfig(n_events=300, seed=4), g)
    rp, rc = IncrementalEngine(g.copy(), m), RecomputeEngine(g.copy(), m)
    for b in batches(events, 10):
        a, c = rp.process_batch(b), rc.process_batch(b)
        assert sum(a.ops) <= sum(c.ops)
        assert a.changed_final == c.changed_final


def test_delta_cost_independent_of_in_degree():
    # a hub with many in-neighbours: one changed neighbour costs O(d) to apply
    g = DynamicGraph(4)
    for v in range(101):
        g.add_vertex(v, np.full(4, v / 100))
    for u in range(1, 101):
        g.add_edge(u, 0)
    m = ModelSpec.random([4, 4], "sum", seed=1)
    rp = IncrementalEngine(g.copy(), m).process_batch([FeatureUpdate(5, (1.0, 1.0, 1.0, 1.0))])
    rc = RecomputeEngine(g.copy(), m).process_batch([FeatureUpdate(5, (1.0, 1.0, 1.0, 1.0))])
    assert rc.ops[1] - rp.ops[1] >= 100 * 4 - 3 * 4


def test_empty_batch_is_noop():
    g = random_graph(20, 2, 3, seed=1)
    m = ModelSpec.random([3, 3], "mean", seed=1)
    eng = IncrementalEngine(g, m)
    before = eng.store.H[1].copy()
    res = eng.process_batch([])
    assert res.changed_final == set()
    np.testing.assert_array_equal(eng.store.H[1], before)


@pytest.mark.parametrize("cls", ENGINES)
def test_invalid_batch_leaves_state(cls):
    g = random_graph(20, 2, 3, seed=1)
    m = ModelSpec.random([3, 3], "sum", seed=1)
    eng = cls(g, m)
    state = eng.graph.adjacency_state()
    h = eng.store.H[1].copy()
    with pytest.raises(BatchError):
        eng.process_batch([VertexAdd(50), EdgeDel(50, 0)])
    assert eng.graph.adjacency_state() == state
    np.testing.assert_array_equal(eng.store.H[1], h)


@pytest.mark.parametrize("agg", AGGREGATORS)
def test_structural_corner_cases(agg):
    g = DynamicGraph(2)
    for v in range(4):
        g.add_vertex(v, [v + 1.0, 1.0 - v])
    g.add_edge(0, 1)
    g.add_edge(1, 2)
    g.add_edge(2, 2)
    m = ModelSpec.random([2, 3, 2], agg, seed=4, precision="f64")
    eng = IncrementalEngine(g, m)
    steps = [
        [EdgeDel(0, 1)],                                   # in-degree drops to zero
        [VertexAdd(7, (0.5, 0.5)), EdgeAdd(7, 1), EdgeAdd(1, 7)],
        [VertexDel(2), VertexAdd(2, (3.0, 3.0)), EdgeAdd(2, 2), EdgeAdd(2, 1)],
        [FeatureUpdate(7, (1.0, -1.0)), FeatureUpdate(7, (0.5, 0.5))],
        [EdgeAdd(3, 1, 2.0), EdgeDel(3, 1), EdgeAdd(3, 1, 0.5)],
        [VertexDel(7)],
    ]
    for b in steps:
        eng.process_batch(b)
        check_against_bootstrap(eng, m)


def test_auto_vertex_add():
    g = random_graph(10, 2, 3, seed=1)
    m = ModelSpec.random([3, 3], "sum", seed=1, precision="f64")
    eng = IncrementalEngine(g, m, auto_vertex_add=True)
    res = eng.process_batch([EdgeAdd(3, 40), EdgeAdd(41, 3)])
    assert {40, 41} <= res.changed_final
    check_against_bootstrap(eng, m)


def test_refresh_resets_to_exact_forward_pass():
    g = random_graph(50, 4, 4, seed=1)
    m = ModelSpec.random([4, 4, 4], "mean", seed=1)
    eng = IncrementalEngine(g, m, refresh_every=3)
    events = generate_events(TraceConfig(n_events=30, seed=2), g)
    for b in batches(events, 10):
        eng.process_batch(b)
    ids = eng.graph.sorted_vertices()
    ref = bootstrap_forward(eng.graph, m)
    np.testing.assert_array_equal(eng.store.embeddings(ids), ref.embeddings(ids))


def test_batch_size_does_not_change_result():
    g = random_graph(60, 3, 4, seed=5)
    m = ModelSpec.random([4, 4, 4], "weighted_sum", seed=6, precision="f64")
    events = generate_events(TraceConfig(n_events=120, seed=7, weighted=True), g)
    outs = []
    for bs in (1, 10, 120):
        eng = IncrementalEngine(g.copy(), m)
        for b in batches(events, bs):
            eng.process_batch(b)
        outs.append(eng.store.embeddings(eng.graph.sorted_vertices()))
    for o in outs[1:]:
        assert deviation(o, outs[0], np.float64).ok


def test_batch_record_columns():
    g = random_graph(20, 2, 3, seed=1)
    m = ModelSpec.random([3, 3, 3], "sum", seed=1)
    res = IncrementalEngine(g, m).process_batch([FeatureUpdate(0, (1.0, 2.0, 3.0))])
    row = res.record(4)
    assert row["batch"] == 4 and row["engine"] == "rp" and row["bs"] == 1
    assert {"a1", "a2", "ops1", "ops2", "apply_ms"} <= set(row)
