from __future__ import annotations

import pytest

from incgnn.dist.partition import PartitionMap
from incgnn.dist.routing import (
    COMPUTE,
    NO_COMPUTE,
    RoutingState,
    Server,
    refresh_hd_set,
    route_event,
)
from incgnn.errors import BatchError, MissingVertex
from incgnn.graph import DynamicGraph, EdgeAdd, EdgeDel, FeatureUpdate, VertexAdd, VertexDel


def state(mapping, k, hd=()):
    return RoutingState(PartitionMap(k, mapping), hd=set(hd))


def test_colocated_endpoints_compute_locally():
    rs = state({1: 0, 2: 0, 3: 1}, 2)
    assert route_event(EdgeAdd(1, 2), rs) == [(0, COMPUTE)]
    assert rs.cut_edges_routed == 0


def test_split_endpoints_get_no_compute_copy():
    rs = state({1: 0, 3: 1}, 2)
    assert route_event(EdgeAdd(1, 3), rs) == [(0, COMPUTE), (1, NO_COMPUTE)]
    assert route_event(EdgeDel(3, 1), rs) == [(1, COMPUTE), (0, NO_COMPUTE)]
    assert rs.cut_edges_routed == 1


def test_new_source_joins_high_in_degree_sink():
    rs = state({i: i % 3 for i in range(13)}, 3, hd={7})
    assert route_event(EdgeAdd(99, 7), rs) == [(1, COMPUTE)]
    assert rs.vp[99] == 1


def test_new_source_goes_to_least_loaded():
    rs = state({}, 3)
    rs.loads = [5, 3, 5]
    rs.vp.update({0: 0, 1: 2})
    out = route_event(EdgeAdd(50, 0), rs)
    assert rs.vp[50] == 1 and rs.loads == [5, 4, 5]
    assert out == [(1, COMPUTE), (0, NO_COMPUTE)]


def test_least_loaded_tie_takes_lowest_id():
    rs = state({}, 3)
    rs.loads = [4, 2, 2]
    assert rs.argmin_load() == 1


def test_new_pair_is_colocated():
    rs = state({0: 0}, 2)
    rs.loads = [3, 1]
    assert route_event(EdgeAdd(10, 11), rs) == [(1, COMPUTE)]
    assert rs.vp[10] == rs.vp[11] == 1


def test_hash_mode_places_by_id():
    rs = state({0: 0}, 3, hd={0})
    out = route_event(EdgeAdd(7, 0), rs, mode="hash")
    assert rs.vp[7] == 1 and out == [(1, COMPUTE), (0, NO_COMPUTE)]
    assert route_event(VertexAdd(8), rs, mode="hash") == [(2, COMPUTE)]


def test_vertex_events_follow_owner():
    rs = state({4: 1}, 2)
    assert route_event(FeatureUpdate(4, (0.0,)), rs) == [(1, COMPUTE)]
    assert route_event(VertexDel(4), rs) == [(1, COMPUTE)]
    assert 4 not in rs.vp and rs.loads == [0, 0]
    with pytest.raises(MissingVertex):
        route_event(FeatureUpdate(4, (0.0,)), rs)


def test_refresh_hd_set():
    g = DynamicGraph(1)
    for v in range(6):
        g.add_vertex(v)
    for u in range(1, 6):
        g.add_edge(u, 0)
    g.add_edge(0, 1)
    rs = state({v: 0 for v in range(6)}, 1)
    rs.events_since_refresh = 9
    refresh_hd_set(rs, g)
    # average in-degree is 1, so only in-degree above 2 qualifies
    assert rs.hd == {0} and rs.events_since_refresh == 0


def test_server_refreshes_on_interval():
    g = DynamicGraph(1)
    for v in range(4):
        g.add_vertex(v)
    rs = RoutingState(PartitionMap(2, {v: v % 2 for v in range(4)}), refresh_interval=3)
    srv = Server(g, rs)
    srv.route_batch([EdgeAdd(1, 0), EdgeAdd(2, 0), EdgeAdd(3, 0)])
    assert rs.hd == {0}


def test_deferred_vertex_add_follows_hub():
    g = DynamicGraph(1)
    for v in range(4):
        g.add_vertex(v)
    rs = RoutingState(PartitionMap(2, {0: 1, 1: 0, 2: 0, 3: 0}), hd={0})
    srv = Server(g, rs)
    per = srv.route_batch([VertexAdd(9, (1.0,)), EdgeAdd(9, 0)])
    assert rs.vp[9] == 1
    assert [(type(r.event).__name__, r.role) for r in per[1]] == [("VertexAdd", COMPUTE), ("EdgeAdd", COMPUTE)]
    assert per[0] == []


def test_unreferenced_vertex_add_placed_at_batch_end():
    g = DynamicGraph(1)
    g.add_vertex(0)
    rs = RoutingState(PartitionMap(2, {0: 0}))
    per = Server(g, rs).route_batch([VertexAdd(5), FeatureUpdate(0, (1.0,))])
    assert rs.vp[5] == 1
    assert [type(r.event).__name__ for r in per[1]] == ["VertexAdd"]


def test_vertex_delete_copies_to_halo_partitions():
    g = DynamicGraph(1)
    for v in range(4):
        g.add_vertex(v)
    g.add_edge(0, 1)
    g.add_edge(2, 0)
    rs = RoutingState(PartitionMap(3, {0: 0, 1: 1, 2: 2, 3: 0}))
    per = Server(g, rs).route_batch([VertexDel(0)])
    assert [r.role for r in per[0]] == [COMPUTE]
    assert [r.role for r in per[1]] == [NO_COMPUTE] and [r.role for r in per[2]] == [NO_COMPUTE]


def test_server_rejects_invalid_batch_without_mutation():
    g = DynamicGraph(1)
    g.add_vertex(0)
    rs = RoutingState(PartitionMap(1, {0: 0}))
    with pytest.raises(BatchError):
        Server(g, rs).route_batch([EdgeAdd(0, 3)])
    assert dict(rs.vp) == {0: 0} and g.num_edges == 0


def test_server_auto_vertex_add():
    g = DynamicGraph(1)
    g.add_vertex(0)
    rs = RoutingState(PartitionMap(2, {0: 0}))
    per = Server(g, rs, auto_vertex_add=True).route_batch([EdgeAdd(0, 3)])
    assert 3 in g and 3 in rs.vp
    assert sum(len(p) for p in per) >= 2
