"""Incremental (delta-propagating) engine.

A batch is processed in three stages:

``begin``
    apply every event to the graph, remember which vertices were created
    ("fresh"), keep the pre-batch rows of deleted vertices, collect edge seeds and
    refresh H^0 for feature updates.
per hop ``l``
    ``emit`` turns hop ``l-1`` changes and edge seeds into delta messages and folds
    them into hop-``l`` inboxes; ``plan`` picks the active vertices and decides
    between delta application and recomputation; ``compute`` writes the new
    summaries and embeddings and records which rows changed.
``finish``
    collect the vertices whose final embedding changed and release the inboxes.

The phases are separate methods so that the distributed workers can interleave
message exchange and barriers between them; :meth:`process_batch` chains them
for single-machine use.

Delta bookkeeping, in short: a vertex whose H^{l-1} row changed sends
``new - old`` along its current out-edges; an edge added (deleted) during the
batch contributes ``+`` (``-``) the source's pre-batch row at every hop; vertices
created in the batch are recomputed from scratch and send their full row.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NegativeCount
from .graph import (
    EDGE_ADDED,
    EDGE_DELETED,
    DynamicGraph,
    EdgeAdd,
    EdgeDel,
    FeatureUpdate,
    UpdateEvent,
    VertexDel,
    event_roots,
)
from .kernels import (
    ADDED,
    ATTENTION,
    CHANGED,
    DELETED,
    LINEAR,
    MEAN,
    MONOTONIC,
    WEIGHTED_SUM,
    AttentionSummary,
    Incremental,
    NeedsRecompute,
    NoChange,
    OldNew,
    OldNewInbox,
    SinkContext,
    apply_delta,
    combine,
    to_attn_delta,
)
from .model import EmbeddingStore, ModelSpec, aggregate_rows, bootstrap_forward, layer_update_rows

REASON_MESSAGE = "message"
REASON_SELF = "self-change"
REASON_RECOMPUTE = "recompute"


def rows_differ(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise bitwise inequality of two equally shaped float blocks."""
    if a.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    ui = np.uint32 if a.dtype == np.float32 else np.uint64
    return (np.ascontiguousarray(a).view(ui) != np.ascontiguousarray(b).view(ui)).any(axis=1)


@dataclass
class Frontier:
    hop: int
    active: dict[int, str] = field(default_factory=dict)

    @property
    def a_l(self) -> int:
        return len(self.active)

    def ids(self) -> list[int]:
        return sorted(self.active)


@dataclass
class BatchResult:
    engine: str
    n_events: int
    changed_final: set[int]
    a: list[int]
    ops: list[int]
    messages: list[int]
    recomputed: list[int]
    timings: dict[str, float]
    frontiers: list[Frontier]
    avg_degree: float
    dims: list[int]

    @property
    def L(self) -> int:
        return len(self.a) - 1

    def record(self, batch: int) -> dict:
        """Flat metrics row; timing keys end in ``_ms``."""
        row = {"batch": batch, "engine": self.engine, "bs": self.n_events,
               "changed_final": len(self.changed_final)}
        for l in range(1, self.L + 1):
            row[f"a{l}"] = self.a[l]
        for l in range(1, self.L + 1):
            row[f"ops{l}"] = self.ops[l]
        for k, v in self.timings.items():
            row[f"{k}_ms"] = round(v * 1e3, 4)
        return row


class InboxPool:
    """Per-hop mailboxes assigned to vertices on first message.

    Linear aggregators keep combined deltas in dense slot arrays; max/min and
    attention keep an :class:`OldNewInbox` object per slot.  Arrays grow on demand
    and are never shrunk; :meth:`release` only forgets the slot assignment.
    """

    def __init__(self, model: ModelSpec):
        self.model = model
        self.slots: dict[int, dict[int, int]] = {}
        self.vec: dict[int, np.ndarray] = {}
        self.cnt: dict[int, np.ndarray] = {}
        self.obj: dict[int, list] = {}
        self.high_water = 0
        self.capacity = 0

    def _arrays(self, l: int, need: int) -> None:
        vec = self.vec.get(l)
        if vec is not None and vec.shape[0] >= need:
            return
        size = max(16, need, 2 * (0 if vec is None else vec.shape[0]))
        dim = self.model.summary_dim(l) if self.model.aggregator != ATTENTION else self.model.dims[l - 1]
        grown = np.zeros((size, dim), self.model.dtype)
        cnt = np.zeros(size, np.int64)
        if vec is not None:
            grown[: vec.shape[0]] = vec
            cnt[: vec.shape[0]] = self.cnt[l]
        self.vec[l] = grown
        self.cnt[l] = cnt
        self.capacity = sum(a.shape[0] for a in self.vec.values())

    def checkout(self, v: int, l: int) -> int:
        table = self.slots.setdefault(l, {})
        slot = table.get(v)
        if slot is None:
            slot = len(table)
            table[v] = slot
            self._arrays(l, slot + 1)
            self.vec[l][slot] = 0
            self.cnt[l][slot] = 0
            objs = self.obj.setdefault(l, [])
            if slot < len(objs):
                objs[slot] = None
            else:
                objs.append(None)
            self.high_water = max(self.high_water, self.in_use())
        return slot

    def checkout_many(self, l: int, sinks: Sequence[int]) -> np.ndarray:
        """Slots for many sinks at once; new slots are zeroed in one step."""
        table = self.slots.setdefault(l, {})
        first = len(table)
        if not table and len(set(sinks)) == len(sinks):
            table.update(zip(sinks, range(len(sinks))))
            out = np.arange(len(sinks), dtype=np.int64)
        else:
            out = np.empty(len(sinks), dtype=np.int64)
            for i, v in enumerate(sinks):
                slot = table.get(v)
                if slot is None:
                    slot = len(table)
                    table[v] = slot
                out[i] = slot
        end = len(table)
        if end > first:
            self._arrays(l, end)
            self.vec[l][first:end] = 0
            self.cnt[l][first:end] = 0
            objs = self.obj.setdefault(l, [])
            del objs[first:]
            objs.extend([None] * (end - first))
            self.high_water = max(self.high_water, self.in_use())
        return out

    def sinks(self, l: int) -> dict[int, int]:
        return self.slots.get(l, {})

    def get(self, v: int, l: int):
        slot = self.slots.get(l, {}).get(v)
        return None if slot is None else self.obj[l][slot]

    def put(self, v: int, l: int, value) -> None:
        slot = self.checkout(v, l)
        self.obj[l][slot] = value

    def in_use(self) -> int:
        return sum(len(t) for t in self.slots.values())

    def release(self) -> None:
        self.slots.clear()
        for objs in self.obj.values():
            for i in range(len(objs)):
                objs[i] = None


@dataclass
class BatchContext:
    L: int
    events: list = field(default_factory=list)
    fresh: set = field(default_factory=set)
    graveyard: dict = field(default_factory=dict)
    deleted: set = field(default_factory=set)
    prev: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    seed_sinks: list = field(default_factory=list)
    fu: set = field(default_factory=set)
    roots: set = field(default_factory=set)
    changed: list = field(default_factory=list)
    recompute_set: set = field(default_factory=set)
    frontiers: list = field(default_factory=list)
    ops: list = field(default_factory=list)
    messages: list = field(default_factory=list)
    recomputed: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    plan: dict = field(default_factory=dict)
    avg_degree: float = 0.0

    def __post_init__(self):
        self.prev = [dict() for _ in range(self.L + 1)]
        self.changed = [np.zeros(0, np.int64) for _ in range(self.L + 1)]
        self.ops = [0] * (self.L + 1)
        self.messages = [0] * (self.L + 1)
        self.recomputed = [0] * (self.L + 1)
        self.frontiers = [Frontier(0)]

    def tick(self, key: str, t0: float) -> None:
        self.timings[key] = self.timings.get(key, 0.0) + (time.perf_counter() - t0)


@dataclass
class Outbox:
    """Messages produced at one worker for sinks owned elsewhere, grouped by sink."""

    hop: int
    linear: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)
    activations: set = field(default_factory=set)
    raw: int = 0
    raw_msgs: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.linear) + len(self.pairs) + len(self.activations)


class EngineBase:
    name = "base"

    def __init__(self, graph: DynamicGraph, model: ModelSpec, store: EmbeddingStore | None = None, *,
                 auto_vertex_add: bool = False, owned: set | None = None, owner_of=None):
        self.graph = graph
        self.model = model
        self.store = store if store is not None else bootstrap_forward(graph, model)
        self.auto_vertex_add = auto_vertex_add
        self.owned = owned
        self.owner_of = owner_of
        self.pool = InboxPool(model)
        self.batches = 0

    # -- ownership ---------------------------------------------------------

    def is_local(self, v: int) -> bool:
        return self.owned is None or v in self.owned

    def alive_local(self, v: int) -> bool:
        return v in self.graph and (self.owned is None or v in self.owned)

    # -- driver ------------------------------------------------------------

    def process_batch(self, events: Sequence[UpdateEvent]) -> BatchResult:
        self.graph.validate(events, self.auto_vertex_add)
        ctx = self.begin(events)
        for l in range(1, self.model.L + 1):
            self.emit(ctx, l)
            self.plan(ctx, l)
            self.compute(ctx, l, {})
        return self.finish(ctx)

    # -- stage 1: apply ----------------------------------------------------

    def begin(self, events: Sequence[UpdateEvent]) -> BatchContext:
        ctx = self.new_context()
        t0 = time.perf_counter()
        for e in events:
            self.apply_one(ctx, e)
        ctx.timings["apply"] = time.perf_counter() - t0
        self.start(ctx)
        return ctx

    def new_context(self) -> BatchContext:
        return BatchContext(self.model.L)

    def start(self, ctx: BatchContext) -> None:
        """Called once all events of the batch are applied."""
        self.load_h0(ctx)

    def apply_one(self, ctx: BatchContext, e: UpdateEvent) -> None:
        """Apply one compute-role event and record its propagation seeds."""
        g = self.graph
        store = self.store
        ctx.events.append(e)
        ctx.roots.update(r for r in event_roots(e))
        src_fresh = e.u in ctx.fresh
        if isinstance(e, VertexDel) and not src_fresh and e.u in g and e.u not in ctx.graveyard:
            ctx.graveyard[e.u] = [h[e.u].copy() for h in store.H]
        res = g.apply_event(e, self.auto_vertex_add)
        for x in res.created:
            ctx.fresh.add(x)
            store.ensure(x + 1)
            if self.owned is not None:
                self.owned.add(x)
        if isinstance(e, EdgeAdd):
            src_fresh = e.u in ctx.fresh
        if isinstance(e, VertexDel):
            ctx.deleted.add(e.u)
            ctx.fresh.discard(e.u)
            ctx.fu.discard(e.u)
            if self.owned is not None:
                self.owned.discard(e.u)
        if isinstance(e, FeatureUpdate):
            ctx.fu.add(e.u)
        for s in res.seeds:
            if s.kind not in (EDGE_ADDED, EDGE_DELETED):
                continue
            ctx.seed_sinks.append(s.target)
            if src_fresh:
                continue
            ctx.seeds.append((s.root, s.target, 1 if s.kind == EDGE_ADDED else -1, s.weight))

    def load_h0(self, ctx: BatchContext) -> None:
        """Write H^0 rows of created and feature-updated vertices; sets ``changed[0]``."""
        g = self.graph
        H0 = self.store.H[0]
        dtype = self.model.dtype
        ctx.avg_degree = g.avg_degree() if g.num_vertices else 0.0
        fresh = sorted(v for v in ctx.fresh if v in g)
        ctx.fresh = set(fresh)
        if fresh:
            H0[fresh] = g.feature_rows(fresh).astype(dtype)
        changed = []
        for u in sorted(ctx.fu):
            if u in ctx.fresh or u not in g:
                continue
            new = g.feature_rows([u]).astype(dtype)
            if rows_differ(new, H0[[u]])[0]:
                ctx.prev[0][u] = H0[u].copy()
                H0[u] = new[0]
                changed.append(u)
        ctx.changed[0] = np.asarray(changed, dtype=np.int64)
        f0 = ctx.frontiers[0]
        for u in sorted(ctx.roots):
            f0.active[u] = REASON_MESSAGE

    def old_row(self, ctx: BatchContext, j: int, u: int) -> np.ndarray:
        """Pre-batch H^j row of ``u``."""
        grave = ctx.graveyard.get(u)
        if grave is not None:
            return grave[j]
        row = ctx.prev[j].get(u)
        if row is not None:
            return row
        return self.store.H[j][u]

    def sink_ok(self, ctx: BatchContext, v: int) -> bool:
        """A local sink accepts deltas only if it exists and was not created this batch."""
        return v in self.graph and v not in ctx.fresh

    def finish(self, ctx: BatchContext) -> BatchResult:
        L = self.model.L
        changed = set(int(v) for v in ctx.changed[L])
        changed.update(v for v in ctx.fresh if self.alive_local(v))
        self.pool.release()
        self.batches += 1
        a = [f.a_l for f in ctx.frontiers]
        return BatchResult(self.name, len(ctx.events), changed, a, list(ctx.ops), list(ctx.messages),
                           list(ctx.recomputed), dict(ctx.timings), ctx.frontiers, ctx.avg_degree,
                           self.model.dims)

    # -- helpers shared by both engines -----------------------------------

    def rows_fn(self, pulled: dict):
        H = self.store.H
        if self.owned is None or not pulled:
            return lambda j, idx: H[j][idx]

        def rows(j, idx):
            out = H[j][idx]
            got = pulled.get(j, {})
            for i, u in enumerate(idx.tolist()):
                if u not in self.owned:
                    out[i] = got[u]
            return out

        return rows

    def remote_in_neighbors(self, ids: Iterable[int]) -> set[int]:
        if self.owned is None:
            return set()
        need = set()
        for v in ids:
            for u in self.graph.in_adj[v]:
                if u not in self.owned:
                    need.add(u)
        return need

    def recompute_and_update(self, ctx: BatchContext, l: int, rec_ids: np.ndarray, upd_ids: np.ndarray,
                             pulled: dict) -> None:
        """Rebuild summaries of ``rec_ids``, then run the layer update on ``upd_ids``."""
        m = self.model
        store = self.store
        rows = self.rows_fn(pulled)
        if len(rec_ids):
            block = aggregate_rows(m, l, self.graph.in_adj, rec_ids, rows)
            store.write_block(rec_ids, l, block)
            ctx.ops[l] += block.ops
            ctx.recomputed[l] += len(rec_ids)
        if len(upd_ids) == 0:
            ctx.changed[l] = np.zeros(0, np.int64)
            return
        ly = m.layers[l - 1]
        new = layer_update_rows(m, l, store.H[l - 1][upd_ids], store.values(upd_ids, l))
        per_row = ly.d_in * ly.d_out * ((0 if m.aggregator == ATTENTION else 1) + (1 if ly.has_self else 0))
        ctx.ops[l] += len(upd_ids) * per_row
        old = store.H[l][upd_ids]
        diff = rows_differ(new, old)
        if ctx.fresh:
            fresh_mask = np.fromiter((int(v) in ctx.fresh for v in upd_ids), dtype=bool, count=len(upd_ids))
            diff &= ~fresh_mask
        ctx.prev[l].update(zip(upd_ids[diff].tolist(), old[diff]))
        store.H[l][upd_ids] = new
        ctx.changed[l] = upd_ids[diff]

    def refresh(self) -> None:
        """Rebuild every summary and embedding from scratch to shed accumulated drift."""
        self.store = bootstrap_forward(self.graph, self.model)


class IncrementalEngine(EngineBase):
    """Delta-propagating engine with hybrid recompute for attention and max/min."""

    name = "rp"

    def __init__(self, graph, model, store=None, *, refresh_every: int = 0, **kw):
        super().__init__(graph, model, store, **kw)
        self.refresh_every = refresh_every

    def finish(self, ctx):
        res = super().finish(ctx)
        if self.refresh_every and self.batches % self.refresh_every == 0:
            self.refresh()
        return res

    # -- stage 2: messages -------------------------------------------------

    def emit(self, ctx: BatchContext, l: int) -> Outbox:
        """Prepare hop-``l`` deltas, deliver local ones, return those for remote sinks."""
        t0 = time.perf_counter()
        j = l - 1
        g = self.graph
        H = self.store.H[j]
        agg = self.model.aggregator
        linear = agg in LINEAR
        dim = self.model.dims[j]
        dtype = self.model.dtype
        # message groups: (first olds/news entry, sinks, weights, count delta, source)
        parts: list[tuple] = []
        olds: list = []
        news: list = []
        for src, sink, sign, w in ctx.seeds:
            row = self.old_row(ctx, j, src)
            parts.append((len(olds), (sink,), (w,), sign, src))
            olds.append(None if sign > 0 else row)
            news.append(row if sign > 0 else None)
        n_seed = len(olds)
        changed = ctx.changed[j].tolist()
        for e, u in enumerate(changed, start=n_seed):
            adj = g.out_adj[u]
            if adj:
                parts.append((e, adj.keys(), adj.values(), 0, u))
        fresh = sorted(ctx.fresh)
        for e, u in enumerate(fresh, start=n_seed + len(changed)):
            adj = g.out_adj[u]
            if adj:
                parts.append((e, adj.keys(), adj.values(), 1, u))

        out = Outbox(l)
        sizes = np.fromiter((len(p[1]) for p in parts), dtype=np.int64, count=len(parts))
        n_msg = int(sizes.sum())
        ctx.messages[l] += n_msg
        ctx.ops[l] += n_msg * dim
        if n_msg == 0:
            ctx.tick(f"send{l}", t0)
            return out
        m_entry = np.repeat(np.fromiter((p[0] for p in parts), np.int64, len(parts)), sizes)
        m_sink = np.fromiter(itertools.chain.from_iterable(p[1] for p in parts), np.int64, n_msg)
        m_w = np.fromiter(itertools.chain.from_iterable(p[2] for p in parts), np.float64, n_msg)
        m_cnt = np.repeat(np.fromiter((p[3] for p in parts), np.int64, len(parts)), sizes)
        m_src = np.repeat(np.fromiter((p[4] for p in parts), np.int64, len(parts)), sizes)
        # fixed message order: by group, then by sink id
        order = np.lexsort((m_sink, m_entry))
        m_entry, m_sink, m_w, m_cnt, m_src = (a[order] for a in (m_entry, m_sink, m_w, m_cnt, m_src))

        # classify each distinct sink once: 0 drop, 1 local, 2 remote
        uniq, inverse = np.unique(m_sink, return_inverse=True)
        uniq_list = uniq.tolist()
        if self.owned is None:
            cls = np.fromiter((v in g for v in uniq_list), dtype=bool, count=len(uniq)).astype(np.int8)
            if ctx.fresh:
                cls[np.isin(uniq, np.fromiter(ctx.fresh, np.int64, len(ctx.fresh)))] = 0
        else:
            cls = np.empty(len(uniq), dtype=np.int8)
            for i, v in enumerate(uniq_list):
                if v in self.owned:
                    cls[i] = 1 if self.sink_ok(ctx, v) else 0
                else:
                    cls[i] = 0 if v in ctx.deleted else 2
        m_cls = cls[inverse]
        local = np.flatnonzero(m_cls == 1)
        remote = np.flatnonzero(m_cls == 2).tolist()

        if linear:
            table = np.zeros((n_seed + len(changed) + len(fresh), dim), dtype)
            for e, (o, n) in enumerate(zip(olds, news)):
                table[e] = n if o is None else -o
            if changed:
                prev = ctx.prev[j]
                table[n_seed:n_seed + len(changed)] = H[changed] - np.stack([prev[u] for u in changed])
            if fresh:
                table[n_seed + len(changed):] = H[fresh]
            delta = table[m_entry]
            if agg == WEIGHTED_SUM:
                delta = delta * m_w.astype(dtype)[:, None]
            if len(local):
                # per-sink sums in message order, then one add per inbox slot
                local_uniq = np.flatnonzero(cls == 1)
                slots = self.pool.checkout_many(l, uniq[local_uniq].tolist())
                key = inverse[local]
                by_sink = local[np.argsort(key, kind="stable")]
                starts = np.searchsorted(np.sort(key), local_uniq)
                self.pool.vec[l][slots] += np.add.reduceat(delta[by_sink], starts, axis=0)
                self.pool.cnt[l][slots] += np.add.reduceat(m_cnt[by_sink], starts)
            for i in remote:
                v = int(m_sink[i])
                c = int(m_cnt[i])
                out.raw_msgs.append((v, delta[i].copy(), c))
                cur = out.linear.get(v)
                if cur is None:
                    out.linear[v] = [delta[i].copy(), c]
                else:
                    cur[0] += delta[i]
                    cur[1] += c
        else:
            olds += [ctx.prev[j][u] for u in changed] + [None] * len(fresh)
            news += [H[u] for u in changed] + [H[u] for u in fresh]
            for i in local.tolist():
                v = int(m_sink[i])
                e = int(m_entry[i])
                msg = OldNew(olds[e], news[e], _kind(olds[e], news[e]), int(m_src[i]))
                self.pool.put(v, l, combine(agg, self.pool.get(v, l), msg))
            for i in remote:
                v = int(m_sink[i])
                e = int(m_entry[i])
                msg = OldNew(olds[e], news[e], _kind(olds[e], news[e]), int(m_src[i]))
                out.raw_msgs.append((v, msg))
                out.pairs[v] = combine(agg, out.pairs.get(v), msg)
        out.raw = len(remote)
        ctx.tick(f"send{l}", t0)
        return out

    def deliver(self, ctx: BatchContext, l: int, records: Sequence) -> None:
        """Receiver-side combination of remote hop-``l`` records into local inboxes."""
        from .dist.wire import LinearRecord, OldNewRecord

        agg = self.model.aggregator
        for rec in records:
            v = rec.sink
            if not self.sink_ok(ctx, v):
                continue
            if isinstance(rec, LinearRecord):
                slot = self.pool.checkout(v, l)
                self.pool.vec[l][slot] += rec.vec
                self.pool.cnt[l][slot] += rec.count
            elif isinstance(rec, OldNewRecord):
                inbox = self.pool.get(v, l)
                for src, old, new in rec.pairs:
                    inbox = combine(agg, inbox, OldNew(old, new, _kind(old, new), src))
                self.pool.put(v, l, inbox)
            else:
                raise TypeError(f"unexpected record {type(rec).__name__} at hop {l}")

    # -- stage 3: plan -----------------------------------------------------

    def plan(self, ctx: BatchContext, l: int) -> set[int]:
        """Choose the hop-``l`` active set and dispositions; returns remote rows to fetch."""
        t0 = time.perf_counter()
        m = self.model
        g = self.graph
        agg = m.aggregator
        store = self.store
        inbox_sinks = self.pool.sinks(l)
        self_set = ctx.changed[l - 1].tolist() if m.self_term(l) else []
        fresh = sorted(ctx.fresh)
        if agg == ATTENTION:
            ctx.recompute_set.update(ctx.changed[l - 1].tolist())

        front = Frontier(l)
        for v in inbox_sinks:
            front.active[v] = REASON_MESSAGE
        for v in self_set:
            front.active.setdefault(v, REASON_SELF)
        for v in fresh:
            front.active[v] = REASON_RECOMPUTE
        ctx.frontiers.append(front)
        self_lookup = set(self_set)

        rec: list[int] = list(fresh)
        reset: list[int] = []
        pruned: set[int] = set()
        objs: dict[int, object] = {}
        inc_linear: list[int] = []
        in_adj = g.in_adj
        if agg in LINEAR:
            # linear summaries never need a rebuild or pruning
            for v in sorted(front.active):
                if v in ctx.fresh:
                    continue
                if not in_adj[v]:
                    reset.append(v)
                elif v in inbox_sinks:
                    inc_linear.append(v)
        for v in [] if agg in LINEAR else sorted(front.active):
            if v in ctx.fresh:
                continue
            if g.in_degree(v) == 0:
                reset.append(v)
                continue
            has_inbox = v in inbox_sinks
            if agg in LINEAR:
                if has_inbox:
                    inc_linear.append(v)
                continue
            if agg == ATTENTION and v in ctx.recompute_set:
                rec.append(v)
                front.active[v] = REASON_RECOMPUTE
                continue
            if not has_inbox:
                continue
            if agg == ATTENTION:
                ly = m.layers[l - 1]
                sctx = SinkContext(store.H[l - 1][v], g.in_degree(v), ly.w_neigh, ly.attn,
                                   m.z_nonlinearity, m.leaky_slope)
                inbox = self.pool.get(v, l)
                d = apply_delta(agg, store.summary(v, l), inbox, sctx)
                ctx.ops[l] += 2 * len(inbox) * ly.d_in * ly.d_out
            else:
                d = apply_delta(agg, store.summary(v, l), self.pool.get(v, l))
                ctx.ops[l] += len(self.pool.get(v, l)) * m.dims[l - 1]
            if isinstance(d, NeedsRecompute):
                rec.append(v)
                front.active[v] = REASON_RECOMPUTE
            elif isinstance(d, Incremental):
                objs[v] = d.summary
            elif isinstance(d, NoChange) and v not in self_lookup:
                pruned.add(v)

        rec_ids = np.asarray(sorted(rec), dtype=np.int64)
        upd_ids = np.asarray([v for v in sorted(front.active) if v not in pruned], dtype=np.int64)
        ctx.plan = {"rec": rec_ids, "upd": upd_ids, "reset": reset, "objs": objs, "linear": inc_linear}
        ctx.tick(f"plan{l}", t0)
        return self.remote_in_neighbors(rec_ids.tolist())

    # -- stage 4: compute --------------------------------------------------

    def compute(self, ctx: BatchContext, l: int, pulled: dict) -> None:
        t0 = time.perf_counter()
        store = self.store
        p = ctx.plan
        inc = p["linear"]
        if inc:
            ids = np.asarray(inc, dtype=np.int64)
            table = self.pool.sinks(l)
            slots = np.fromiter((table[v] for v in inc), dtype=np.int64, count=len(inc))
            store.S[l][ids] = store.S[l][ids] + self.pool.vec[l][slots]
            if self.model.aggregator == MEAN:
                cnt = store.count[l][ids] + self.pool.cnt[l][slots]
                if (cnt < 0).any():
                    bad = int(ids[np.argmax(cnt < 0)])
                    raise NegativeCount(f"mean count of vertex {bad} at layer {l} would be negative")
                store.count[l][ids] = cnt
                zero = ids[cnt == 0]
                if len(zero):
                    store.S[l][zero] = 0
            ctx.ops[l] += len(inc) * self.model.dims[l - 1]
        for v, s in p["objs"].items():
            store.set_summary(v, l, s)
        if p["reset"]:
            store.reset_summary(p["reset"], l)
        self.recompute_and_update(ctx, l, p["rec"], p["upd"], pulled)
        ctx.tick(f"compute{l}", t0)


def _kind(old, new) -> str:
    if old is None:
        return ADDED
    if new is None:
        return DELETED
    return CHANGED
