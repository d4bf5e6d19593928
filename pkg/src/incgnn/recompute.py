"""Layer-wise recompute baseline and the from-scratch oracle.

The recompute engine finds the affected vertices hop by hop (edge-event sinks,
out-neighbours of the previous hop's frontier, the frontier itself when the update
has a self term, and vertices created in the batch) and rebuilds every one of them
from all of its in-neighbours.  Nothing is pruned.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .engine import REASON_MESSAGE, REASON_RECOMPUTE, REASON_SELF, BatchContext, EngineBase, Frontier, Outbox
from .model import EmbeddingStore, ModelSpec, bootstrap_forward


class RecomputeEngine(EngineBase):
    name = "rc"

    def start(self, ctx: BatchContext) -> None:
        self.load_h0(ctx)
        # hop-0 frontier: vertices whose input features were touched
        ctx.plan = {"frontier": sorted(v for v in (ctx.fu | ctx.fresh) if self.alive_local(v))}

    def emit(self, ctx: BatchContext, l: int) -> Outbox:
        """Activate hop-``l`` vertices; activations for remote vertices go to the outbox."""
        t0 = time.perf_counter()
        g = self.graph
        prev_front = ctx.plan["frontier"]
        cand: dict[int, str] = {}
        for v in ctx.seed_sinks:
            cand.setdefault(v, REASON_MESSAGE)
        for u in prev_front:
            for v in g.out_adj[u]:
                cand.setdefault(v, REASON_MESSAGE)
        if self.model.self_term(l):
            for u in prev_front:
                cand.setdefault(u, REASON_SELF)
        for u in ctx.fresh:
            cand[u] = REASON_RECOMPUTE
        out = Outbox(l)
        local = {}
        for v, why in cand.items():
            if self.is_local(v):
                if v in g:
                    local[v] = why
            elif v not in ctx.deleted:
                out.activations.add(v)
        out.raw = len(out.activations)
        ctx.plan["cand"] = local
        ctx.tick(f"send{l}", t0)
        return out

    def deliver(self, ctx: BatchContext, l: int, records) -> None:
        from .dist.wire import ActivationRecord

        for rec in records:
            if not isinstance(rec, ActivationRecord):
                raise TypeError(f"unexpected record {type(rec).__name__} at hop {l}")
            if rec.sink in self.graph:
                ctx.plan["cand"].setdefault(rec.sink, REASON_MESSAGE)

    def plan(self, ctx: BatchContext, l: int) -> set[int]:
        t0 = time.perf_counter()
        front = Frontier(l, dict(sorted(ctx.plan["cand"].items())))
        ctx.frontiers.append(front)
        ids = np.asarray(front.ids(), dtype=np.int64)
        ctx.plan["ids"] = ids
        ctx.tick(f"plan{l}", t0)
        return self.remote_in_neighbors(ids.tolist())

    def compute(self, ctx: BatchContext, l: int, pulled: dict) -> None:
        t0 = time.perf_counter()
        ids = ctx.plan["ids"]
        self.recompute_and_update(ctx, l, ids, ids, pulled)
        ctx.plan["frontier"] = ids.tolist()
        ctx.tick(f"compute{l}", t0)


def oracle_full_recompute(g, m: ModelSpec) -> EmbeddingStore:
    """A fresh store computed from scratch on the current graph."""
    return bootstrap_forward(g, m)


TOLERANCES = {
    np.dtype(np.float32): (1e-4, 1e-6),
    np.dtype(np.float64): (1e-9, 1e-12),
}


@dataclass
class Deviation:
    max_abs: float
    max_rel: float
    scale: float
    rtol: float
    atol: float

    @property
    def ok(self) -> bool:
        return self.max_abs <= self.atol + self.rtol * self.scale


def deviation(got: np.ndarray, ref: np.ndarray, dtype=None) -> Deviation:
    """Compare two embedding blocks.

    ``max_rel`` is the largest absolute deviation divided by the largest reference
    magnitude, and the pass rule is ``max_abs <= atol + rtol * max|ref|``.
    """
    dtype = np.dtype(dtype or got.dtype)
    rtol, atol = TOLERANCES.get(dtype, TOLERANCES[np.dtype(np.float32)])
    got = np.asarray(got, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if got.shape != ref.shape:
        raise ValueError(f"shape mismatch {got.shape} vs {ref.shape}")
    if got.size == 0:
        return Deviation(0.0, 0.0, 0.0, rtol, atol)
    diff = np.abs(got - ref)
    scale = float(np.abs(ref).max())
    max_abs = float(diff.max())
    max_rel = max_abs / scale if scale > 0 else (0.0 if max_abs == 0 else float("inf"))
    return Deviation(max_abs, max_rel, scale, rtol, atol)


def store_deviation(g, store: EmbeddingStore, ref: EmbeddingStore, layer: int | None = None) -> Deviation:
    ids = np.asarray(g.sorted_vertices(), dtype=np.int64)
    layer = store.L if layer is None else layer
    return deviation(store.H[layer][ids], ref.H[layer][ids], store.dtype)
