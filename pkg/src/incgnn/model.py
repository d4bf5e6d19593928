"""GNN model description, embedding store and the layer-wise forward pass.

Every layer computes

    h^l_v = act((1 + eps) * h^{l-1}_v W_self + value(S^l_v) W_neigh + b)

where ``S^l_v`` is the stored aggregate over in-neighbours.  For attention layers the
aggregate already lives in the output space (``sum alpha_uv * h_u W``), so it enters
the update without another ``W_neigh`` product.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, IncGNNError, MissingVertex
from .kernels import (
    AGGREGATORS,
    ATTENTION,
    MAX,
    MEAN,
    MIN,
    MONOTONIC,
    SUM,
    WEIGHTED_SUM,
    AggregateSummary,
    AttentionSummary,
    ExtremumSummary,
    MeanSummary,
    SumSummary,
    WeightedSumSummary,
    empty_summary,
    z_activation,
)
from .linalg import rowdot, rowmm, segment_starts

ACTIVATIONS = ("relu", "identity")
Z_KINDS = ("identity", "leaky_relu")
ARCHS = ("gc", "gs", "gi", "ga")

DTYPES = {"f32": np.float32, "f64": np.float64}


def resolve_dtype(precision) -> np.dtype:
    if isinstance(precision, str):
        try:
            return np.dtype(DTYPES[precision])
        except KeyError:
            raise ValueError(f"unknown precision {precision!r}") from None
    return np.dtype(precision)


def activate(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, x.dtype.type(0))
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class LayerSpec:
    w_neigh: np.ndarray
    bias: np.ndarray
    w_self: np.ndarray | None = None
    eps: float = 0.0
    activation: str = "relu"
    attn: np.ndarray | None = None

    @property
    def d_in(self) -> int:
        return self.w_neigh.shape[0]

    @property
    def d_out(self) -> int:
        return self.w_neigh.shape[1]

    @property
    def has_self(self) -> bool:
        return self.w_self is not None and bool(np.any(self.w_self != 0))

    def astype(self, dtype) -> "LayerSpec":
        cast = lambda a: None if a is None else np.ascontiguousarray(a, dtype=dtype)
        return LayerSpec(cast(self.w_neigh), cast(self.bias), cast(self.w_self), float(self.eps),
                         self.activation, cast(self.attn))


@dataclass
class ModelSpec:
    """An L-layer GNN with a single aggregator kind shared by all layers."""

    aggregator: str
    layers: list[LayerSpec]
    z_nonlinearity: str = "identity"
    leaky_slope: float = 0.2

    def __post_init__(self):
        self.validate()

    @property
    def L(self) -> int:
        return len(self.layers)

    @property
    def dtype(self) -> np.dtype:
        return self.layers[0].w_neigh.dtype

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].d_in] + [ly.d_out for ly in self.layers]

    def summary_dim(self, l: int) -> int:
        """Width of S^l (1-based layer index)."""
        ly = self.layers[l - 1]
        return ly.d_out if self.aggregator == ATTENTION else ly.d_in

    def self_term(self, l: int) -> bool:
        """Does h^l_v depend on h^{l-1}_v even with an unchanged aggregate?"""
        return self.aggregator == ATTENTION or self.layers[l - 1].has_self

    def validate(self) -> None:
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if self.z_nonlinearity not in Z_KINDS:
            raise ValueError(f"unknown z nonlinearity {self.z_nonlinearity!r}")
        if not self.layers:
            raise DimensionMismatch("model needs at least one layer")
        dtype = self.layers[0].w_neigh.dtype
        prev = self.layers[0].d_in
        for i, ly in enumerate(self.layers, start=1):
            if ly.d_in != prev:
                raise DimensionMismatch(f"layer {i} expects {ly.d_in} inputs, previous layer gives {prev}")
            if ly.bias.shape != (ly.d_out,):
                raise DimensionMismatch(f"layer {i} bias shape {ly.bias.shape}")
            if ly.w_self is not None and ly.w_self.shape != ly.w_neigh.shape:
                raise DimensionMismatch(f"layer {i} W_self shape {ly.w_self.shape}")
            if self.aggregator == ATTENTION:
                if ly.attn is None or ly.attn.shape != (2 * ly.d_out,):
                    raise DimensionMismatch(f"layer {i} attention vector must have length {2 * ly.d_out}")
            if ly.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {ly.activation!r}")
            for arr in (ly.w_neigh, ly.bias, ly.w_self, ly.attn):
                if arr is not None and arr.dtype != dtype:
                    raise DimensionMismatch("all parameters must share one dtype")
            prev = ly.d_out

    def astype(self, precision) -> "ModelSpec":
        dtype = resolve_dtype(precision)
        return ModelSpec(self.aggregator, [ly.astype(dtype) for ly in self.layers],
                         self.z_nonlinearity, self.leaky_slope)

    @classmethod
    def random(cls, dims: Sequence[int], aggregator: str = SUM, arch: str = "gc", seed: int = 0,
               precision="f32", eps: float | None = None, z_nonlinearity: str = "identity",
               final_activation: str = "identity") -> "ModelSpec":
        """Seeded random weights.

        ``arch`` picks the update form: ``gc`` (no self term), ``gs`` (separate
        self weights), ``gi`` (shared self/neighbour weights with ``eps``) and
        ``ga`` (attention).  Weights are drawn uniform in ``+-sqrt(3/d_in)`` from a
        ``numpy.random.default_rng(seed)`` stream in layer order.
        """
        if arch not in ARCHS:
            raise ValueError(f"unknown architecture {arch!r}")
        if arch == "ga":
            aggregator = ATTENTION
        elif aggregator == ATTENTION:
            arch = "ga"
        dtype = resolve_dtype(precision)
        rng = np.random.default_rng(seed)
        layers = []
        for i in range(len(dims) - 1):
            d_in, d_out = dims[i], dims[i + 1]
            lim = np.sqrt(3.0 / d_in)
            w = rng.uniform(-lim, lim, size=(d_in, d_out))
            b = rng.uniform(-0.1, 0.1, size=d_out)
            w_self = None
            layer_eps = 0.0
            attn = None
            if arch == "gs":
                w_self = rng.uniform(-lim, lim, size=(d_in, d_out))
            elif arch == "gi":
                w_self = w.copy()
                layer_eps = 0.1 if eps is None else eps
            elif arch == "ga":
                attn = rng.uniform(-0.5, 0.5, size=2 * d_out) / np.sqrt(d_out)
            act = final_activation if i == len(dims) - 2 else "relu"
            layers.append(LayerSpec(w, b, w_self, layer_eps, act, attn).astype(dtype))
        return cls(aggregator, layers, z_nonlinearity)


# ---------------------------------------------------------------------------
# dense row kernels shared by bootstrap, recompute and the incremental engine


def layer_update_rows(model: ModelSpec, l: int, h_prev: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Evaluate the layer-``l`` update on a block of rows."""
    ly = model.layers[l - 1]
    dtype = model.dtype
    if h_prev.shape[1] != ly.d_in:
        raise DimensionMismatch(f"layer {l} expects inputs of width {ly.d_in}, got {h_prev.shape[1]}")
    want = model.summary_dim(l)
    if values.shape[1] != want:
        raise DimensionMismatch(f"layer {l} aggregate width {values.shape[1]}, expected {want}")
    if model.aggregator == ATTENTION:
        pre = values.astype(dtype, copy=True)
    else:
        pre = rowmm(values.astype(dtype, copy=False), ly.w_neigh)
    if ly.has_self:
        scaled = h_prev.astype(dtype, copy=False) * dtype.type(1.0 + ly.eps)
        pre = rowmm(scaled, ly.w_self) + pre
    pre += ly.bias
    return activate(pre, ly.activation)


def layer_update(h_self_prev, s: AggregateSummary, l: int, m: ModelSpec) -> np.ndarray:
    h = np.asarray(h_self_prev, dtype=m.dtype).reshape(1, -1)
    v = np.asarray(s.value(), dtype=m.dtype).reshape(1, -1)
    return layer_update_rows(m, l, h, v)[0]


@dataclass
class SummaryBlock:
    """Summaries for a block of vertices in array form."""

    vec: np.ndarray
    count: np.ndarray | None = None
    den: np.ndarray | None = None
    ops: int = 0


RowsFn = Callable[[int, np.ndarray], np.ndarray]


def gather_in_edges(in_adj: dict, vs: Sequence[int], weighted: bool):
    """Sorted in-neighbour ids (and weights) of each vertex, flattened, plus lengths."""
    srcs: list[int] = []
    ws: list[float] = []
    lens = np.empty(len(vs), dtype=np.int64)
    for i, v in enumerate(vs):
        nb = in_adj[v]
        ks = sorted(nb)
        srcs.extend(ks)
        lens[i] = len(ks)
        if weighted:
            ws.extend(nb[k] for k in ks)
    return np.asarray(srcs, dtype=np.int64), (np.asarray(ws) if weighted else None), lens


def aggregate_rows(model: ModelSpec, l: int, in_adj: dict, vs: Sequence[int], rows: RowsFn) -> SummaryBlock:
    """Rebuild S^l for ``vs`` from all current in-neighbours.

    ``rows(j, ids)`` must return H^j rows for the given vertex ids.  Neighbours are
    visited in sorted order so a vertex's summary never depends on which other
    vertices happen to be recomputed alongside it.
    """
    agg = model.aggregator
    dtype = model.dtype
    n = len(vs)
    ly = model.layers[l - 1]
    d_in = ly.d_in
    srcs, ws, lens = gather_in_edges(in_adj, vs, agg == WEIGHTED_SUM)
    starts, nonempty = segment_starts(lens)
    X = rows(l - 1, srcs).astype(dtype, copy=False) if len(srcs) else np.zeros((0, d_in), dtype)
    ops = int(len(srcs)) * d_in
    sdim = model.summary_dim(l)
    if agg in (SUM, WEIGHTED_SUM, MEAN):
        vec = np.zeros((n, sdim), dtype)
        if agg == WEIGHTED_SUM and len(srcs):
            X = X * ws.astype(dtype)[:, None]
        if len(starts):
            vec[nonempty] = np.add.reduceat(X, starts, axis=0)
        count = lens.copy() if agg == MEAN else None
        return SummaryBlock(vec, count, None, ops)
    if agg in MONOTONIC:
        fill = -np.inf if agg == MAX else np.inf
        vec = np.full((n, sdim), fill, dtype)
        if len(starts):
            red = np.maximum if agg == MAX else np.minimum
            vec[nonempty] = red.reduceat(X, starts, axis=0)
        return SummaryBlock(vec, None, None, ops)
    if agg == ATTENTION:
        d_out = ly.d_out
        num = np.zeros((n, sdim), dtype)
        den = np.zeros(n, dtype)
        if len(srcs):
            P = rowmm(X, ly.w_neigh)
            own = rows(l - 1, np.asarray(vs, dtype=np.int64)).astype(dtype, copy=False)
            Q = rowmm(own, ly.w_neigh)
            z = rowdot(P, ly.attn[:d_out]) + np.repeat(rowdot(Q, ly.attn[d_out:]), lens)
            e = np.exp(z_activation(z, model.z_nonlinearity, model.leaky_slope))
            num[nonempty] = np.add.reduceat(P * e[:, None], starts, axis=0)
            den[nonempty] = np.add.reduceat(e, starts)
            ops += int(len(srcs)) * d_in * d_out + n * d_in * d_out + int(len(srcs)) * 2 * d_out
        return SummaryBlock(num, None, den, ops)
    raise ValueError(f"unknown aggregator {agg!r}")


def summary_values(model: ModelSpec, block: SummaryBlock) -> np.ndarray:
    """Vectorised ``value()`` of every summary in a block."""
    agg = model.aggregator
    vec = block.vec
    if agg in (SUM, WEIGHTED_SUM):
        return vec
    if agg == MEAN:
        out = np.zeros_like(vec)
        nz = block.count > 0
        out[nz] = vec[nz] / block.count[nz].astype(vec.dtype)[:, None]
        return out
    if agg in MONOTONIC:
        return np.where(np.isfinite(vec), vec, vec.dtype.type(0))
    if agg == ATTENTION:
        out = np.zeros_like(vec)
        nz = block.den != 0
        out[nz] = vec[nz] / block.den[nz][:, None]
        return out
    raise ValueError(f"unknown aggregator {agg!r}")


# ---------------------------------------------------------------------------
# embedding store


class EmbeddingStore:
    """Dense per-layer matrices indexed by vertex id.

    ``H[l]`` has shape ``(capacity, d_l)``.  ``S[l]`` (l >= 1) holds the summary
    vector of each vertex; mean additionally keeps ``count[l]`` and attention
    keeps the softmax denominator in ``den[l]``.  Rows of absent vertices are
    meaningless.
    """

    def __init__(self, model: ModelSpec, capacity: int = 16):
        self.model = model
        self.aggregator = model.aggregator
        self.dtype = model.dtype
        cap = max(int(capacity), 1)
        dims = model.dims
        self.H = [np.zeros((cap, d), self.dtype) for d in dims]
        self.S: list[np.ndarray | None] = [None]
        self.count: list[np.ndarray | None] = [None]
        self.den: list[np.ndarray | None] = [None]
        for l in range(1, model.L + 1):
            self.S.append(self._empty_vec((cap, model.summary_dim(l))))
            self.count.append(np.zeros(cap, np.int64) if self.aggregator == MEAN else None)
            self.den.append(np.zeros(cap, self.dtype) if self.aggregator == ATTENTION else None)

    def _empty_vec(self, shape) -> np.ndarray:
        if self.aggregator == MAX:
            return np.full(shape, -np.inf, self.dtype)
        if self.aggregator == MIN:
            return np.full(shape, np.inf, self.dtype)
        return np.zeros(shape, self.dtype)

    @property
    def L(self) -> int:
        return self.model.L

    @property
    def capacity(self) -> int:
        return self.H[0].shape[0]

    def ensure(self, capacity: int) -> None:
        cap = self.capacity
        if capacity <= cap:
            return
        new_cap = max(cap * 2, int(capacity))

        def grow(a, fill=0):
            if a is None:
                return None
            out = np.full((new_cap,) + a.shape[1:], fill, a.dtype)
            out[:cap] = a
            return out

        self.H = [grow(h) for h in self.H]
        for l in range(1, self.L + 1):
            fill = -np.inf if self.aggregator == MAX else np.inf if self.aggregator == MIN else 0
            self.S[l] = grow(self.S[l], fill)
            self.count[l] = grow(self.count[l])
            self.den[l] = grow(self.den[l])

    def copy(self) -> "EmbeddingStore":
        out = EmbeddingStore.__new__(EmbeddingStore)
        out.model = self.model
        out.aggregator = self.aggregator
        out.dtype = self.dtype
        out.H = [h.copy() for h in self.H]
        out.S = [None if s is None else s.copy() for s in self.S]
        out.count = [None if c is None else c.copy() for c in self.count]
        out.den = [None if d is None else d.copy() for d in self.den]
        return out

    # -- summaries ---------------------------------------------------------

    def summary(self, v: int, l: int) -> AggregateSummary:
        vec = self.S[l][v].copy()
        agg = self.aggregator
        if agg == SUM:
            return SumSummary(vec)
        if agg == WEIGHTED_SUM:
            return WeightedSumSummary(vec)
        if agg == MEAN:
            return MeanSummary(vec, int(self.count[l][v]))
        if agg in MONOTONIC:
            return ExtremumSummary(vec, agg)
        return AttentionSummary(vec, self.den[l][v])

    def set_summary(self, v: int, l: int, s: AggregateSummary) -> None:
        if isinstance(s, MeanSummary):
            self.S[l][v] = s.sum_vec
            self.count[l][v] = s.count
        elif isinstance(s, AttentionSummary):
            self.S[l][v] = s.num
            self.den[l][v] = s.den
        else:
            self.S[l][v] = s.vec

    def reset_summary(self, ids, l: int) -> None:
        ids = np.asarray(ids, dtype=np.int64)
        e = empty_summary(self.aggregator, self.model.summary_dim(l), self.dtype)
        self.S[l][ids] = e.sum_vec if isinstance(e, MeanSummary) else e.num if isinstance(e, AttentionSummary) else e.vec
        if self.count[l] is not None:
            self.count[l][ids] = 0
        if self.den[l] is not None:
            self.den[l][ids] = 0

    def block(self, ids, l: int) -> SummaryBlock:
        ids = np.asarray(ids, dtype=np.int64)
        return SummaryBlock(
            self.S[l][ids],
            None if self.count[l] is None else self.count[l][ids],
            None if self.den[l] is None else self.den[l][ids],
        )

    def write_block(self, ids, l: int, block: SummaryBlock) -> None:
        ids = np.asarray(ids, dtype=np.int64)
        self.S[l][ids] = block.vec
        if self.count[l] is not None:
            self.count[l][ids] = block.count
        if self.den[l] is not None:
            self.den[l][ids] = block.den

    def values(self, ids, l: int) -> np.ndarray:
        return summary_values(self.model, self.block(ids, l))

    def embeddings(self, ids, l: int | None = None) -> np.ndarray:
        l = self.L if l is None else l
        return self.H[l][np.asarray(ids, dtype=np.int64)]


def bootstrap_forward(g, m: ModelSpec, timings: dict | None = None) -> EmbeddingStore:
    """Full layer-wise forward pass over every vertex of ``g``.

    If ``timings`` is given, seconds spent per layer are stored under keys ``1..L``.
    """
    if g.d0 != m.dims[0]:
        raise DimensionMismatch(f"graph features have width {g.d0}, model expects {m.dims[0]}")
    store = EmbeddingStore(m, g.capacity)
    ids = np.asarray(g.sorted_vertices(), dtype=np.int64)
    store.H[0][ids] = g.feature_rows(ids).astype(m.dtype)
    rows = lambda j, idx: store.H[j][idx]
    for l in range(1, m.L + 1):
        t0 = time.perf_counter()
        block = aggregate_rows(m, l, g.in_adj, ids, rows)
        store.write_block(ids, l, block)
        store.H[l][ids] = layer_update_rows(m, l, store.H[l - 1][ids], summary_values(m, block))
        if timings is not None:
            timings[l] = time.perf_counter() - t0
    return store


def recompute_aggregate(g, store: EmbeddingStore, v: int, l: int) -> AggregateSummary:
    """Summary of ``v`` at layer ``l`` rebuilt from all in-neighbours."""
    if v not in g:
        raise MissingVertex(f"vertex {v} not in graph")
    m = store.model
    block = aggregate_rows(m, l, g.in_adj, [v], lambda j, idx: store.H[j][idx])
    vec = block.vec[0]
    agg = m.aggregator
    if agg == SUM:
        return SumSummary(vec)
    if agg == WEIGHTED_SUM:
        return WeightedSumSummary(vec)
    if agg == MEAN:
        return MeanSummary(vec, int(block.count[0]))
    if agg in MONOTONIC:
        return ExtremumSummary(vec, agg)
    return AttentionSummary(vec, block.den[0])


# ---------------------------------------------------------------------------
# model files
#
# Binary layout (little-endian):
#   b"IGNM"  u32 version  u32 L  u8 aggregator  u8 z_kind  f64 leaky_slope  u8 precision_bytes
#   per layer: u32 d_in  u32 d_out  u8 activation  f64 eps  u8 has_self  u8 has_attn
#   per layer: f64 W_neigh[d_in*d_out]  [f64 W_self]  f64 bias[d_out]  [f64 attn[2*d_out]]
# Matrices are row-major.  Parameters are stored as f64 and cast on load.

_MODEL_MAGIC = b"IGNM"
_MODEL_HEAD = struct.Struct("<4sIIBBdB")
_LAYER_HEAD = struct.Struct("<IIBdBB")


def save_model(path, m: ModelSpec) -> None:
    parts = [_MODEL_HEAD.pack(_MODEL_MAGIC, 1, m.L, AGGREGATORS.index(m.aggregator),
                              Z_KINDS.index(m.z_nonlinearity), float(m.leaky_slope), m.dtype.itemsize)]
    for ly in m.layers:
        parts.append(_LAYER_HEAD.pack(ly.d_in, ly.d_out, ACTIVATIONS.index(ly.activation), float(ly.eps),
                                      int(ly.w_self is not None), int(ly.attn is not None)))
    for ly in m.layers:
        for arr in (ly.w_neigh, ly.w_self, ly.bias, ly.attn):
            if arr is not None:
                parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def _model_from_bytes(data: bytes) -> ModelSpec:
    try:
        magic, version, L, agg, zk, slope, prec = _MODEL_HEAD.unpack_from(data, 0)
    except struct.error as exc:
        raise IncGNNError(f"truncated model file: {exc}") from None
    if version != 1:
        raise IncGNNError(f"unsupported model file version {version}")
    dtype = {4: np.float32, 8: np.float64}.get(prec)
    if dtype is None:
        raise IncGNNError(f"bad precision byte {prec}")
    off = _MODEL_HEAD.size
    heads = []
    for _ in range(L):
        heads.append(_LAYER_HEAD.unpack_from(data, off))
        off += _LAYER_HEAD.size

    def take(count):
        nonlocal off
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
        off += 8 * count
        return arr.astype(np.float64)

    layers = []
    try:
        for d_in, d_out, act, eps, has_self, has_attn in heads:
            w = take(d_in * d_out).reshape(d_in, d_out)
            ws = take(d_in * d_out).reshape(d_in, d_out) if has_self else None
            b = take(d_out)
            a = take(2 * d_out) if has_attn else None
            layers.append(LayerSpec(w, b, ws, eps, ACTIVATIONS[act], a).astype(dtype))
    except ValueError as exc:
        raise IncGNNError(f"truncated model file: {exc}") from None
    return ModelSpec(AGGREGATORS[agg], layers, Z_KINDS[zk], slope)


def model_to_json(m: ModelSpec) -> dict:
    lst = lambda a: None if a is None else np.asarray(a, dtype=np.float64).tolist()
    return {
        "aggregator": m.aggregator,
        "z_nonlinearity": m.z_nonlinearity,
        "leaky_slope": m.leaky_slope,
        "precision": "f32" if m.dtype == np.float32 else "f64",
        "layers": [
            {"w_neigh": lst(ly.w_neigh), "w_self": lst(ly.w_self), "bias": lst(ly.bias),
             "eps": ly.eps, "activation": ly.activation, "attn": lst(ly.attn)}
            for ly in m.layers
        ],
    }


def model_from_json(doc: dict) -> ModelSpec:
    dtype = resolve_dtype(doc.get("precision", "f32"))
    arr = lambda x: None if x is None else np.asarray(x, dtype=np.float64)
    layers = []
    for ly in doc["layers"]:
        layers.append(LayerSpec(arr(ly["w_neigh"]), arr(ly["bias"]), arr(ly.get("w_self")),
                                float(ly.get("eps", 0.0)), ly.get("activation", "relu"),
                                arr(ly.get("attn"))).astype(dtype))
    return ModelSpec(doc["aggregator"], layers, doc.get("z_nonlinearity", "identity"),
                     float(doc.get("leaky_slope", 0.2)))


def save_model_json(path, m: ModelSpec) -> None:
    Path(path).write_text(json.dumps(model_to_json(m), indent=1))


def load_model(path, precision=None) -> ModelSpec:
    """Read a binary or JSON model file; ``precision`` overrides the stored one."""
    data = Path(path).read_bytes()
    if data[:4] == _MODEL_MAGIC:
        m = _model_from_bytes(data)
    else:
        try:
            m = model_from_json(json.loads(data.decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise IncGNNError(f"{path}: not a model file ({exc})") from None
    return m if precision is None else m.astype(precision)


# ---------------------------------------------------------------------------
# snapshots
#
#   b"IGNS" u32 version u32 L u8 aggregator u8 precision_bytes u64 n
#   i64 ids[n]
#   for l in 0..L:  u32 d_l  H^l rows (n x d_l, precision dtype)
#   for l in 1..L:  u32 sdim S^l rows  [i64 count[n] for mean]  [den[n] for attention]

_SNAP_MAGIC = b"IGNS"
_SNAP_HEAD = struct.Struct("<4sIIBBQ")


def save_snapshot(path, store: EmbeddingStore, ids) -> None:
    ids = np.asarray(sorted(ids), dtype=np.int64)
    m = store.model
    parts = [_SNAP_HEAD.pack(_SNAP_MAGIC, 1, m.L, AGGREGATORS.index(m.aggregator), m.dtype.itemsize, len(ids)),
             ids.astype("<i8").tobytes()]
    le = m.dtype.newbyteorder("<")
    for l in range(m.L + 1):
        parts.append(struct.pack("<I", store.H[l].shape[1]))
        parts.append(np.ascontiguousarray(store.H[l][ids], dtype=le).tobytes())
    for l in range(1, m.L + 1):
        parts.append(struct.pack("<I", store.S[l].shape[1]))
        parts.append(np.ascontiguousarray(store.S[l][ids], dtype=le).tobytes())
        if store.count[l] is not None:
            parts.append(store.count[l][ids].astype("<i8").tobytes())
        if store.den[l] is not None:
            parts.append(np.ascontiguousarray(store.den[l][ids], dtype=le).tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_snapshot(path, model: ModelSpec) -> tuple[EmbeddingStore, np.ndarray]:
    """Returns the store and the vertex ids it covers."""
    data = Path(path).read_bytes()
    try:
        magic, version, L, agg, prec, n = _SNAP_HEAD.unpack_from(data, 0)
    except struct.error:
        raise IncGNNError(f"{path}: truncated snapshot") from None
    if magic != _SNAP_MAGIC or version != 1:
        raise IncGNNError(f"{path}: not a snapshot file")
    if L != model.L or AGGREGATORS[agg] != model.aggregator:
        raise DimensionMismatch("snapshot does not match the model (layers or aggregator)")
    if prec != model.dtype.itemsize:
        model = model.astype("f32" if prec == 4 else "f64")
    dtype = model.dtype.newbyteorder("<")
    off = _SNAP_HEAD.size

    def take(dt, count):
        nonlocal off
        arr = np.frombuffer(data, dtype=dt, count=count, offset=off)
        off += arr.nbytes
        return arr

    ids = take("<i8", n).astype(np.int64)
    cap = int(ids.max()) + 1 if n else 1
    store = EmbeddingStore(model, cap)
    try:
        for l in range(L + 1):
            (d,) = struct.unpack_from("<I", data, off)
            off += 4
            if d != model.dims[l]:
                raise DimensionMismatch(f"snapshot layer {l} has width {d}, model has {model.dims[l]}")
            store.H[l][ids] = take(dtype, n * d).reshape(n, d)
        for l in range(1, L + 1):
            (d,) = struct.unpack_from("<I", data, off)
            off += 4
            if d != model.summary_dim(l):
                raise DimensionMismatch(f"snapshot summary {l} has width {d}")
            store.S[l][ids] = take(dtype, n * d).reshape(n, d)
            if store.count[l] is not None:
                store.count[l][ids] = take("<i8", n)
            if store.den[l] is not None:
                store.den[l][ids] = take(dtype, n)
    except (ValueError, struct.error) as exc:
        raise IncGNNError(f"{path}: truncated snapshot ({exc})") from None
    return store, ids
