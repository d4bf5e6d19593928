"""Aggregator algebra: summaries, delta preparation, inbox combination, delta application.

A summary is the pre-update aggregate state of one vertex at one layer.  Deltas are
prepared at the source, combined in the sink's inbox in any order and applied to
the summary at the sink.  Max/min and attention cannot always be updated from a
delta alone; :func:`apply_delta` then answers :class:`NeedsRecompute`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MismatchedDims, MixedAggregator, NegativeCount
from .linalg import rowdot, rowmm

SUM = "sum"
MEAN = "mean"
WEIGHTED_SUM = "weighted_sum"
MAX = "max"
MIN = "min"
ATTENTION = "attention"

AGGREGATORS = (SUM, MEAN, WEIGHTED_SUM, MAX, MIN, ATTENTION)
LINEAR = (SUM, MEAN, WEIGHTED_SUM)
MONOTONIC = (MAX, MIN)
OLDNEW_AGGREGATORS = (MAX, MIN, ATTENTION)

ADDED = "added"
DELETED = "deleted"
CHANGED = "changed"


# ---------------------------------------------------------------------------
# summaries


@dataclass
class SumSummary:
    vec: np.ndarray

    def value(self) -> np.ndarray:
        return self.vec


@dataclass
class WeightedSumSummary:
    vec: np.ndarray

    def value(self) -> np.ndarray:
        return self.vec


@dataclass
class MeanSummary:
    sum_vec: np.ndarray
    count: int

    def value(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.sum_vec)
        return self.sum_vec / self.sum_vec.dtype.type(self.count)


@dataclass
class ExtremumSummary:
    """Componentwise max (or min); an empty summary holds -inf (+inf for min)."""

    vec: np.ndarray
    mode: str = MAX

    def value(self) -> np.ndarray:
        return np.where(np.isfinite(self.vec), self.vec, 0).astype(self.vec.dtype)

    @property
    def empty(self) -> bool:
        return not np.isfinite(self.vec).any()


@dataclass
class AttentionSummary:
    num: np.ndarray
    den: float

    def value(self) -> np.ndarray:
        if self.den == 0:
            return np.zeros_like(self.num)
        return self.num / self.num.dtype.type(self.den)


AggregateSummary = SumSummary | WeightedSumSummary | MeanSummary | ExtremumSummary | AttentionSummary


def empty_summary(agg: str, dim: int, dtype=np.float64) -> AggregateSummary:
    if agg == SUM:
        return SumSummary(np.zeros(dim, dtype))
    if agg == WEIGHTED_SUM:
        return WeightedSumSummary(np.zeros(dim, dtype))
    if agg == MEAN:
        return MeanSummary(np.zeros(dim, dtype), 0)
    if agg in MONOTONIC:
        fill = -np.inf if agg == MAX else np.inf
        return ExtremumSummary(np.full(dim, fill, dtype), agg)
    if agg == ATTENTION:
        return AttentionSummary(np.zeros(dim, dtype), 0.0)
    raise ValueError(f"unknown aggregator {agg!r}")


# ---------------------------------------------------------------------------
# messages


@dataclass
class LinearDelta:
    vec: np.ndarray


@dataclass
class MeanDelta:
    vec: np.ndarray
    count: int


@dataclass
class OldNew:
    """Old and new embedding of a source; ``None`` means "no contribution"."""

    old: np.ndarray | None
    new: np.ndarray | None
    kind: str = CHANGED
    source: int | None = None


@dataclass
class AttnDelta:
    num: np.ndarray
    den: float


@dataclass
class OldNewInbox:
    """Buffered OldNew pairs keyed by source; repeated sources chain first-old -> last-new."""

    pairs: dict = field(default_factory=dict)
    _anon: int = 0

    def add(self, msg: OldNew) -> None:
        key = msg.source
        if key is None:
            key = ("anon", self._anon)
            self._anon += 1
        prev = self.pairs.get(key)
        if prev is None:
            self.pairs[key] = OldNew(msg.old, msg.new, msg.kind, msg.source)
        else:
            prev.new = msg.new
            if prev.old is None and msg.new is None:
                prev.kind = DELETED
            else:
                prev.kind = CHANGED if prev.old is not None else ADDED

    def effective(self) -> list[OldNew]:
        """Pairs that can still change the sink (identity pairs dropped)."""
        out = []
        for p in self.pairs.values():
            if p.old is None and p.new is None:
                continue
            if p.old is not None and p.new is not None and np.array_equal(p.old, p.new):
                continue
            out.append(p)
        return out

    def __len__(self) -> int:
        return len(self.pairs)


def _vec(x, dtype=None):
    if x is None:
        return None
    return np.asarray(x, dtype=dtype)


def prepare_delta(agg: str, old_h=None, new_h=None, edge_weight: float = 1.0,
                  sink_in_degree_delta: int = 0, kind: str | None = None, source: int | None = None):
    """Build the message payload a source sends to one sink."""
    if old_h is None and new_h is None:
        raise MismatchedDims("at least one of old_h/new_h must be given")
    old = _vec(old_h)
    new = _vec(new_h)
    if old is not None and new is not None and old.shape != new.shape:
        raise MismatchedDims(f"old {old.shape} vs new {new.shape}")
    if kind is None:
        kind = ADDED if old is None else DELETED if new is None else CHANGED
    if agg in OLDNEW_AGGREGATORS:
        return OldNew(old, new, kind, source)
    ref = new if new is not None else old
    diff = (new if new is not None else np.zeros_like(ref)) - (old if old is not None else np.zeros_like(ref))
    if agg == SUM:
        return LinearDelta(diff)
    if agg == WEIGHTED_SUM:
        return LinearDelta(diff * ref.dtype.type(edge_weight))
    if agg == MEAN:
        return MeanDelta(diff, int(sink_in_degree_delta))
    raise ValueError(f"unknown aggregator {agg!r}")


def combine(agg: str, inbox, msg):
    """Fold ``msg`` into an inbox value (``None`` = empty inbox)."""
    if agg in (SUM, WEIGHTED_SUM):
        if not isinstance(msg, LinearDelta):
            raise MixedAggregator(f"{agg} inbox got {type(msg).__name__}")
        return LinearDelta(msg.vec.copy()) if inbox is None else LinearDelta(inbox.vec + msg.vec)
    if agg == MEAN:
        if not isinstance(msg, MeanDelta):
            raise MixedAggregator(f"mean inbox got {type(msg).__name__}")
        if inbox is None:
            return MeanDelta(msg.vec.copy(), msg.count)
        return MeanDelta(inbox.vec + msg.vec, inbox.count + msg.count)
    if agg == ATTENTION and isinstance(msg, AttnDelta):
        if inbox is None:
            return AttnDelta(msg.num.copy(), msg.den)
        if not isinstance(inbox, AttnDelta):
            raise MixedAggregator("attention inbox mixes AttnDelta with OldNew")
        return AttnDelta(inbox.num + msg.num, inbox.den + msg.den)
    if agg in OLDNEW_AGGREGATORS:
        if not isinstance(msg, OldNew):
            raise MixedAggregator(f"{agg} inbox got {type(msg).__name__}")
        if inbox is None:
            inbox = OldNewInbox()
        elif not isinstance(inbox, OldNewInbox):
            raise MixedAggregator(f"{agg} inbox holds {type(inbox).__name__}")
        inbox.add(msg)
        return inbox
    raise MixedAggregator(f"unknown aggregator {agg!r}")


# ---------------------------------------------------------------------------
# application


class Disposition:
    pass


@dataclass
class NoChange(Disposition):
    pass


@dataclass
class Incremental(Disposition):
    summary: AggregateSummary


@dataclass
class NeedsRecompute(Disposition):
    pass


@dataclass
class SinkContext:
    """What a sink knows when applying its inbox.

    ``h_prev`` is the sink's own previous-layer embedding; attention needs it
    together with the layer's projection ``w`` and attention vector ``attn``.
    """

    h_prev: np.ndarray | None = None
    in_degree: int | None = None
    w: np.ndarray | None = None
    attn: np.ndarray | None = None
    z_nonlinearity: str = "identity"
    leaky_slope: float = 0.2
    recompute: bool = False


def z_activation(z: np.ndarray, kind: str, slope: float) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "leaky_relu":
        return np.where(z >= 0, z, z * z.dtype.type(slope))
    raise ValueError(f"unknown z nonlinearity {kind!r}")


def attention_terms(rows: np.ndarray, h_sink: np.ndarray, w: np.ndarray, attn: np.ndarray,
                    z_kind: str = "identity", slope: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """``exp(z_uv) * (h_u W)`` and ``exp(z_uv)`` for source rows against one sink."""
    d_out = w.shape[1]
    proj = rowmm(rows, w)
    sink_proj = rowmm(h_sink.reshape(1, -1), w)
    z = rowdot(proj, attn[:d_out]) + rowdot(sink_proj, attn[d_out:])[0]
    e = np.exp(z_activation(z, z_kind, slope))
    return proj * e[:, None], e


def to_attn_delta(pairs: list[OldNew], ctx: SinkContext) -> AttnDelta:
    """Receiver-side conversion of OldNew pairs into numerator/denominator deltas."""
    d_out = ctx.w.shape[1]
    dtype = ctx.w.dtype
    num = np.zeros(d_out, dtype)
    den = dtype.type(0)
    for p in pairs:
        for vec, sign in ((p.new, 1), (p.old, -1)):
            if vec is None:
                continue
            n, e = attention_terms(vec.reshape(1, -1).astype(dtype, copy=False), ctx.h_prev, ctx.w,
                                   ctx.attn, ctx.z_nonlinearity, ctx.leaky_slope)
            if sign > 0:
                num = num + n[0]
                den = den + e[0]
            else:
                num = num - n[0]
                den = den - e[0]
    return AttnDelta(num, den)


def classify_extremum(summary: ExtremumSummary, pairs: list[OldNew]) -> Disposition:
    """Three-way decision for max/min given buffered (old, new) pairs."""
    cur = summary.vec
    better = np.greater if summary.mode == MAX else np.less
    pick = np.maximum if summary.mode == MAX else np.minimum
    for p in pairs:
        if p.old is None:
            continue
        held = p.old == cur
        if not held.any():
            continue
        if p.new is None:
            return NeedsRecompute()
        if (held & better(p.old, p.new)).any():
            return NeedsRecompute()
    out = cur
    for p in pairs:
        if p.new is not None:
            out = pick(out, p.new)
    if np.array_equal(out, cur):
        return NoChange()
    return Incremental(ExtremumSummary(out.astype(cur.dtype, copy=False), summary.mode))


def apply_delta(agg: str, summary: AggregateSummary, inbox, ctx: SinkContext | None = None) -> Disposition:
    """Decide how the sink's summary changes under its combined inbox."""
    ctx = ctx or SinkContext()
    if inbox is None:
        return NoChange()
    if agg in (SUM, WEIGHTED_SUM):
        cls = type(summary)
        return Incremental(cls(summary.vec + inbox.vec))
    if agg == MEAN:
        count = summary.count + inbox.count
        if count < 0:
            raise NegativeCount(f"mean count would become {count}")
        vec = summary.sum_vec + inbox.vec
        if count == 0:
            vec = np.zeros_like(vec)
        return Incremental(MeanSummary(vec, count))
    if agg in MONOTONIC:
        if ctx.recompute:
            return NeedsRecompute()
        return classify_extremum(summary, inbox.effective())
    if agg == ATTENTION:
        if ctx.recompute:
            return NeedsRecompute()
        delta = inbox if isinstance(inbox, AttnDelta) else to_attn_delta(inbox.effective(), ctx)
        return Incremental(AttentionSummary(summary.num + delta.num, summary.den + delta.den))
    raise ValueError(f"unknown aggregator {agg!r}")
