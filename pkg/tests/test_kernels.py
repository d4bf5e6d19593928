from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incgnn.errors import MismatchedDims, MixedAggregator, NegativeCount
from incgnn.kernels import (
    ATTENTION,
    MAX,
    MEAN,
    MIN,
    SUM,
    WEIGHTED_SUM,
    AttentionSummary,
    ExtremumSummary,
    Incremental,
    LinearDelta,
    MeanDelta,
    MeanSummary,
    NeedsRecompute,
    NoChange,
    OldNew,
    SinkContext,
    SumSummary,
    apply_delta,
    combine,
    empty_summary,
    prepare_delta,
)


def ext(x, mode=MAX):
    return ExtremumSummary(np.array([x], dtype=np.float64), mode)


def inbox_of(agg, *msgs):
    box = None
    for m in msgs:
        box = combine(agg, box, m)
    return box


def pair(old, new, src=0):
    a = None if old is None else np.array([old], dtype=np.float64)
    b = None if new is None else np.array([new], dtype=np.float64)
    return prepare_delta(MAX, a, b, source=src)


# -- the three max cases on scalars ---------------------------------------

def test_max_old_and_new_below_extremum_is_nochange():
    d = apply_delta(MAX, ext(5.0), inbox_of(MAX, pair(4.0, 2.0)))
    assert isinstance(d, NoChange)


def test_max_new_covers_old_is_incremental():
    d = apply_delta(MAX, ext(6.0), inbox_of(MAX, pair(6.0, 8.0)))
    assert isinstance(d, Incremental)
    assert d.summary.vec.tolist() == [8.0]


def test_max_retracting_holder_needs_recompute():
    d = apply_delta(MAX, ext(6.0), inbox_of(MAX, pair(6.0, 4.0)))
    assert isinstance(d, NeedsRecompute)


def test_min_mirrors_max():
    assert isinstance(apply_delta(MIN, ext(1.0, MIN), inbox_of(MIN, pair(3.0, 5.0))), NoChange)
    d = apply_delta(MIN, ext(2.0, MIN), inbox_of(MIN, pair(2.0, -1.0)))
    assert isinstance(d, Incremental) and d.summary.vec.tolist() == [-1.0]
    assert isinstance(apply_delta(MIN, ext(2.0, MIN), inbox_of(MIN, pair(2.0, 3.0))), NeedsRecompute)


def test_max_deleting_holder_needs_recompute():
    assert isinstance(apply_delta(MAX, ext(6.0), inbox_of(MAX, pair(6.0, None))), NeedsRecompute)
    assert isinstance(apply_delta(MAX, ext(6.0), inbox_of(MAX, pair(3.0, None))), NoChange)


def test_max_addition_into_empty_summary():
    d = apply_delta(MAX, empty_summary(MAX, 1), inbox_of(MAX, pair(None, -3.0)))
    assert isinstance(d, Incremental) and d.summary.vec.tolist() == [-3.0]


def test_max_componentwise():
    s = ExtremumSummary(np.array([5.0, 1.0]))
    msg = prepare_delta(MAX, np.array([4.0, 1.0]), np.array([2.0, 0.5]), source=1)
    assert isinstance(apply_delta(MAX, s, inbox_of(MAX, msg)), NeedsRecompute)
    msg = prepare_delta(MAX, np.array([4.0, 0.0]), np.array([7.0, 0.5]), source=1)
    d = apply_delta(MAX, s, inbox_of(MAX, msg))
    assert d.summary.vec.tolist() == [7.0, 1.0]


def test_oldnew_chain_keeps_first_old_and_last_new():
    box = inbox_of(MAX, pair(6.0, 9.0, src=3), pair(9.0, 4.0, src=3))
    (p,) = box.effective()
    assert p.old.tolist() == [6.0] and p.new.tolist() == [4.0]
    box = inbox_of(MAX, pair(6.0, 9.0, src=3), pair(9.0, 6.0, src=3))
    assert box.effective() == []


def test_empty_summary_values():
    assert empty_summary(MAX, 2).value().tolist() == [0.0, 0.0]
    assert empty_summary(MEAN, 2).value().tolist() == [0.0, 0.0]
    assert empty_summary(ATTENTION, 2).value().tolist() == [0.0, 0.0]


# -- linear aggregators ------------------------------------------------------

def test_sum_delta_replaces_old_contribution():
    old, new = np.array([1.0, 2.0]), np.array([4.0, 0.0])
    s = SumSummary(np.array([10.0, 10.0]))
    d = apply_delta(SUM, s, inbox_of(SUM, prepare_delta(SUM, old, new)))
    assert d.summary.vec.tolist() == [13.0, 8.0]


def test_edge_add_and_delete_use_zero_for_missing_side():
    h = np.array([2.0, -1.0])
    assert prepare_delta(SUM, None, h).vec.tolist() == [2.0, -1.0]
    assert prepare_delta(SUM, h, None).vec.tolist() == [-2.0, 1.0]
    assert prepare_delta(WEIGHTED_SUM, None, h, edge_weight=0.5).vec.tolist() == [1.0, -0.5]


def test_mean_count_bookkeeping():
    s = MeanSummary(np.array([3.0]), 2)
    d = apply_delta(MEAN, s, inbox_of(MEAN, prepare_delta(MEAN, None, np.array([3.0]), sink_in_degree_delta=1)))
    assert d.summary.count == 3 and d.summary.value().tolist() == [2.0]
    with pytest.raises(NegativeCount):
        apply_delta(MEAN, MeanSummary(np.array([1.0]), 0),
                    inbox_of(MEAN, prepare_delta(MEAN, np.array([1.0]), None, sink_in_degree_delta=-1)))


def test_mean_count_zero_resets_vector():
    s = MeanSummary(np.array([1.0 + 1e-16]), 1)
    d = apply_delta(MEAN, s, inbox_of(MEAN, prepare_delta(MEAN, np.array([1.0]), None, sink_in_degree_delta=-1)))
    assert d.summary.count == 0 and d.summary.sum_vec.tolist() == [0.0]


def test_mixed_payloads_rejected():
    with pytest.raises(MixedAggregator):
        combine(SUM, None, MeanDelta(np.zeros(1), 1))
    with pytest.raises(MixedAggregator):
        combine(MAX, None, LinearDelta(np.zeros(1)))
    with pytest.raises(MismatchedDims):
        prepare_delta(SUM, np.zeros(2), np.zeros(3))


vecs = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(vecs, vecs), min_size=1, max_size=12), st.randoms())
def test_linear_inbox_is_order_independent(pairs, rnd):
    msgs = [prepare_delta(SUM, np.array(a), np.array(b)) for a, b in pairs]
    shuffled = list(msgs)
    rnd.shuffle(shuffled)
    x = inbox_of(SUM, *msgs).vec
    y = inbox_of(SUM, *shuffled).vec
    scale = max(1.0, max(abs(v) for a, b in pairs for v in a + b))
    assert np.max(np.abs(x - y)) <= 1e-12 * scale * len(pairs)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), vecs, vecs), min_size=1, max_size=10), st.randoms())
def test_max_disposition_is_order_independent_across_sources(items, rnd):
    # one message per source, so arrival order is the only difference
    seen = {}
    for src, a, b in items:
        seen.setdefault(src, (a, b))
    msgs = [prepare_delta(MAX, np.array(a), np.array(b), source=s) for s, (a, b) in seen.items()]
    cur = np.max([np.array(a) for a, _ in seen.values()], axis=0)
    shuffled = list(msgs)
    rnd.shuffle(shuffled)
    d1 = apply_delta(MAX, ExtremumSummary(cur.copy()), inbox_of(MAX, *msgs))
    d2 = apply_delta(MAX, ExtremumSummary(cur.copy()), inbox_of(MAX, *shuffled))
    assert type(d1) is type(d2)
    if isinstance(d1, Incremental):
        np.testing.assert_array_equal(d1.summary.vec, d2.summary.vec)


# -- attention ---------------------------------------------------------------

def _attn_full(rows, h_sink, W, a):
    d_out = W.shape[1]
    num = np.zeros(d_out)
    den = 0.0
    for r in rows:
        p = r @ W
        e = math.exp(float(p @ a[:d_out] + (h_sink @ W) @ a[d_out:]))
        num += e * p
        den += e
    return num, den


def test_attention_delta_matches_recompute():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(3, 2))
    a = rng.normal(size=4) * 0.3
    h_sink = rng.normal(size=3)
    rows = [rng.normal(size=3) for _ in range(4)]
    num, den = _attn_full(rows, h_sink, W, a)
    summary = AttentionSummary(num, den)
    new_row = rng.normal(size=3)
    added = rng.normal(size=3)
    ctx = SinkContext(h_sink, 5, W, a)
    box = inbox_of(ATTENTION, OldNew(rows[1], new_row, source=1), OldNew(rows[2], None, source=2),
                   OldNew(None, added, source=9))
    d = apply_delta(ATTENTION, summary, box, ctx)
    ref_num, ref_den = _attn_full([rows[0], new_row, rows[3], added], h_sink, W, a)
    np.testing.assert_allclose(d.summary.num, ref_num, rtol=1e-12)
    assert d.summary.den == pytest.approx(ref_den, rel=1e-12)
    np.testing.assert_allclose(d.summary.value(), ref_num / ref_den, rtol=1e-12)


def test_attention_forced_recompute():
    ctx = SinkContext(np.zeros(2), 1, np.eye(2), np.zeros(4), recompute=True)
    box = inbox_of(ATTENTION, OldNew(None, np.ones(2), source=0))
    assert isinstance(apply_delta(ATTENTION, empty_summary(ATTENTION, 2), box, ctx), NeedsRecompute)
