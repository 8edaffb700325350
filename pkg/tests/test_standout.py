import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objdisc.model import ImageRecord
from objdisc.standout import (
    StandoutConfig,
    build_containment,
    sparsify_topk,
    standout_exact,
    standout_fast,
    top_matches,
)

from oracles import background_sets, closed_form_fast_full_q, direct_standout, nested_image, parts_sets


def _image(boxes):
    return ImageRecord.create(id="x", width=100, height=100, proposals=boxes)


def test_containment_examples():
    c = build_containment(_image([[10, 10, 20, 20]]))
    assert c.parts_of(0) == {0} and c.background_of(0) == set()

    # tiny box centered inside a box with 4x its area
    c = build_containment(_image([[45, 45, 10, 10], [40, 40, 20, 20]]))
    assert 1 in c.background_of(0)
    assert 0 not in c.background_of(1)

    c = build_containment(_image([[0, 0, 10, 10], [50, 50, 10, 10]]))
    assert c.parts_of(0) == {0} and c.parts_of(1) == {1}
    assert c.background_of(0) == set() and c.background_of(1) == set()


def test_containment_matches_predicates():
    rng = np.random.default_rng(2)
    im = nested_image(rng, 15)
    c = build_containment(im)
    boxes = im.proposals.tolist()
    assert [c.parts_of(k) for k in range(15)] == parts_sets(boxes)
    assert [c.background_of(k) for k in range(15)] == background_sets(boxes)


def test_config_validation():
    for kw in ({"rho": 0}, {"delta": 1.5}, {"gamma": 0.5}, {"q": -1}, {"top_k": 0}):
        with pytest.raises(ValueError):
            StandoutConfig(**kw)


def test_exact_examples():
    ci = build_containment(_image([[0, 0, 10, 10], [50, 50, 10, 10]]))
    s = np.array([[0.3, 0.1], [0.0, 0.7]])
    np.testing.assert_array_equal(standout_exact(s, ci, ci), s)

    # background match 0.5 beats the inner match 0.3
    cj = build_containment(_image([[45, 45, 10, 10], [40, 40, 20, 20]]))
    s = np.array([[0.3, 0.0], [0.0, 0.5]])
    S = standout_exact(s, cj, cj)
    assert S[0, 0] == 0.0 and S[1, 1] == 0.5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 12))
def test_exact_matches_brute_force(seed, pi, pj):
    rng = np.random.default_rng(seed)
    a, b = nested_image(rng, pi), nested_image(rng, pj)
    s = rng.uniform(size=(pi, pj)) * (rng.uniform(size=(pi, pj)) > 0.3)
    got = standout_exact(s, build_containment(a), build_containment(b))
    np.testing.assert_array_equal(got, direct_standout(s, a.proposals.tolist(), b.proposals.tolist()))


def test_fast_q_zero_is_exact():
    rng = np.random.default_rng(4)
    a, b = nested_image(rng, 10), nested_image(rng, 8)
    s = rng.uniform(size=(10, 8))
    ca, cb = build_containment(a), build_containment(b)
    S, frac = standout_fast(s, ca, cb, StandoutConfig(q=0))
    assert np.array_equal(S, standout_exact(s, ca, cb))
    assert frac == 1.0


def test_fast_zero_similarity():
    rng = np.random.default_rng(4)
    a = nested_image(rng, 6)
    ca = build_containment(a)
    S, frac = standout_fast(np.zeros((6, 6)), ca, ca)
    assert not S.any() and frac == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_fast_full_queue_closed_form(seed):
    rng = np.random.default_rng(seed)
    a, b = nested_image(rng, 8), nested_image(rng, 8)
    s = rng.uniform(size=(8, 8)) * (rng.uniform(size=(8, 8)) > 0.2)
    S, _ = standout_fast(s, build_containment(a), build_containment(b), StandoutConfig(q=64))
    want = closed_form_fast_full_q(s, a.proposals.tolist(), b.proposals.tolist())
    np.testing.assert_array_equal(S, want)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 40))
def test_fast_fallback_entries_are_exact(seed, q):
    rng = np.random.default_rng(seed)
    a, b = nested_image(rng, 9), nested_image(rng, 7)
    s = rng.uniform(size=(9, 7)) * (rng.uniform(size=(9, 7)) > 0.3)
    ca, cb = build_containment(a), build_containment(b)
    cfg = StandoutConfig(q=q)
    S, frac = standout_fast(s, ca, cb, cfg)
    from objdisc.standout import propagate_part_scores

    fallback = (s > 0) & (propagate_part_scores(s, ca, cb, q) == 0)
    exact = standout_exact(s, ca, cb)
    assert np.array_equal(S[fallback], exact[fallback])
    assert frac == pytest.approx(fallback.sum() / s.size)
    assert (S >= 0).all() and (S <= s).all()


def test_top_matches_order_and_ties():
    s = np.array([[1.0, 3.0], [3.0, 0.0]])
    k, l = top_matches(s, 2)
    # the two 3.0 entries, highest rank last; (0, 1) outranks (1, 0)
    assert list(zip(k, l)) == [(1, 0), (0, 1)]
    k, l = top_matches(s, 10)
    assert len(k) == 3 and s[k[0], l[0]] == 1.0


def test_sparsify_examples():
    m = sparsify_topk(np.array([[0.0, 2.0], [1.0, 0.0]]), 5)
    assert m.nnz == 2
    m = sparsify_topk(np.ones((2, 3)), 3)
    assert list(zip(m.k, m.l)) == [(0, 0), (0, 1), (0, 2)]
    m = sparsify_topk(np.array([[5.0, 4.0, 3.0, 2.0, 1.0]]), 2)
    assert sorted(m.values) == [4.0, 5.0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 30))
def test_sparsify_properties(seed, k):
    rng = np.random.default_rng(seed)
    S = np.round(rng.uniform(size=(6, 5)), 1) * (rng.uniform(size=(6, 5)) > 0.4)
    m = sparsify_topk(S, k)
    assert m.nnz <= k
    assert (m.values > 0).all()
    assert np.array_equal(m.values, S[m.k, m.l])
    if m.nnz:
        dropped = S.copy()
        dropped[m.k, m.l] = 0
        assert dropped.max() <= m.values.min()
