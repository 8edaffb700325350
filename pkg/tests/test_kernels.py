import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from objdisc import _accel, kernels
from objdisc.model import FractionalAssignment
from objdisc.pbf import maximize
from objdisc.rounding import greedy_ascent
from objdisc.standout import StandoutConfig, build_containment, standout_exact, standout_fast

from oracles import nested_image, random_pbf, random_scores

BOTH = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def _both(fn):
    with _accel.backend("numba"):
        a = fn()
    with _accel.backend("numpy"):
        b = fn()
    return a, b


def test_backend_switching():
    before = _accel.get_backend()
    with _accel.backend("numpy"):
        assert not _accel.use_numba()
    assert _accel.get_backend() == before
    with pytest.raises(ValueError):
        _accel.set_backend("fortran")


def _csr_network(rng, n, m):
    tails = rng.integers(0, n, m)
    heads = rng.integers(0, n, m)
    keep = tails != heads
    tails, heads = tails[keep], heads[keep]
    caps = rng.integers(1, 50, tails.size)
    all_t = np.concatenate([tails, heads])
    all_h = np.concatenate([heads, tails])
    all_c = np.concatenate([caps, np.zeros_like(caps)])
    order = np.argsort(all_t, kind="stable")
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    f = tails.size
    rev = np.empty_like(order)
    rev[pos[:f]] = pos[f:]
    rev[pos[f:]] = pos[:f]
    start = np.searchsorted(all_t[order], np.arange(n + 1)).astype(np.int64)
    dense = csr_matrix((caps, (tails, heads)), shape=(n, n))
    dense.sum_duplicates()
    return start, all_h[order].astype(np.int64), all_c[order].astype(np.int64), rev.astype(np.int64), dense


@BOTH
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_max_flow_backends_and_scipy(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 25))
    start, to, cap, rev, dense = _csr_network(rng, n, int(rng.integers(1, 80)))
    (f1, r1), (f2, r2) = _both(lambda: kernels.max_flow(n, start, to, cap.copy(), rev, 0, n - 1))
    assert f1 == f2 and np.array_equal(r1, r2)
    assert f1 == maximum_flow(dense.astype(np.int32), 0, n - 1).flow_value
    # the reachable set is a cut of the same value
    fwd = cap > 0
    tails = np.repeat(np.arange(n), np.diff(start))
    crossing = fwd & r1[tails] & ~r1[to]
    assert cap[crossing].sum() == f1 and r1[0] and not r1[n - 1]


@BOTH
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_maximize_backends(seed):
    f = random_pbf(np.random.default_rng(seed), max_vars=20)
    (x1, v1), (x2, v2) = _both(lambda: maximize(f))
    assert np.array_equal(x1, x2) and v1 == v2


@BOTH
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 30))
def test_standout_backends(seed, q):
    rng = np.random.default_rng(seed)
    a, b = nested_image(rng, 12), nested_image(rng, 10)
    s = rng.uniform(size=(12, 10)) * (rng.uniform(size=(12, 10)) > 0.3)
    ca, cb = build_containment(a), build_containment(b)
    e1, e2 = _both(lambda: standout_exact(s, ca, cb))
    assert np.array_equal(e1, e2)
    (f1, r1), (f2, r2) = _both(lambda: standout_fast(s, ca, cb, StandoutConfig(q=q)))
    assert np.array_equal(f1, f2) and r1 == r2


@BOTH
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_greedy_backends(seed):
    rng = np.random.default_rng(seed)
    sizes = [5, 4, 6, 5]
    scores = random_scores(rng, 4, sizes, density=0.5)
    e = rng.uniform(size=(4, 4))
    np.fill_diagonal(e, 0)
    start = FractionalAssignment(rng.uniform(size=20), e, sizes)
    r1, r2 = _both(lambda: greedy_ascent(start, scores, 2, 2, seed=3))
    assert r1.assignment == r2.assignment and r1.trace == r2.trace
