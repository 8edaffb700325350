import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objdisc.dual import (
    DualConfig,
    DualState,
    VariableLayout,
    build_lagrangian,
    duality_gap,
    max_violation,
    run_dual,
    subgradient_step,
    write_trace,
)
from objdisc.errors import DataError, InvariantError
from objdisc.model import Assignment, PairScores, SparseScoreMatrix, objective_value
from objdisc.pbf import evaluate

from oracles import dense_blocks, direct_lagrangian, exhaustive_constrained_optimum, random_scores


def _blocks(x, sizes):
    return np.split(np.asarray(x), np.cumsum(sizes)[:-1])


def test_zero_multipliers_give_triples_only():
    scores = random_scores(np.random.default_rng(0), 3, [2, 2, 2])
    f, _ = build_lagrangian(scores, np.zeros(3), np.zeros(3), 1, 1)
    assert not f.unary.any() and f.constant == 0.0
    assert f.num_triples == scores.nnz


def test_lagrangian_hand_example():
    scores = PairScores([1, 1], {(0, 1): SparseScoreMatrix.from_dense([[2.0]]), (1, 0): SparseScoreMatrix.from_dense([[0.0]])})
    f, layout = build_lagrangian(scores, [1.0, 0.0], [0.0, 0.0], 1, 1)
    assert evaluate(f, np.ones(layout.num_vars)) == 2.0


def test_negative_multiplier_rejected():
    scores = random_scores(np.random.default_rng(0), 2, [1, 1])
    with pytest.raises(ValueError):
        build_lagrangian(scores, [-0.1, 0], [0, 0], 1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lagrangian_matches_direct(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    sizes = [int(v) for v in rng.integers(1, 4, n)]
    scores = random_scores(rng, n, sizes)
    lam, mu = rng.uniform(0, 2, n), rng.uniform(0, 2, n)
    nu, tau = int(rng.integers(1, 3)), int(rng.integers(1, n))
    f, layout = build_lagrangian(scores, lam, mu, nu, tau)
    dense = dense_blocks(scores)
    for _ in range(10):
        point = rng.integers(0, 2, layout.num_vars)
        a = layout.split(point)
        want = direct_lagrangian(_blocks(a.x, sizes), a.e.tolist(), dense, lam, mu, nu, tau)
        assert evaluate(f, point) == pytest.approx(want, abs=1e-9)


def test_layout_respects_mask():
    mask = np.array([[0, 1, 0], [1, 0, 1], [0, 0, 0]], bool)
    layout = VariableLayout([2, 1, 3], mask)
    assert layout.num_x == 6 and layout.num_vars == 9
    assert layout.e_index[0, 2] == -1 and layout.e_index[2, 0] == -1
    point = np.arange(9) % 2
    a = layout.split(point)
    assert np.array_equal(layout.join(a), point)


def test_step_examples():
    cfg = DualConfig(nu=5, tau=1, alpha=0.1, beta=0.1)
    inner = Assignment(np.r_[np.ones(7), np.zeros(3), np.ones(3)], np.array([[0, 1], [1, 0]]), [10, 3])
    state = DualState(np.array([0.5, 0.1]), np.array([0.2, 0.0]), 0, np.zeros(13), np.zeros((2, 2)))
    new = subgradient_step(state, inner, cfg)
    np.testing.assert_allclose(new.lam, [0.7, 0.0])
    np.testing.assert_allclose(new.mu, [0.2, 0.0])
    assert new.t == 1 and np.array_equal(new.sum_x, inner.x)


def test_step_at_tight_constraints_is_identity():
    cfg = DualConfig(nu=1, tau=1)
    inner = Assignment([1, 0, 0, 1], np.array([[0, 1], [1, 0]]), [2, 2])
    state = DualState(np.array([0.3, 0.4]), np.array([0.5, 0.6]), 0, np.zeros(4), np.zeros((2, 2)))
    new = subgradient_step(state, inner, cfg)
    assert np.array_equal(new.lam, state.lam) and np.array_equal(new.mu, state.mu)


def test_duality_gap_examples():
    assert duality_gap(5.0, 5.0) == 0.0
    assert duality_gap(100.0, 95.0) == pytest.approx(0.05)
    assert duality_gap(0.0, 0.0) == 0.0
    with pytest.raises(InvariantError):
        duality_gap(1.0, 2.0)
    with pytest.raises(ValueError):
        duality_gap(1.0, -1.0)


def test_config_and_feasibility():
    with pytest.raises(ValueError):
        DualConfig(nu=0)
    with pytest.raises(ValueError):
        DualConfig(alpha=0)
    scores = random_scores(np.random.default_rng(1), 3, [2, 2, 2])
    with pytest.raises(DataError):
        run_dual(scores, DualConfig(nu=3, tau=1))
    with pytest.raises(DataError):
        run_dual(scores, DualConfig(nu=1, tau=3))


def test_single_iteration_is_unconstrained_maximizer():
    rng = np.random.default_rng(3)
    sizes = [3, 2, 3]
    scores = random_scores(rng, 3, sizes, density=0.4)
    res = run_dual(scores, DualConfig(nu=1, tau=1, iters=1))
    # every variable is 1: touched ones by the positive triples, the rest as free variables
    assert np.all(res.primal.x == 1) and np.all(res.primal.e[~np.eye(3, dtype=bool)] == 1)
    assert res.iterations == 1


def test_zero_scores():
    scores = PairScores([2, 2], {})
    res = run_dual(scores, DualConfig(nu=1, tau=1, iters=1))
    assert res.dual_bound == 0.0
    assert set(np.unique(res.primal.x)) <= {0.0, 1.0}
    # longer runs alternate between all-on and all-off, so averages sit in between
    res = run_dual(scores, DualConfig(nu=1, tau=1, iters=20))
    assert res.dual_bound == 0.0
    assert (res.primal.x >= 0).all() and (res.primal.x <= 1).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_weak_duality_exhaustive(seed):
    rng = np.random.default_rng(seed)
    scores = random_scores(rng, 3, [3, 3, 3], density=0.5)
    cfg = DualConfig(nu=1, tau=1, iters=40, alpha=0.05, beta=0.05)
    res = run_dual(scores, cfg)
    best = exhaustive_constrained_optimum(scores, 1, 1)
    assert res.dual_bound >= best - 1e-9
    assert duality_gap(res.dual_bound, best) >= 0
    # every inner value is itself an upper bound
    assert min(res.inner_values) >= best - 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_run_invariants(seed):
    rng = np.random.default_rng(seed)
    sizes = [3, 4, 2, 3]
    scores = random_scores(rng, 4, sizes)
    rows = []
    res = run_dual(scores, DualConfig(nu=2, tau=2, iters=15), on_iteration=rows.append)
    assert rows == res.history
    assert (res.lam >= 0).all() and (res.mu >= 0).all()
    p = res.primal
    assert (p.x >= 0).all() and (p.x <= 1).all() and (p.e >= 0).all() and (p.e <= 1).all()
    assert not np.diag(p.e).any()
    assert res.dual_bound == min(r.dual_value for r in res.history)
    assert all(r.max_violation >= 0 for r in res.history)


def test_slack_constraints_keep_multipliers_zero():
    rng = np.random.default_rng(9)
    sizes = [2, 2, 2]
    scores = random_scores(rng, 3, sizes, density=1.0)
    res = run_dual(scores, DualConfig(nu=2, tau=2, iters=5))
    assert not res.lam.any() and not res.mu.any()
    assert np.all(res.primal.x == 1)
    ones = Assignment(np.ones(6), 1 - np.eye(3), sizes)
    assert res.dual_bound == pytest.approx(objective_value(ones, scores))


def test_mask_removes_links():
    rng = np.random.default_rng(2)
    scores = random_scores(rng, 3, [2, 2, 2], density=1.0)
    mask = np.array([[0, 1, 1], [1, 0, 1], [1, 0, 0]], bool)
    res = run_dual(scores, DualConfig(nu=1, tau=1, iters=5), mask=mask)
    assert res.primal.e[2, 1] == 0


def test_write_trace(tmp_path):
    scores = random_scores(np.random.default_rng(0), 3, [2, 2, 2])
    res = run_dual(scores, DualConfig(nu=1, tau=1, iters=3))
    path = tmp_path / "trace.csv"
    write_trace(res.history, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,dual_value,max_violation" and len(lines) == 4
    assert max_violation(Assignment([1, 1], np.zeros((2, 2)), [1, 1]), 1, 1) == 0.0
