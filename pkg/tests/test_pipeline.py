import numpy as np
import pytest

from objdisc.evaluation import corloc
from objdisc.model import Rect
from objdisc.pipeline import DiscoverConfig, compute_scores, discover, run_seeds
from objdisc.similarity import similarity_matrix
from objdisc.standout import build_containment, sparsify_topk, standout_exact
from objdisc.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="module")
def small():
    return generate_synthetic(SyntheticSpec(n=9, classes=3, proposals=8, dim=12), seed=4)


def test_config_validation():
    for kw in ({"ensemble_runs": 0}, {"setting": "both"}, {"pooling": "min"}, {"prefilter_k": 0}, {"workers": 0}):
        with pytest.raises(ValueError):
            DiscoverConfig(**kw)
    a = DiscoverConfig(nu=2)
    assert a.score_fingerprint() == DiscoverConfig(nu=3, seed=9).score_fingerprint()
    assert a.score_fingerprint() != DiscoverConfig(top_k=5).score_fingerprint()


def test_run_seeds():
    assert run_seeds(0, 0, 3) == run_seeds(0, 0, 3)
    assert len(set(run_seeds(0, 0, 5))) == 5
    assert run_seeds(0, 0, 2) != run_seeds(0, 1, 2)


def test_exact_scores_match_direct_composition(small):
    cfg = DiscoverConfig(exact_standout=True, top_k=10)
    scores, stats = compute_scores(small, cfg)
    assert stats.pairs == 72 and stats.fallback_fraction == 0.0
    a, b = small[2], small[5]
    s = similarity_matrix(a, b)
    want = sparsify_topk(standout_exact(s, build_containment(a), build_containment(b)), 10)
    assert np.array_equal(scores[(2, 5)].to_dense(), want.to_dense())


def test_threaded_scores_equal_serial(small):
    s1, _ = compute_scores(small, DiscoverConfig(workers=1))
    s2, _ = compute_scores(small, DiscoverConfig(workers=3))
    assert np.array_equal(s1.values, s2.values) and np.array_equal(s1.gk, s2.gk)


@pytest.mark.parametrize("kw", [{"pooling": "average"}, {"top_m": 2}, {"continuous_opt": False}, {"exact_standout": True}])
def test_discover_variants(small, kw):
    cfg = DiscoverConfig(nu=2, tau=3, iters=15, ensemble_runs=2, **kw)
    res = discover(small, cfg)
    assert len(res.final_proposals) == 9
    assert (res.final_e.sum(axis=1) <= 3).all() and not np.diag(res.final_e).any()
    g = res.groups[0]
    if cfg.continuous_opt:
        assert g.gap >= 0 and g.dual.dual_bound >= g.best_primal - 1e-9
    if cfg.top_m == 2:
        assert all(len(p) == 2 for p in g.selection.proposals)
    preds = {im.id: Rect(*b) for im, b in zip(small, res.final_boxes(small))}
    assert 0 <= corloc(preds, small).value <= 100
