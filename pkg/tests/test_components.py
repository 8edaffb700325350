import itertools

import numpy as np
import pytest

from objdisc.components import (
    Component,
    components_listing,
    components_to_dot,
    extract_components,
    majority_purity,
    solution_graph,
)


def _clique(nodes, w):
    pairs = list(itertools.combinations(nodes, 2))
    return pairs, [w] * len(pairs)


def test_no_edges():
    assert extract_components(8, np.zeros((0, 2)), np.zeros(0)) == []


def test_threshold_above_all_scores():
    edges, w = _clique(range(6), 0.0)
    assert extract_components(6, edges, w, min_size=2) == []


def test_single_clique():
    edges, w = _clique(range(6), 0.7)
    comps = extract_components(6, edges, w, max_size=6)
    assert comps == [Component(tuple(range(6)), 0.0)]
    # with the default cap of n // 2 only singletons fit, and they are below min_size
    assert extract_components(6, edges, w, min_size=2) == []


def test_two_cliques_split_by_threshold():
    e1, w1 = _clique(range(5), 0.9)
    e2, w2 = _clique(range(5, 10), 0.8)
    edges = e1 + e2 + [(4, 5)]
    weights = w1 + w2 + [0.1]
    comps = extract_components(10, edges, weights, min_size=4, max_size=5)
    assert [c.nodes for c in comps] == [(0, 1, 2, 3, 4), (5, 6, 7, 8, 9)]
    assert comps[0].threshold == pytest.approx(0.1)


def test_rounds_and_target():
    # a tight clique with a strong bridge to node 4, plus a looser clique;
    # the rest is found at a lower threshold once the first group is removed
    e1, w1 = _clique(range(4), 0.9)
    e2, w2 = _clique(range(4, 12), 0.5)
    edges = e1 + e2 + [(0, 4)]
    weights = w1 + w2 + [0.95]
    comps = extract_components(12, edges, weights, min_size=4, max_size=8)
    assert [(c.nodes, c.threshold) for c in comps] == [((0, 1, 2, 3, 4), 0.5), (tuple(range(5, 12)), 0.0)]
    assert len(extract_components(12, edges, weights, min_size=4, max_size=8, target=1)) == 1


def test_validation():
    with pytest.raises(ValueError):
        extract_components(4, [], [], min_size=3, max_size=2)


def _solution():
    return {
        "images": ["a", "b", "c", "d"],
        "final": {"proposals": [0, 2, 1, 0]},
        "groups": [{"final_edges": [[0, 1, 0.5, 0.7], [1, 2, 0.4, 0.0], [2, 3, 0.9, 0.9]]}],
    }


def test_solution_graph_and_exports():
    sol = _solution()
    n, edges, w = solution_graph(sol)
    assert n == 4 and edges.tolist() == [[0, 1], [1, 2], [2, 3]]
    assert w.tolist() == [0.7, 0.4, 0.9]
    comps = extract_components(n, edges, w, min_size=2, max_size=2)
    assert [c.nodes for c in comps] == [(0, 1), (2, 3)]
    labels = ["x", "x", "y", "y"]
    dot = components_to_dot(sol, comps, edges, w, labels)
    assert dot.startswith("graph regions {") and "subgraph cluster_1" in dot
    assert 'n2 [label="c:1\\ny"' in dot
    rows = components_listing(sol, comps, labels)
    assert rows[0]["images"] == ["a", "b"] and rows[0]["proposals"] == [0, 2]
    assert rows[1]["classes"] == ["y", "y"]
    assert solution_graph({"images": ["a"], "groups": [{}]})[1].shape == (0, 2)


def test_majority_purity():
    assert majority_purity(Component((0, 1, 2), 0.0), ["a", "b", "b"]) == ("b", pytest.approx(2 / 3))
