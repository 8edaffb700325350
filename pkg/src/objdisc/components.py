"""Connected components of the final region graph, by iterative thresholding.

Nodes are the final regions (one per image).  Two regions are joined when
their images are linked in either direction and their stand-out score
exceeds a threshold.  Components are peeled off in rounds: each round picks
the smallest threshold at which no component is larger than ``max_size``,
emits the components whose size lies in ``[min_size, max_size]`` and
removes them from the graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


@dataclass(frozen=True)
class Component:
    nodes: tuple[int, ...]
    threshold: float


def _labels(n: int, edges: np.ndarray, weights: np.ndarray, threshold: float) -> np.ndarray:
    keep = weights > threshold
    g = coo_matrix((np.ones(int(keep.sum())), (edges[keep, 0], edges[keep, 1])), shape=(n, n))
    return connected_components(g, directed=False)[1]


def extract_components(
    num_nodes: int,
    edges,
    weights,
    min_size: int = 4,
    max_size: int | None = None,
    target: int = 10,
) -> list[Component]:
    """Peel off up to ``target`` components; see the module docstring."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if max_size is None:
        max_size = max(num_nodes // 2, 1)
    if min_size < 1 or max_size < min_size:
        raise ValueError("need 1 <= min_size <= max_size")
    alive = np.ones(num_nodes, dtype=bool)
    found: list[Component] = []
    while len(found) < target and alive.sum() >= min_size:
        live = alive[edges[:, 0]] & alive[edges[:, 1]] if edges.size else np.zeros(0, bool)
        e, w = edges[live], weights[live]
        thresholds = np.unique(np.concatenate([[0.0], w[w > 0]]))

        def too_big(t):
            lab = _labels(num_nodes, e, w, t)
            sizes = np.bincount(lab[alive])
            return sizes.max() > max_size

        # largest component size shrinks as the threshold grows: bisect
        lo, hi = 0, thresholds.size - 1
        if too_big(thresholds[hi]):
            break
        while lo < hi:
            mid = (lo + hi) // 2
            if too_big(thresholds[mid]):
                lo = mid + 1
            else:
                hi = mid
        t = float(thresholds[lo])
        lab = _labels(num_nodes, e, w, t)
        groups: dict[int, list[int]] = {}
        for v in np.flatnonzero(alive):
            groups.setdefault(int(lab[v]), []).append(int(v))
        emit = sorted(
            (g for g in groups.values() if min_size <= len(g) <= max_size), key=lambda g: (-len(g), g[0])
        )
        if not emit:
            break
        for g in emit[: target - len(found)]:
            found.append(Component(tuple(g), t))
            alive[g] = False
    return found


def solution_graph(solution: dict) -> tuple[int, np.ndarray, np.ndarray]:
    """Undirected region-graph edges from a solution record; an edge's weight
    is the larger of its two directed stand-out scores."""
    n = len(solution["images"])
    rows = [r for g in solution["groups"] for r in g.get("final_edges", [])]
    if not rows:
        return n, np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    arr = np.asarray(rows, dtype=np.float64)
    return n, arr[:, :2].astype(np.int64), np.maximum(arr[:, 2], arr[:, 3])


def components_to_dot(solution: dict, components: list[Component], edges, weights, labels=None) -> str:
    ids = solution["images"]
    props = solution["final"]["proposals"]
    lines = ["graph regions {", "  node [shape=box, style=filled];"]
    palette = ["#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5", "#d9d9d9", "#bc80bd"]
    for c_idx, comp in enumerate(components):
        lines.append(f"  subgraph cluster_{c_idx} {{")
        lines.append(f'    label="component {c_idx} (threshold {comp.threshold:.6g})";')
        color = palette[c_idx % len(palette)]
        for v in comp.nodes:
            extra = f"\\n{labels[v]}" if labels is not None else ""
            lines.append(f'    n{v} [label="{ids[v]}:{props[v]}{extra}", fillcolor="{color}"];')
        members = set(comp.nodes)
        for (a, b), w in zip(edges, weights):
            if a in members and b in members and w > comp.threshold:
                lines.append(f'    n{a} -- n{b} [label="{w:.3g}"];')
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def components_listing(solution: dict, components: list[Component], labels=None) -> list[dict]:
    ids = solution["images"]
    props = solution["final"]["proposals"]
    out = []
    for c_idx, comp in enumerate(components):
        rec = {
            "index": c_idx,
            "threshold": comp.threshold,
            "size": len(comp.nodes),
            "images": [ids[v] for v in comp.nodes],
            "proposals": [props[v] for v in comp.nodes],
        }
        if labels is not None:
            rec["classes"] = [labels[v] for v in comp.nodes]
        out.append(rec)
    return out


def majority_purity(component: Component, labels) -> tuple[str, float]:
    vals, counts = np.unique([labels[v] for v in component.nodes], return_counts=True)
    best = int(np.argmax(counts))
    return str(vals[best]), counts[best] / len(component.nodes)
