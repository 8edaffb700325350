"""Ensemble post-processing: pool several greedy solutions, rank the
retained proposals and keep one region per image."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Assignment, FractionalAssignment, PairScores
from .rounding import top_indices


@dataclass(frozen=True, eq=False)
class PooledSolution:
    """Union (or mean, for average pooling) of several solutions.

    Cardinality constraints are not enforced here.
    """

    x: np.ndarray
    e: np.ndarray
    sizes: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def retained(self, i: int) -> np.ndarray:
        o = self.offsets
        return np.flatnonzero(self.x[o[i] : o[i + 1]] > 0)


def max_pool(solutions: Sequence[FractionalAssignment], mode: str = "max") -> PooledSolution:
    if not solutions:
        raise ValueError("need at least one solution to pool")
    sizes = solutions[0].sizes
    for s in solutions[1:]:
        if not np.array_equal(s.sizes, sizes):
            raise ValueError("solutions have inconsistent shapes")
    xs = np.stack([s.x for s in solutions])
    es = np.stack([s.e for s in solutions])
    if mode == "max":
        return PooledSolution(xs.max(axis=0), es.max(axis=0), np.asarray(sizes))
    if mode == "average":
        return PooledSolution(xs.mean(axis=0), es.mean(axis=0), np.asarray(sizes))
    raise ValueError(f"unknown pooling mode {mode!r}")


def _group_max(keys: np.ndarray, vals: np.ndarray):
    """Unique keys and the max value per key."""
    order = np.lexsort((vals, keys))
    keys, vals = keys[order], vals[order]
    last = np.flatnonzero(np.r_[keys[1:] != keys[:-1], True])
    return keys[last], vals[last]


def region_scores(pooled: PooledSolution, scores: PairScores, tau: int) -> np.ndarray:
    """Score of each proposal (flat order) from its best matches in neighboring images.

    ``u_i^k = xbar_i^k * sum_{j in N(i,k)} max_{l: xbar_j^l > 0} S_ij^kl`` where
    ``N(i,k)`` holds the (up to) ``tau`` linked images with the largest such
    maximum.
    """
    n = scores.n
    u = np.zeros(scores.num_x)
    if scores.nnz == 0:
        return u
    keep = (pooled.e[scores.src, scores.dst] > 0) & (pooled.x[scores.gk] > 0) & (pooled.x[scores.gl] > 0)
    if not keep.any():
        return u
    gk = scores.gk[keep]
    dst = scores.dst[keep]
    vals = scores.values[keep]
    keys, best = _group_max(gk * n + dst, vals)
    owner = keys // n
    # within each proposal, take the tau largest per-image maxima
    order = np.lexsort((-best, owner))
    owner, best = owner[order], best[order]
    start = np.searchsorted(owner, owner, side="left")
    rank = np.arange(owner.size) - start
    top = rank < tau
    np.add.at(u, owner[top], best[top])
    return u * pooled.x


@dataclass(frozen=True, eq=False)
class FinalSelection:
    proposals: list[np.ndarray]  # per image, selected proposal indices (best first)
    e: np.ndarray
    fallback_images: list[int]

    @property
    def best(self) -> list[int]:
        return [int(p[0]) for p in self.proposals]


def final_links(scores: PairScores, x: np.ndarray, tau: int, allowed: np.ndarray | None = None) -> np.ndarray:
    """Links maximizing the objective for fixed ``x``: up to ``tau`` positive-weight images per row."""
    n = scores.n
    w = scores.pair_weights(x)
    if allowed is not None:
        w = np.where(allowed, w, 0.0)
    np.fill_diagonal(w, 0.0)
    e = np.zeros((n, n))
    for i in range(n):
        for j in top_indices(w[i], tau):
            if w[i, j] > 0:
                e[i, j] = 1.0
    return e


def select_final(
    pooled: PooledSolution,
    u: np.ndarray,
    scores: PairScores,
    tau: int,
    top_m: int = 1,
    allowed: np.ndarray | None = None,
) -> FinalSelection:
    """Highest-scoring retained proposal(s) per image and the matching final links.

    An image with no retained proposal falls back to the proposal with the
    largest total outgoing score.
    """
    if top_m < 1:
        raise ValueError("top_m must be >= 1")
    offsets = pooled.offsets
    n = scores.n
    row_sums = np.bincount(scores.gk, weights=scores.values, minlength=scores.num_x)
    picks: list[np.ndarray] = []
    fallback: list[int] = []
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        kept = pooled.retained(i)
        if kept.size == 0:
            fallback.append(i)
            ranked = top_indices(row_sums[lo:hi], top_m)
        else:
            ranked = kept[top_indices(u[lo:hi][kept], top_m)]
        picks.append(np.asarray(ranked, dtype=np.int64))
    x = np.zeros(scores.num_x)
    for i, ks in enumerate(picks):
        x[offsets[i] + ks] = 1.0
    return FinalSelection(picks, final_links(scores, x, tau, allowed), fallback)


def ensemble_select(
    solutions: Sequence[Assignment],
    scores: PairScores,
    tau: int,
    mode: str = "max",
    top_m: int = 1,
    allowed: np.ndarray | None = None,
) -> tuple[FinalSelection, np.ndarray]:
    pooled = max_pool(solutions, mode)
    u = region_scores(pooled, scores, tau)
    return select_final(pooled, u, scores, tau, top_m, allowed), u
