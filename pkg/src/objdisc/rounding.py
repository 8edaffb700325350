"""Greedy ascent rounding of a fractional point to a feasible binary assignment.

Each sweep visits the images in a random order and sets ``x_i`` to the
``nu`` proposals with the largest interaction with the current rest of the
solution; then every ``e_i`` is set, in parallel, to the ``tau`` images with
the largest ``x_i^T S_ij x_j``.  Sweeps repeat with fresh permutations until
nothing changes or ``max_sweeps`` is reached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dual import check_feasible
from .model import Assignment, FractionalAssignment, PairScores, objective_value


class _EntryIndex:
    """Per-image lists of the score entries an image emits and receives."""

    def __init__(self, scores: PairScores):
        n = scores.n
        self.offsets = scores.offsets.astype(np.int64)
        self.out_ent = np.argsort(scores.src, kind="stable").astype(np.int64)
        self.out_ptr = np.searchsorted(scores.src[self.out_ent], np.arange(n + 1)).astype(np.int64)
        self.in_ent = np.argsort(scores.dst, kind="stable").astype(np.int64)
        self.in_ptr = np.searchsorted(scores.dst[self.in_ent], np.arange(n + 1)).astype(np.int64)


def top_indices(w: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` largest entries; lowest index first among ties."""
    return np.argsort(-w, kind="stable")[:count]


def update_links(scores: PairScores, x: np.ndarray, tau: int, allowed: np.ndarray) -> np.ndarray:
    """``e_i`` = indicator of the ``tau`` allowed images with the largest ``x_i^T S_ij x_j``."""
    n = scores.n
    w = np.where(allowed, scores.pair_weights(x), -np.inf)
    e = np.zeros((n, n))
    for i in range(n):
        e[i, top_indices(w[i], tau)] = 1.0
    return e


@dataclass(frozen=True, eq=False)
class GreedyResult:
    assignment: Assignment
    trace: list[float]
    sweeps: int
    converged: bool


def greedy_ascent(
    start: FractionalAssignment,
    scores: PairScores,
    nu: int,
    tau: int,
    seed: int | np.random.Generator | None = 0,
    max_sweeps: int = 50,
    mask: np.ndarray | None = None,
) -> GreedyResult:
    """Run the permutation sweeps; the trace holds the objective after each sweep."""
    check_feasible(scores.sizes, nu, tau, mask)
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    if not np.array_equal(start.sizes, scores.sizes):
        raise ValueError("start point does not match the score matrices")
    n = scores.n
    allowed = ~np.eye(n, dtype=bool)
    if mask is not None:
        allowed &= np.asarray(mask, dtype=bool)
    rng = np.random.default_rng(seed)
    idx = _EntryIndex(scores)
    x = np.array(start.x, dtype=np.float64)
    e = np.array(start.e, dtype=np.float64) * allowed
    src, dst, gk, gl, val = scores.src, scores.dst, scores.gk, scores.gl, scores.values

    trace: list[float] = []
    previous = None
    converged = False
    sweeps = 0
    for _ in range(max_sweeps):
        perm = rng.permutation(n)
        kernels.x_sweep(perm, nu, x, e, idx.offsets, idx.out_ptr, idx.out_ent, idx.in_ptr, idx.in_ent, src, dst, gk, gl, val)
        e = update_links(scores, x, tau, allowed)
        sweeps += 1
        current = Assignment(x.copy(), e, scores.sizes)
        trace.append(objective_value(current, scores))
        if previous is not None and current == previous:
            converged = True
            break
        previous = current
    return GreedyResult(current, trace, sweeps, converged)


def greedy_round(
    start: FractionalAssignment,
    scores: PairScores,
    nu: int,
    tau: int,
    rng_seed: int | None = 0,
    max_sweeps: int = 50,
    mask: np.ndarray | None = None,
) -> Assignment:
    return greedy_ascent(start, scores, nu, tau, rng_seed, max_sweeps, mask).assignment


def ascent_trace(
    start: FractionalAssignment,
    scores: PairScores,
    nu: int,
    tau: int,
    rng_seed: int | None = 0,
    max_sweeps: int = 50,
    mask: np.ndarray | None = None,
) -> list[float]:
    return greedy_ascent(start, scores, nu, tau, rng_seed, max_sweeps, mask).trace
