"""Stand-out scores: similarity minus the best similarity of enclosing regions.

A match ``(k, l)`` keeps only the part of its similarity that exceeds every
match between regions that contain ``k`` and ``l`` (their *background*
sets); the result is thresholded at zero and sparsified to the top-K
entries per image pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import ImageRecord, SparseScoreMatrix, box_areas, pairwise_intersection


@dataclass(frozen=True)
class StandoutConfig:
    rho: float = 0.5
    delta: float = 0.8
    gamma: float = 2.0
    q: int = 10000
    top_k: int = 1000

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError("rho must be in (0, 1]")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must be in (0, 1]")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.q < 0:
            raise ValueError("q must be >= 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


def _csr(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts = mask.sum(axis=1)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    idx = np.nonzero(mask)[1].astype(np.int64)
    return ptr, idx


@dataclass(frozen=True, eq=False)
class ContainmentIndex:
    """Parts and background sets of every proposal of one image.

    ``parts[k, l]`` is true when proposal ``l`` is a part of ``k`` (every
    region is a part of itself); ``background[k, l]`` when ``l`` is
    background for ``k``.  ``parts_csr`` lists the *strict* parts only: a
    match must not overwrite its own background value with its own score.
    """

    parts: np.ndarray
    background: np.ndarray
    rho: float
    delta: float
    gamma: float

    def __post_init__(self):
        for name in ("parts", "background"):
            getattr(self, name).setflags(write=False)
        p_ptr, p_idx = _csr(self.parts & ~np.eye(self.parts.shape[0], dtype=bool))
        b_ptr, b_idx = _csr(self.background)
        object.__setattr__(self, "parts_csr", (p_ptr, p_idx))
        object.__setattr__(self, "background_csr", (b_ptr, b_idx))

    def parts_of(self, k: int) -> set[int]:
        return set(np.flatnonzero(self.parts[k]).tolist())

    def background_of(self, k: int) -> set[int]:
        return set(np.flatnonzero(self.background[k]).tolist())


def build_containment(image: ImageRecord, cfg: StandoutConfig | None = None) -> ContainmentIndex:
    cfg = cfg or StandoutConfig()
    boxes = image.proposals
    inter = pairwise_intersection(boxes, boxes)
    area = box_areas(boxes)
    parts = inter > cfg.rho * area[None, :]
    background = (inter > cfg.delta * area[:, None]) & (area[None, :] > cfg.gamma * area[:, None])
    return ContainmentIndex(parts, background, cfg.rho, cfg.delta, cfg.gamma)


def standout_exact(s: np.ndarray, ci: ContainmentIndex, cj: ContainmentIndex) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    v = kernels.background_max(s, *ci.background_csr, *cj.background_csr, mask=s > 0)
    return np.maximum(s - v, 0.0)


def top_matches(s: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``q`` highest-scoring positive matches, returned in increasing score order.

    Ties are ranked by ``(k, l)`` lexicographic order.
    """
    s = np.asarray(s)
    k, l = np.nonzero(s > 0)
    vals = s[k, l]
    order = np.lexsort((l, k, -vals))[:q]
    order = order[::-1]
    return k[order], l[order]


def propagate_part_scores(s: np.ndarray, ci: ContainmentIndex, cj: ContainmentIndex, q: int) -> np.ndarray:
    """First stage of the fast heuristic: spread top matches' scores to their parts."""
    qk, ql = top_matches(s, q)
    return kernels.propagate_parts(s, qk, ql, *ci.parts_csr, *cj.parts_csr)


def standout_fast(
    s: np.ndarray,
    ci: ContainmentIndex,
    cj: ContainmentIndex,
    cfg: StandoutConfig | None = None,
) -> tuple[np.ndarray, float]:
    """Stand-out scores via part propagation with brute-force fallback.

    Returns the stand-out matrix and the fraction of its entries whose
    background maximum had to be computed exhaustively.
    """
    cfg = cfg or StandoutConfig()
    s = np.asarray(s, dtype=np.float64)
    v = propagate_part_scores(s, ci, cj, cfg.q)
    fallback = (s > 0) & (v == 0)
    if fallback.any():
        exact = kernels.background_max(s, *ci.background_csr, *cj.background_csr, mask=fallback)
        v = np.where(fallback, exact, v)
    frac = float(fallback.sum()) / s.size if s.size else 0.0
    return np.maximum(s - v, 0.0), frac


def sparsify_topk(S: np.ndarray, top_k: int) -> SparseScoreMatrix:
    """Keep the ``top_k`` largest positive entries (ties by ``(k, l)``), stored in ``(k, l)`` order."""
    S = np.asarray(S, dtype=np.float64)
    k, l = np.nonzero(S > 0)
    vals = S[k, l]
    if vals.size > top_k:
        keep = np.sort(np.lexsort((l, k, -vals))[:top_k])
        k, l, vals = k[keep], l[keep], vals[keep]
    return SparseScoreMatrix(S.shape[0], S.shape[1], k, l, vals)
