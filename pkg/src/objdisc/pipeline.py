"""End-to-end discovery: scores, optional dual optimization, greedy runs, ensemble."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .dual import DualConfig, DualResult, TraceRow, build_lagrangian, check_feasible, duality_gap, run_dual
from .ensemble import FinalSelection, ensemble_select
from .errors import DataError
from .evaluation import UNLABELED, prefilter_neighbors
from .io import ScoreCache, adjacency_lists
from .model import Dataset, FractionalAssignment, PairScores, SparseScoreMatrix
from .pbf import conflict_graph
from .rounding import GreedyResult, greedy_ascent
from .similarity import HoughSpace, similarity_matrix
from .standout import StandoutConfig, build_containment, sparsify_topk, standout_exact, standout_fast

log = logging.getLogger(__name__)

SOLUTION_FORMAT = "objdisc-solution/1"


@dataclass(frozen=True)
class DiscoverConfig:
    nu: int = 5
    tau: int = 10
    top_k: int = 1000
    normalize_similarity: bool = True
    continuous_opt: bool = True
    ensemble_runs: int = 5
    seed: int = 0
    prefilter_k: int | None = None
    exact_standout: bool = False
    max_sweeps: int = 50
    alpha: float = 0.01
    beta: float = 0.01
    iters: int = 200
    q: int = 10000
    rho: float = 0.5
    delta: float = 0.8
    gamma: float = 2.0
    hough: tuple[int, int, int, int] = (8, 8, 5, 5)
    setting: str = "mixed"
    pooling: str = "max"
    top_m: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.ensemble_runs < 1:
            raise ValueError("ensemble_runs must be >= 1")
        if self.setting not in ("mixed", "separate"):
            raise ValueError("setting must be 'mixed' or 'separate'")
        if self.pooling not in ("max", "average"):
            raise ValueError("pooling must be 'max' or 'average'")
        if self.prefilter_k is not None and self.prefilter_k < 1:
            raise ValueError("prefilter_k must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "hough", tuple(int(b) for b in self.hough))

    @property
    def standout(self) -> StandoutConfig:
        return StandoutConfig(self.rho, self.delta, self.gamma, self.q, self.top_k)

    @property
    def hough_space(self) -> HoughSpace:
        return HoughSpace(*self.hough)

    def dual(self, tau: int | None = None) -> DualConfig:
        return DualConfig(
            nu=self.nu, tau=self.tau if tau is None else tau, alpha=self.alpha, beta=self.beta, iters=self.iters
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hough"] = list(self.hough)
        return d

    def score_fingerprint(self) -> str:
        keys = ("top_k", "normalize_similarity", "exact_standout", "q", "rho", "delta", "gamma", "hough")
        blob = json.dumps({k: self.to_dict()[k] for k in keys}, sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------


@dataclass
class ScoreStats:
    pairs: int = 0
    nnz: int = 0
    fallback_fraction: float = 0.0
    cached: int = 0


def compute_scores(
    dataset: Dataset,
    cfg: DiscoverConfig,
    mask: np.ndarray | None = None,
    cache: ScoreCache | None = None,
) -> tuple[PairScores, ScoreStats]:
    """Sparse stand-out matrices for every ordered pair allowed by ``mask``."""
    if not dataset.has_features:
        missing = next(im.id for im in dataset if im.features is None)
        raise DataError(f"image {missing!r} has no features")
    n = len(dataset)
    allowed = ~np.eye(n, dtype=bool) if mask is None else (np.asarray(mask, bool) & ~np.eye(n, dtype=bool))
    pairs = [tuple(p) for p in np.argwhere(allowed).tolist()]
    scfg = cfg.standout
    hough = cfg.hough_space
    containment = [build_containment(im, scfg) for im in dataset]

    def one(pair):
        i, j = pair
        a, b = dataset[i], dataset[j]
        if cache is not None:
            hit = cache.get(a.id, b.id)
            if hit is not None:
                return hit, None, True
        s = similarity_matrix(a, b, hough, cfg.normalize_similarity)
        if cfg.exact_standout:
            S, frac = standout_exact(s, containment[i], containment[j]), None
        else:
            S, frac = standout_fast(s, containment[i], containment[j], scfg)
        m = sparsify_topk(S, scfg.top_k)
        if cache is not None:
            cache.put(a.id, b.id, m)
        return m, frac, False

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]

    matrices: dict[tuple[int, int], SparseScoreMatrix] = {}
    stats = ScoreStats(pairs=len(pairs))
    fracs = []
    for pair, (m, frac, hit) in zip(pairs, results):
        if m.nnz:
            matrices[pair] = m
        stats.cached += int(hit)
        if frac is not None:
            fracs.append(frac)
    scores = PairScores(dataset.sizes, matrices)
    stats.nnz = scores.nnz
    stats.fallback_fraction = float(np.mean(fracs)) if fracs else 0.0
    return scores, stats


# ---------------------------------------------------------------------------
# Discovery
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GroupResult:
    name: str
    indices: list[int]
    tau: int
    scores: PairScores
    score_stats: ScoreStats
    runs: list[GreedyResult]
    run_seeds: list[int]
    selection: FinalSelection
    region_scores: np.ndarray
    dual: DualResult | None = None
    gap: float | None = None
    mask: np.ndarray | None = None

    @property
    def best_primal(self) -> float:
        return max(r.trace[-1] for r in self.runs)


@dataclass(eq=False)
class DiscoveryResult:
    config: DiscoverConfig
    image_ids: list[str]
    final_proposals: list[int]
    final_e: np.ndarray
    groups: list[GroupResult] = field(default_factory=list)

    def final_boxes(self, dataset: Dataset) -> list[list[float]]:
        return [dataset[i].proposals[k].tolist() for i, k in enumerate(self.final_proposals)]

    def to_dict(self, dataset: Dataset, trace_file: str | None = None) -> dict:
        groups = []
        for g in self.groups:
            ids = [self.image_ids[i] for i in g.indices]
            runs = []
            for seed, r in zip(g.run_seeds, g.runs):
                a = r.assignment
                runs.append(
                    {
                        "seed": seed,
                        "objective": r.trace[-1],
                        "sweeps": r.sweeps,
                        "converged": r.converged,
                        "x": [a.selected(i).tolist() for i in range(a.n)],
                        "e": [[g.indices[j] for j in row] for row in adjacency_lists(a.e)],
                    }
                )
            gd = {
                "name": g.name,
                "images": ids,
                "tau": g.tau,
                "score_pairs": g.score_stats.pairs,
                "score_nnz": g.score_stats.nnz,
                "standout_fallback_fraction": g.score_stats.fallback_fraction,
                "best_primal": g.best_primal,
                "runs": runs,
                "final_edges": _final_edges(g, self.final_proposals),
            }
            if g.dual is not None:
                gd["dual"] = {
                    "bound": g.dual.dual_bound,
                    "iterations": g.dual.iterations,
                    "gap": g.gap,
                    "trace_file": trace_file,
                    "final_lambda": g.dual.lam,
                    "final_mu": g.dual.mu,
                }
            groups.append(gd)
        return {
            "format": SOLUTION_FORMAT,
            "version": __version__,
            "config": self.config.to_dict(),
            "images": self.image_ids,
            "final": {
                "proposals": self.final_proposals,
                "boxes": self.final_boxes(dataset),
                "e": adjacency_lists(self.final_e),
            },
            "groups": groups,
        }


def _final_edges(g: GroupResult, final_proposals: list[int]) -> list[list]:
    """Undirected links among the group's final regions, with the stand-out score of each direction."""
    local = [final_proposals[i] for i in g.indices]
    e = g.selection.e
    und = (e > 0) | (e.T > 0)
    out = []
    for a, b in zip(*np.nonzero(np.triu(und, 1))):
        s_ab = _entry(g.scores[(a, b)], local[a], local[b])
        s_ba = _entry(g.scores[(b, a)], local[b], local[a])
        out.append([g.indices[a], g.indices[b], s_ab, s_ba])
    return out


def _entry(m: SparseScoreMatrix, k: int, l: int) -> float:
    hit = np.flatnonzero((m.k == k) & (m.l == l))
    return float(m.values[hit[0]]) if hit.size else 0.0


def _groups(dataset: Dataset, setting: str) -> list[tuple[str, list[int]]]:
    if setting == "mixed":
        return [("all", list(range(len(dataset))))]
    by_class: dict[str, list[int]] = {}
    for i, im in enumerate(dataset):
        by_class.setdefault(im.class_label or UNLABELED, []).append(i)
    out = sorted(by_class.items())
    for name, idx in out:
        if len(idx) < 2:
            raise DataError(f"class {name!r} has a single image; separate setting needs at least 2 per class")
    return out


def run_seeds(master: int, group: int, count: int) -> list[int]:
    ss = np.random.SeedSequence([int(master), int(group)])
    return [int(c.generate_state(1)[0]) for c in ss.spawn(count)]


def discover(
    dataset: Dataset,
    cfg: DiscoverConfig | None = None,
    cache_dir=None,
    on_iteration: Callable[[str, TraceRow], None] | None = None,
    conflict_dot: Path | None = None,
) -> DiscoveryResult:
    cfg = cfg or DiscoverConfig()
    if not dataset.has_features:
        missing = next(im.id for im in dataset if im.features is None)
        raise DataError(f"image {missing!r} has no features")
    n_all = len(dataset)
    final_props = [0] * n_all
    final_e = np.zeros((n_all, n_all))
    cache = ScoreCache(cache_dir, cfg.score_fingerprint()) if cache_dir is not None else None
    groups = []

    for gidx, (name, idx) in enumerate(_groups(dataset, cfg.setting)):
        sub = dataset.subset(idx) if cfg.setting == "separate" else dataset
        tau = cfg.tau
        if cfg.setting == "separate" and tau > len(idx) - 1:
            log.info("class %s: tau lowered to %d (class has %d images)", name, len(idx) - 1, len(idx))
            tau = len(idx) - 1
        mask = None
        if cfg.prefilter_k is not None and cfg.prefilter_k < len(sub) - 1:
            mask = prefilter_neighbors(sub, cfg.prefilter_k)
        check_feasible(sub.sizes, cfg.nu, tau, mask)

        scores, stats = compute_scores(sub, cfg, mask, cache)
        log.info("group %s: %d pairs, %d stored scores", name, stats.pairs, stats.nnz)

        dual = None
        if cfg.continuous_opt:
            if conflict_dot is not None and gidx == 0:
                n = scores.n
                f, _ = build_lagrangian(scores, np.zeros(n), np.zeros(n), cfg.nu, tau, mask)
                Path(conflict_dot).write_text(conflict_graph(f).to_dot(f.triples))
            hook = None if on_iteration is None else (lambda row, _n=name: on_iteration(_n, row))
            dual = run_dual(scores, cfg.dual(tau), mask, hook)
            start = dual.primal
        else:
            start = FractionalAssignment.ones(scores.sizes, mask)

        seeds = run_seeds(cfg.seed, gidx, cfg.ensemble_runs)
        runs = [greedy_ascent(start, scores, cfg.nu, tau, s, cfg.max_sweeps, mask) for s in seeds]
        allowed = None if mask is None else mask & ~np.eye(len(sub), dtype=bool)
        selection, u = ensemble_select(
            [r.assignment for r in runs], scores, tau, cfg.pooling, cfg.top_m, allowed
        )
        if selection.fallback_images:
            log.warning("group %s: %d images had no retained proposal", name, len(selection.fallback_images))

        gap = None
        if dual is not None:
            best = max(r.trace[-1] for r in runs)
            gap = duality_gap(dual.dual_bound, best)

        for local, gi in enumerate(idx):
            final_props[gi] = selection.best[local]
        final_e[np.ix_(idx, idx)] = selection.e
        groups.append(
            GroupResult(name, list(idx), tau, scores, stats, runs, seeds, selection, u, dual, gap, mask)
        )

    return DiscoveryResult(cfg, dataset.ids, final_props, final_e, groups)
