"""Lagrangian dual subgradient descent for the constrained discovery problem.

The cardinality constraints ``x_i . 1 <= nu`` and ``e_i . 1 <= tau`` are
moved into the objective with multipliers ``lam, mu >= 0``.  For fixed
multipliers the Lagrangian is a supermodular cubic pseudo-Boolean function
of ``(x, e)``, maximized exactly by :mod:`objdisc.pbf`; a binary maximizer is
also a maximizer over the unit hypercube, so each inner solve gives the
dual function value.  Multipliers follow projected subgradient steps and
the primal estimate is the running average of the inner maximizers.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DataError, InvariantError
from .model import Assignment, FractionalAssignment, PairScores
from .pbf import DEFAULT_SCALE, ConflictNetwork, CubicPBF, evaluate, evaluate_scaled

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DualConfig:
    nu: int = 5
    tau: int = 10
    alpha: float = 0.01
    beta: float = 0.01
    iters: int = 200
    tol: float = 1e-7
    normalize: bool = True
    scale: float = DEFAULT_SCALE

    def __post_init__(self):
        if self.nu < 1 or self.tau < 1:
            raise ValueError("nu and tau must be >= 1")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("step sizes must be positive")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")


def check_feasible(sizes, nu: int, tau: int, mask: np.ndarray | None = None) -> None:
    sizes = np.asarray(sizes)
    n = sizes.size
    if nu > sizes.min():
        raise DataError(f"nu={nu} exceeds the smallest proposal count {int(sizes.min())}")
    if tau > n - 1:
        raise DataError(f"tau={tau} exceeds n-1={n - 1}")
    if mask is not None:
        rows = (mask & ~np.eye(n, dtype=bool)).sum(axis=1)
        if rows.min() < tau:
            raise DataError(f"neighbor mask leaves only {int(rows.min())} candidates for some image; tau={tau}")


class VariableLayout:
    """Indexing of the Lagrangian's variables.

    Region variables come first in flat order; link variables ``e_ij``
    follow for each allowed ordered pair, row-major.  Pairs outside the
    neighbor mask get no variable (they are fixed to zero).
    """

    def __init__(self, sizes, mask: np.ndarray | None = None):
        self.sizes = np.asarray(sizes, dtype=np.int64)
        n = self.sizes.size
        allowed = np.ones((n, n), dtype=bool) if mask is None else np.asarray(mask, dtype=bool).copy()
        np.fill_diagonal(allowed, False)
        self.allowed = allowed
        self.num_x = int(self.sizes.sum())
        ei, ej = np.nonzero(allowed)
        self.e_pairs = np.stack([ei, ej], axis=1)
        self.e_index = np.full((n, n), -1, dtype=np.int64)
        self.e_index[ei, ej] = self.num_x + np.arange(ei.size)
        self.num_vars = self.num_x + ei.size
        self.x_image = np.repeat(np.arange(n), self.sizes)

    @property
    def n(self) -> int:
        return int(self.sizes.size)

    def row_counts(self) -> np.ndarray:
        return self.allowed.sum(axis=1)

    def split(self, point) -> Assignment:
        point = np.asarray(point, dtype=np.float64)
        e = np.zeros((self.n, self.n))
        e[self.e_pairs[:, 0], self.e_pairs[:, 1]] = point[self.num_x :]
        return Assignment(point[: self.num_x], e, self.sizes)

    def join(self, a: FractionalAssignment) -> np.ndarray:
        return np.concatenate([a.x, a.e[self.e_pairs[:, 0], self.e_pairs[:, 1]]])


def lagrangian_triples(scores: PairScores, layout: VariableLayout) -> tuple[np.ndarray, np.ndarray]:
    """Cubic monomials ``(e_ij, x_i^k, x_j^l)`` with their scores; entries on masked-out pairs are dropped."""
    ev = layout.e_index[scores.src, scores.dst]
    keep = ev >= 0
    triples = np.stack([ev[keep], scores.gk[keep], scores.gl[keep]], axis=1)
    return triples, scores.values[keep]


def _check_multipliers(lam, mu, n):
    lam = np.asarray(lam, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if lam.shape != (n,) or mu.shape != (n,):
        raise ValueError(f"multipliers must have shape ({n},)")
    if np.any(lam < 0) or np.any(mu < 0):
        raise ValueError("Lagrange multipliers must be nonnegative")
    return lam, mu


def _unary(layout: VariableLayout, lam, mu) -> np.ndarray:
    u = np.empty(layout.num_vars)
    u[: layout.num_x] = lam[layout.x_image]
    u[layout.num_x :] = mu[layout.e_pairs[:, 0]]
    return u


def _constant(layout: VariableLayout, lam, mu, nu, tau) -> float:
    return float(np.sum(nu * lam + tau * mu) - lam @ layout.sizes - mu @ layout.row_counts())


def build_lagrangian(
    scores: PairScores,
    lam,
    mu,
    nu: int,
    tau: int,
    mask: np.ndarray | None = None,
) -> tuple[CubicPBF, VariableLayout]:
    """The Lagrangian as a cubic pseudo-Boolean function of ``(x, e)``.

    ``evaluate(f, layout.join(a))`` equals
    ``S(x, e) - sum_i lam_i (x_i.1 - nu) + mu_i (e_i.1 - tau)``.
    """
    layout = VariableLayout(scores.sizes, mask)
    lam, mu = _check_multipliers(lam, mu, layout.n)
    triples, coef = lagrangian_triples(scores, layout)
    f = CubicPBF(layout.num_vars, _unary(layout, lam, mu), triples, coef, _constant(layout, lam, mu, nu, tau))
    return f, layout


@dataclass(frozen=True, eq=False)
class DualState:
    lam: np.ndarray
    mu: np.ndarray
    t: int = 0
    sum_x: np.ndarray | None = None
    sum_e: np.ndarray | None = None
    dual_values: tuple[float, ...] = ()

    @classmethod
    def initial(cls, sizes) -> "DualState":
        sizes = np.asarray(sizes)
        n = sizes.size
        return cls(np.zeros(n), np.zeros(n), 0, np.zeros(int(sizes.sum())), np.zeros((n, n)), ())

    def averages(self, sizes) -> FractionalAssignment:
        if self.t == 0:
            raise ValueError("no iterations recorded")
        return FractionalAssignment(self.sum_x / self.t, self.sum_e / self.t, sizes)


def subgradient_step(
    state: DualState,
    inner: Assignment,
    cfg: DualConfig,
    dual_value: float | None = None,
) -> DualState:
    """Projected subgradient update of the multipliers from an inner maximizer."""
    lam = np.maximum(state.lam + cfg.alpha * (inner.x_counts() - cfg.nu), 0.0)
    mu = np.maximum(state.mu + cfg.beta * (inner.e_counts() - cfg.tau), 0.0)
    history = state.dual_values if dual_value is None else state.dual_values + (float(dual_value),)
    return replace(
        state,
        lam=lam,
        mu=mu,
        t=state.t + 1,
        sum_x=state.sum_x + inner.x,
        sum_e=state.sum_e + inner.e,
        dual_values=history,
    )


@dataclass(frozen=True)
class TraceRow:
    t: int
    dual_value: float
    max_violation: float


@dataclass(frozen=True, eq=False)
class DualResult:
    primal: FractionalAssignment
    dual_bound: float
    history: list[TraceRow]
    lam: np.ndarray
    mu: np.ndarray
    iterations: int
    normalizer: float = 1.0
    inner_values: list[float] = field(default_factory=list)


def max_violation(a: Assignment, nu: int, tau: int) -> float:
    return float(max(0.0, np.max(a.x_counts() - nu), np.max(a.e_counts() - tau)))


def run_dual(
    scores: PairScores,
    cfg: DualConfig | None = None,
    mask: np.ndarray | None = None,
    on_iteration: Callable[[TraceRow], None] | None = None,
) -> DualResult:
    """Subgradient descent on the dual; returns the averaged primal and the best bound.

    Scores are divided by their maximum first (when ``cfg.normalize``), so
    the default step sizes do not depend on the score scale.  Reported dual
    values and multipliers are in the original units.
    """
    cfg = cfg or DualConfig()
    check_feasible(scores.sizes, cfg.nu, cfg.tau, mask)
    norm = scores.max_value() if cfg.normalize else 1.0
    if norm <= 0:
        norm = 1.0
    layout = VariableLayout(scores.sizes, mask)
    triples, coef = lagrangian_triples(scores, layout)
    coef = coef / norm
    net = ConflictNetwork(layout.num_vars, triples, np.arange(layout.num_vars))
    f0 = CubicPBF(layout.num_vars, None, triples, coef, 0.0)
    w_cap = f0.scaled(cfg.scale)[1]

    state = DualState.initial(scores.sizes)
    history: list[TraceRow] = []
    for t in range(cfg.iters):
        f = CubicPBF(
            layout.num_vars,
            _unary(layout, state.lam, state.mu),
            triples,
            coef,
            _constant(layout, state.lam, state.mu, cfg.nu, cfg.tau),
        )
        v_cap = f.scaled(cfg.scale)[0]
        cut, v_src, _ = net.solve(v_cap, w_cap, warm=True)
        point = net.point(v_src)
        expected = int(v_cap.sum()) + int(w_cap.sum()) - cut
        if evaluate_scaled(f, point, cfg.scale) != expected:
            raise InvariantError(f"iteration {t}: inner maximizer does not attain the cut value")
        value = evaluate(f, point)
        inner = layout.split(point)
        row = TraceRow(t, value * norm, max_violation(inner, cfg.nu, cfg.tau))
        history.append(row)
        if on_iteration is not None:
            on_iteration(row)
        new = subgradient_step(state, inner, cfg, value)
        moved = max(np.max(np.abs(new.lam - state.lam)), np.max(np.abs(new.mu - state.mu)))
        state = new
        if moved < cfg.tol:
            log.debug("dual converged after %d iterations", t + 1)
            break

    dual_bound = min(r.dual_value for r in history)
    return DualResult(
        primal=state.averages(scores.sizes),
        dual_bound=dual_bound,
        history=history,
        lam=state.lam * norm,
        mu=state.mu * norm,
        iterations=state.t,
        normalizer=norm,
        inner_values=[v * norm for v in state.dual_values],
    )


def duality_gap(dual_bound: float, best_primal_value: float, rtol: float = 1e-9) -> float:
    """Relative gap ``(bound - primal) / bound``.

    Raises :class:`InvariantError` if the primal value exceeds the bound,
    which weak duality rules out.
    """
    if best_primal_value < 0:
        raise ValueError("primal value must be nonnegative")
    slack = rtol * max(abs(dual_bound), 1.0)
    if best_primal_value > dual_bound + slack:
        raise InvariantError(
            f"weak duality violated: primal {best_primal_value!r} exceeds dual bound {dual_bound!r}"
        )
    if dual_bound <= 0:
        return 0.0
    return max(0.0, (dual_bound - best_primal_value) / dual_bound)


def write_trace(history: list[TraceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "dual_value", "max_violation"])
        for r in history:
            w.writerow([r.t, repr(r.dual_value), repr(r.max_violation)])
