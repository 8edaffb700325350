"""Exact maximization of supermodular cubic pseudo-Boolean functions.

Functions have the form::

    f(x) = constant + sum_i c_i (1 - x_i) + sum_(a,b,c) c_abc x_a x_b x_c

with every coefficient nonnegative.  Maximizing ``f`` is a maximum-weight
stable set problem on the bipartite *conflict graph* whose ``V`` nodes are
the complemented unary monomials and whose ``W`` nodes are the cubic
monomials (a ``V`` node conflicts with every triple containing its
variable).  That stable set problem is solved as a minimum ``s``-``t`` cut:
``s -> V`` with capacity ``c_i``, ``W -> t`` with capacity ``c_abc`` and
uncuttable ``V -> W`` arcs.  With ``A`` the source side of the cut, the
selected monomials are ``(A & V) | (~A & W)``.

Capacities are scaled to 64-bit integers so the cut is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvariantError

DEFAULT_SCALE = 1e9
_INF = 1 << 62
_CAPACITY_LIMIT = 2**62


class CubicPBF:
    """``constant + unary . (1 - x) + sum triple_coef * x_a x_b x_c``.

    Parameters
    ----------
    num_vars : int
    unary : array of shape (num_vars,), optional
        Coefficient of the complemented monomial of each variable (0 = no term).
    triples : int array of shape (m, 3), optional
        Distinct variable indices of each cubic monomial.
    triple_coef : array of shape (m,), optional
    constant : float
    """

    def __init__(self, num_vars: int, unary=None, triples=None, triple_coef=None, constant: float = 0.0):
        self.num_vars = int(num_vars)
        n = self.num_vars
        self.unary = np.zeros(n) if unary is None else np.asarray(unary, dtype=np.float64).copy()
        if triples is None:
            triples = np.zeros((0, 3), dtype=np.int64)
        self.triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3).copy()
        m = self.triples.shape[0]
        self.triple_coef = np.zeros(m) if triple_coef is None else np.asarray(triple_coef, dtype=np.float64).ravel().copy()
        self.constant = float(constant)

        if self.unary.shape != (n,):
            raise ValueError(f"unary must have shape ({n},), got {self.unary.shape}")
        if self.triple_coef.shape != (m,):
            raise ValueError("triple_coef must have one entry per triple")
        if np.any(self.unary < 0) or np.any(self.triple_coef < 0):
            raise ValueError("all coefficients must be nonnegative (supermodular form)")
        if not (np.all(np.isfinite(self.unary)) and np.all(np.isfinite(self.triple_coef))):
            raise ValueError("coefficients must be finite")
        if m:
            if self.triples.min() < 0 or self.triples.max() >= n:
                raise ValueError("triple variable index out of range")
            t = self.triples
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 0] == t[:, 2]) | (t[:, 1] == t[:, 2])):
                raise ValueError("triple members must be distinct variables")
        for a in (self.unary, self.triples, self.triple_coef):
            a.setflags(write=False)

    @classmethod
    def from_terms(cls, num_vars: int, unary_terms=(), triple_terms=(), constant: float = 0.0) -> "CubicPBF":
        """Build from ``[(var, c)]`` and ``[((a, b, c), coef)]`` lists; repeated unary terms add up."""
        unary = np.zeros(num_vars)
        for var, c in unary_terms:
            if c < 0:
                raise ValueError("all coefficients must be nonnegative (supermodular form)")
            unary[var] += c
        triples = [t for t, _ in triple_terms]
        coefs = [c for _, c in triple_terms]
        return cls(num_vars, unary, np.array(triples, dtype=np.int64).reshape(-1, 3), coefs, constant)

    @property
    def num_triples(self) -> int:
        return int(self.triples.shape[0])

    def with_triple(self, triple, coef: float) -> "CubicPBF":
        return CubicPBF(
            self.num_vars,
            self.unary,
            np.vstack([self.triples, np.asarray(triple, dtype=np.int64).reshape(1, 3)]),
            np.append(self.triple_coef, coef),
            self.constant,
        )

    def scaled(self, scale: float = DEFAULT_SCALE) -> tuple[np.ndarray, np.ndarray]:
        """Integer-scaled unary and triple coefficients."""
        u = np.rint(self.unary * scale)
        c = np.rint(self.triple_coef * scale)
        total = float(u.sum() + c.sum())
        if total >= _CAPACITY_LIMIT:
            raise OverflowError(
                f"scaled coefficient total {total:.3g} exceeds the 64-bit capacity budget; lower the scale"
            )
        return u.astype(np.int64), c.astype(np.int64)


def _check_point(f: CubicPBF, point) -> np.ndarray:
    x = np.asarray(point)
    if x.shape != (f.num_vars,):
        raise ValueError(f"point must have length {f.num_vars}, got shape {x.shape}")
    return x


def evaluate(f: CubicPBF, point) -> float:
    x = _check_point(f, point).astype(np.float64)
    value = f.constant + float(f.unary @ (1.0 - x))
    if f.num_triples:
        t = f.triples
        value += float(f.triple_coef @ (x[t[:, 0]] * x[t[:, 1]] * x[t[:, 2]]))
    return value


def evaluate_scaled(f: CubicPBF, point, scale: float = DEFAULT_SCALE) -> int:
    """Value of ``f - constant`` in integer-scaled arithmetic."""
    x = _check_point(f, point).astype(np.int64)
    u, c = f.scaled(scale)
    value = int(u @ (1 - x))
    if f.num_triples:
        t = f.triples
        value += int(c @ (x[t[:, 0]] * x[t[:, 1]] * x[t[:, 2]]))
    return value


# ---------------------------------------------------------------------------
# Conflict graph and flow network
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConflictGraph:
    """Bipartite conflict graph: one ``V`` node per variable with a unary
    term, one ``W`` node per triple, an edge when the triple contains the
    ``V`` node's variable."""

    v_vars: np.ndarray
    v_weight: np.ndarray
    w_weight: np.ndarray
    edges: np.ndarray  # (E, 2): (index into v_vars, triple index)

    def to_dot(self, triples: np.ndarray | None = None) -> str:
        lines = ["graph conflict {", "  node [shape=ellipse];"]
        for a, (var, w) in enumerate(zip(self.v_vars, self.v_weight)):
            lines.append(f'  v{a} [label="~x{var}\\n{w:g}"];')
        for b, w in enumerate(self.w_weight):
            name = f"T{b}" if triples is None else "x" + "x".join(str(v) for v in triples[b])
            lines.append(f'  w{b} [shape=box, label="{name}\\n{w:g}"];')
        for a, b in self.edges:
            lines.append(f"  v{a} -- w{b};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _conflict_edges(num_vars: int, v_vars: np.ndarray, triples: np.ndarray) -> np.ndarray:
    v_of = np.full(num_vars, -1, dtype=np.int64)
    v_of[v_vars] = np.arange(v_vars.size)
    m = triples.shape[0]
    tri_idx = np.repeat(np.arange(m, dtype=np.int64), 3)
    v_idx = v_of[triples.ravel()]
    keep = v_idx >= 0
    return np.stack([v_idx[keep], tri_idx[keep]], axis=1)


def conflict_graph(f: CubicPBF) -> ConflictGraph:
    v_vars = np.flatnonzero(f.unary > 0)
    return ConflictGraph(
        v_vars=v_vars,
        v_weight=f.unary[v_vars],
        w_weight=f.triple_coef.copy(),
        edges=_conflict_edges(f.num_vars, v_vars, f.triples),
    )


class ConflictNetwork:
    """Flow network for a fixed set of triples and unary-term variables.

    The topology is built once; :meth:`solve` takes the current coefficients,
    so a sequence of functions sharing the same monomials (the Lagrangian
    across dual iterations) reuses the arc arrays.

    Node layout: 0 = source, 1 = sink, then one node per ``v_vars`` entry,
    then one node per triple.
    """

    def __init__(self, num_vars: int, triples: np.ndarray, v_vars: np.ndarray):
        self.num_vars = int(num_vars)
        self.triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.v_vars = np.asarray(v_vars, dtype=np.int64)
        nv = self.v_vars.size
        nw = self.triples.shape[0]
        self.num_nodes = 2 + nv + nw
        v_nodes = 2 + np.arange(nv, dtype=np.int64)
        w_nodes = 2 + nv + np.arange(nw, dtype=np.int64)
        edges = _conflict_edges(self.num_vars, self.v_vars, self.triples)

        # forward arcs: s->V, W->t, V->W, V->t; each followed by its reverse.
        # The V->t arcs carry zero capacity except in warm-started solves.
        tails = np.concatenate([np.zeros(nv, np.int64), w_nodes, v_nodes[edges[:, 0]], v_nodes])
        heads = np.concatenate([v_nodes, np.ones(nw, np.int64), w_nodes[edges[:, 1]], np.ones(nv, np.int64)])
        n_fwd = tails.size
        all_tails = np.concatenate([tails, heads])
        all_heads = np.concatenate([heads, tails])
        order = np.argsort(all_tails, kind="stable")
        pos = np.empty_like(order)
        pos[order] = np.arange(order.size)
        self.to = all_heads[order]
        self.start = np.searchsorted(all_tails[order], np.arange(self.num_nodes + 1)).astype(np.int64)
        self.rev = np.empty_like(order)
        self.rev[pos[:n_fwd]] = pos[n_fwd:]
        self.rev[pos[n_fwd:]] = pos[:n_fwd]
        self._src_arcs = pos[:nv]
        self._sink_arcs = pos[nv : nv + nw]
        self._inf_arcs = pos[nv + nw : n_fwd - nv]
        self._vt_arcs = pos[n_fwd - nv : n_fwd]
        self._v_nodes = v_nodes
        self._w_nodes = w_nodes
        self.num_arcs = int(order.size)
        self._residual: np.ndarray | None = None
        self._w_cap: np.ndarray | None = None
        self._offset = np.zeros(nv, dtype=np.int64)
        self._flow = 0

    def solve(self, v_cap: np.ndarray, w_cap: np.ndarray, warm: bool = False) -> tuple[int, np.ndarray, np.ndarray]:
        """Min cut for integer capacities.

        Returns ``(cut value, V nodes on the source side, W nodes on the sink side)``.

        With ``warm`` set and ``w_cap`` unchanged since the previous warm
        solve, the flow found then is kept and only augmented.  Where a new
        source capacity is below the flow already carried, the same amount is
        added to the node's source and sink arcs; that shifts every cut by a
        constant, so the minimal source side (and hence the point) is the same
        as in a cold solve.
        """
        v_cap = np.asarray(v_cap, dtype=np.int64)
        w_cap = np.asarray(w_cap, dtype=np.int64)
        if warm and self._residual is not None and np.array_equal(w_cap, self._w_cap):
            cap = self._residual
            carried = cap[self.rev[self._src_arcs]]
            self._offset += np.maximum(carried - v_cap - self._offset, 0)
            cap[self._src_arcs] = v_cap + self._offset - carried
            cap[self._vt_arcs] = self._offset - cap[self.rev[self._vt_arcs]]
        else:
            cap = np.zeros(self.num_arcs, dtype=np.int64)
            cap[self._src_arcs] = v_cap
            cap[self._sink_arcs] = w_cap
            # above every finite cut, including warm-start offsets
            cap[self._inf_arcs] = _INF
            self._offset[:] = 0
            self._flow = 0
        if int(v_cap.sum()) + int(self._offset.sum()) + int(w_cap.sum()) >= _INF:
            raise OverflowError("capacities too large for the flow network")
        flow, reach = kernels.max_flow(self.num_nodes, self.start, self.to, cap, self.rev, 0, 1)
        self._flow += flow
        cut = self._flow - int(self._offset.sum())
        if warm:
            self._residual, self._w_cap = cap, w_cap.copy()
        else:
            self._residual = self._w_cap = None
        return cut, reach[self._v_nodes], ~reach[self._w_nodes]

    def point(self, v_in_source: np.ndarray) -> np.ndarray:
        """Variable values: 0 exactly for ``V`` nodes on the source side, 1 otherwise.

        Variables of selected triples are thereby 1; variables appearing in no
        selected monomial and carrying no unary weight are set to 1 as well.
        """
        x = np.ones(self.num_vars, dtype=np.int8)
        x[self.v_vars[v_in_source]] = 0
        return x


def maximize(f: CubicPBF, scale: float = DEFAULT_SCALE) -> tuple[np.ndarray, float]:
    """Exact maximizer of ``f`` and its value."""
    u, c = f.scaled(scale)
    v_vars = np.flatnonzero(u > 0)
    net = ConflictNetwork(f.num_vars, f.triples, v_vars)
    cut, v_src, w_sink = net.solve(u[v_vars], c)
    x = net.point(v_src)
    best = int(u.sum()) + int(c.sum()) - cut
    got = evaluate_scaled(f, x, scale)
    if got != best:
        raise InvariantError(f"cut value {best} does not match the extracted point's value {got}")
    return x, evaluate(f, x)


def brute_force_maximize(f: CubicPBF, scale: float | None = DEFAULT_SCALE, chunk: int = 1 << 16):
    """Exhaustive maximum over all ``2**num_vars`` points (``num_vars <= 25``).

    Point ``x`` is identified with the integer ``sum_i x_i 2**i``; among
    maximizers the smallest such integer is returned.  With ``scale`` set,
    values are compared in integer-scaled arithmetic, as :func:`maximize` does.
    """
    n = f.num_vars
    if n > 25:
        raise ValueError(f"brute force is limited to 25 variables, got {n}")
    if scale is None:
        u, c = f.unary, f.triple_coef
    else:
        u, c = f.scaled(scale)
    t = f.triples
    bits = np.arange(n, dtype=np.int64)
    best_val = None
    best_code = 0
    for lo in range(0, 1 << n, chunk):
        codes = np.arange(lo, min(lo + chunk, 1 << n), dtype=np.int64)
        x = ((codes[:, None] >> bits[None, :]) & 1).astype(u.dtype)
        vals = (1 - x) @ u
        if t.shape[0]:
            vals = vals + (x[:, t[:, 0]] * x[:, t[:, 1]] * x[:, t[:, 2]]) @ c
        a = int(np.argmax(vals))
        if best_val is None or vals[a] > best_val:
            best_val = vals[a]
            best_code = int(codes[a])
    point = ((best_code >> bits) & 1).astype(np.int8)
    return point, evaluate(f, point)


def all_points(n: int):
    """Every binary point of length ``n``, in increasing integer order."""
    for code in range(1 << n):
        yield np.array([(code >> i) & 1 for i in range(n)], dtype=np.int8)


__all__ = [
    "CubicPBF",
    "ConflictGraph",
    "ConflictNetwork",
    "all_points",
    "brute_force_maximize",
    "conflict_graph",
    "evaluate",
    "evaluate_scaled",
    "maximize",
]
