"""Hot inner loops.

Every public function here dispatches on :func:`objdisc._accel.use_numba`:
the numba path runs an ``@njit`` loop kernel, the fallback runs a numpy
version (or, for max-flow, the same loop interpreted by Python).  Both paths
produce bit-identical results; ``tests/test_kernels.py`` checks this.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit

# ---------------------------------------------------------------------------
# Background maxima for stand-out scores
# ---------------------------------------------------------------------------


def _background_max_loop(s, bi_ptr, bi_idx, bj_ptr, bj_idx, mask):
    pi, pj = s.shape
    v = np.zeros((pi, pj))
    rowmax = np.zeros(pj)
    for k in range(pi):
        if bi_ptr[k + 1] == bi_ptr[k]:
            continue
        wanted = False
        for l in range(pj):
            if mask[k, l]:
                wanted = True
                break
        if not wanted:
            continue
        # max over k' in B_i^k first, then over l' in B_j^l
        for l in range(pj):
            rowmax[l] = 0.0
        for a in range(bi_ptr[k], bi_ptr[k + 1]):
            kk = bi_idx[a]
            for l in range(pj):
                if s[kk, l] > rowmax[l]:
                    rowmax[l] = s[kk, l]
        for l in range(pj):
            if not mask[k, l]:
                continue
            m = 0.0
            for b in range(bj_ptr[l], bj_ptr[l + 1]):
                val = rowmax[bj_idx[b]]
                if val > m:
                    m = val
            v[k, l] = m
    return v


_background_max_nb = njit(_background_max_loop)


def _background_max_np(s, bi_ptr, bi_idx, bj_ptr, bj_idx, mask):
    pi, pj = s.shape
    v = np.zeros((pi, pj))
    rows = np.flatnonzero((np.diff(bi_ptr) > 0) & mask.any(axis=1))
    if rows.size == 0:
        return v
    rowmax = np.zeros((rows.size, pj))
    for r, k in enumerate(rows):
        rowmax[r] = s[bi_idx[bi_ptr[k] : bi_ptr[k + 1]]].max(axis=0)
    for l in np.flatnonzero(np.diff(bj_ptr) > 0):
        cols = bj_idx[bj_ptr[l] : bj_ptr[l + 1]]
        v[rows, l] = rowmax[:, cols].max(axis=1)
    return np.where(mask, v, 0.0)


def background_max(s, bi_ptr, bi_idx, bj_ptr, bj_idx, mask=None) -> np.ndarray:
    """``v[k, l] = max s[B_i^k x B_j^l]`` (0 for empty sets), where ``mask`` is set.

    Background sets come in CSR form (``ptr``, ``idx``).
    """
    s = np.ascontiguousarray(s, dtype=np.float64)
    if mask is None:
        mask = np.ones(s.shape, dtype=np.bool_)
    args = (s, bi_ptr, bi_idx, bj_ptr, bj_idx, np.ascontiguousarray(mask, dtype=np.bool_))
    if _accel.use_numba():
        return _background_max_nb(*args)
    return _background_max_np(*args)


# ---------------------------------------------------------------------------
# Part propagation for the fast stand-out heuristic
# ---------------------------------------------------------------------------


def _propagate_parts_loop(s, qk, ql, pi_ptr, pi_idx, pj_ptr, pj_idx):
    v = np.zeros(s.shape)
    for t in range(qk.size):
        kk = qk[t]
        ll = ql[t]
        val = s[kk, ll]
        for a in range(pi_ptr[kk], pi_ptr[kk + 1]):
            k = pi_idx[a]
            for b in range(pj_ptr[ll], pj_ptr[ll + 1]):
                v[k, pj_idx[b]] = val
    return v


_propagate_parts_nb = njit(_propagate_parts_loop)


def _propagate_parts_np(s, qk, ql, pi_ptr, pi_idx, pj_ptr, pj_idx):
    v = np.zeros(s.shape)
    for kk, ll in zip(qk, ql):
        rows = pi_idx[pi_ptr[kk] : pi_ptr[kk + 1]]
        cols = pj_idx[pj_ptr[ll] : pj_ptr[ll + 1]]
        v[np.ix_(rows, cols)] = s[kk, ll]
    return v


def propagate_parts(s, qk, ql, pi_ptr, pi_idx, pj_ptr, pj_idx) -> np.ndarray:
    """For each match ``(qk[t], ql[t])`` in order, write its score over ``P_i x P_j``."""
    s = np.ascontiguousarray(s, dtype=np.float64)
    args = (s, np.asarray(qk, np.int64), np.asarray(ql, np.int64), pi_ptr, pi_idx, pj_ptr, pj_idx)
    if _accel.use_numba():
        return _propagate_parts_nb(*args)
    return _propagate_parts_np(*args)


# ---------------------------------------------------------------------------
# Greedy ascent: sequential x-block updates
# ---------------------------------------------------------------------------


def _x_sweep_loop(perm, nu, x, e, offsets, out_ptr, out_ent, in_ptr, in_ent, src, dst, gk, gl, val):
    for i in perm:
        o = offsets[i]
        p = offsets[i + 1] - o
        w = np.zeros(p)
        for t in range(out_ptr[i], out_ptr[i + 1]):
            a = out_ent[t]
            w[gk[a] - o] += e[i, dst[a]] * val[a] * x[gl[a]]
        for t in range(in_ptr[i], in_ptr[i + 1]):
            a = in_ent[t]
            w[gl[a] - o] += e[src[a], i] * val[a] * x[gk[a]]
        order = np.argsort(-w, kind="mergesort")
        for k in range(p):
            x[o + k] = 0.0
        for t in range(nu):
            x[o + order[t]] = 1.0


_x_sweep_nb = njit(_x_sweep_loop)


def _x_sweep_np(perm, nu, x, e, offsets, out_ptr, out_ent, in_ptr, in_ent, src, dst, gk, gl, val):
    for i in perm:
        o = offsets[i]
        p = offsets[i + 1] - o
        ao = out_ent[out_ptr[i] : out_ptr[i + 1]]
        ai = in_ent[in_ptr[i] : in_ptr[i + 1]]
        w = np.zeros(p)
        # sequential accumulation keeps summation order identical to the loop kernel
        for a_idx, pos, other, ew in (
            (ao, gk[ao] - o, gl[ao], e[i, dst[ao]]),
            (ai, gl[ai] - o, gk[ai], e[src[ai], i]),
        ):
            if a_idx.size:
                np.add.at(w, pos, ew * val[a_idx] * x[other])
        order = np.argsort(-w, kind="stable")
        x[o : o + p] = 0.0
        x[o + order[:nu]] = 1.0


def x_sweep(perm, nu, x, e, offsets, out_ptr, out_ent, in_ptr, in_ent, src, dst, gk, gl, val) -> None:
    """Update the region blocks ``x_i`` in the order ``perm``, in place.

    Each block gets ones at the ``nu`` largest entries of
    ``sum_j (e_ij S_ij + e_ji S_ji^T) x_j`` (lowest index wins ties).
    ``out_*``/``in_*`` list, per image, the entries where it is source/target.
    """
    args = (np.asarray(perm, np.int64), int(nu), x, e, offsets, out_ptr, out_ent, in_ptr, in_ent, src, dst, gk, gl, val)
    if _accel.use_numba():
        _x_sweep_nb(*args)
    else:
        _x_sweep_np(*args)


# ---------------------------------------------------------------------------
# Maximum flow (Dinic) with residual reachability
# ---------------------------------------------------------------------------


def _dinic_loop(n, start, to, cap, rev, s, t):
    flow = 0
    level = np.empty(n, np.int64)
    it = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    path = np.empty(n, np.int64)
    while True:
        for u in range(n):
            level[u] = -1
        level[s] = 0
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            u = queue[head]
            head += 1
            for a in range(start[u], start[u + 1]):
                v = to[a]
                if cap[a] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[tail] = v
                    tail += 1
        if level[t] < 0:
            break
        for u in range(n):
            it[u] = start[u]
        # blocking flow; after an augmentation the search resumes from the
        # tail of the first saturated arc instead of from the source
        depth = 0
        u = s
        while True:
            if u == t:
                b = cap[path[0]]
                for d in range(1, depth):
                    if cap[path[d]] < b:
                        b = cap[path[d]]
                first = -1
                for d in range(depth):
                    a = path[d]
                    cap[a] -= b
                    cap[rev[a]] += b
                    if first < 0 and cap[a] == 0:
                        first = d
                flow += b
                depth = first
                u = to[rev[path[first]]]
                continue
            advanced = False
            while it[u] < start[u + 1]:
                a = it[u]
                v = to[a]
                if cap[a] > 0 and level[v] == level[u] + 1:
                    path[depth] = a
                    depth += 1
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if not advanced:
                if depth == 0:
                    break
                depth -= 1
                u = to[rev[path[depth]]]
                it[u] += 1
    # source side of the minimum cut: nodes reachable in the residual graph
    reach = np.zeros(n, np.bool_)
    reach[s] = True
    head = 0
    tail = 1
    queue[0] = s
    while head < tail:
        u = queue[head]
        head += 1
        for a in range(start[u], start[u + 1]):
            v = to[a]
            if cap[a] > 0 and not reach[v]:
                reach[v] = True
                queue[tail] = v
                tail += 1
    return flow, reach


_dinic_nb = njit(_dinic_loop)


def max_flow(n, start, to, cap, rev, s, t):
    """Maximum ``s``-``t`` flow on a CSR arc list with integer capacities.

    ``cap`` holds residual capacities and is modified in place.  Returns the
    flow value and a boolean mask of the source side of a minimum cut.
    """
    if _accel.use_numba():
        flow, reach = _dinic_nb(int(n), start, to, cap, rev, int(s), int(t))
    else:
        flow, reach = _dinic_loop(int(n), start, to, cap, rev, int(s), int(t))
    return int(flow), reach
