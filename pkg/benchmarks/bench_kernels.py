"""Time the hot kernels under the numba and numpy backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs once per backend to warm up (numba compiles on first
call), then ``--repeat`` times; the best time is reported.  Results from
both backends are checked for equality before timing.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from objdisc import _accel
from objdisc.dual import DualConfig, run_dual
from objdisc.model import FractionalAssignment
from objdisc.pbf import CubicPBF, maximize
from objdisc.pipeline import DiscoverConfig, compute_scores
from objdisc.rounding import greedy_ascent
from objdisc.standout import StandoutConfig, build_containment, standout_exact, standout_fast
from objdisc.similarity import similarity_matrix
from objdisc.synthetic import SyntheticSpec, generate_synthetic


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    if hasattr(a, "assignment"):
        return a.assignment == b.assignment and a.trace == b.trace
    if hasattr(a, "dual_bound"):
        return a.dual_bound == b.dual_bound and np.array_equal(a.primal.x, b.primal.x)
    return a == b


def workloads():
    ds = generate_synthetic(SyntheticSpec(n=20, proposals=60), seed=0)
    a, b = ds[0], ds[1]
    s = similarity_matrix(a, b)
    ca, cb = build_containment(a), build_containment(b)

    small = generate_synthetic(SyntheticSpec(n=20, proposals=20), seed=1)
    scores, _ = compute_scores(small, DiscoverConfig())
    start = FractionalAssignment.ones(scores.sizes)

    rng = np.random.default_rng(0)
    nv = 3000
    triples = np.array([rng.choice(nv, 3, replace=False) for _ in range(20000)])
    f = CubicPBF(nv, rng.uniform(0, 5, nv), triples, rng.uniform(0, 1, triples.shape[0]))

    return {
        "standout_exact (60x60)": lambda: standout_exact(s, ca, cb),
        "standout_fast (60x60)": lambda: standout_fast(s, ca, cb, StandoutConfig()),
        "greedy_ascent (n=20, p=20)": lambda: greedy_ascent(start, scores, 5, 10, seed=0),
        "maximize (3000 vars, 20000 triples)": lambda: maximize(f),
        "run_dual (n=20, p=20, 20 iters)": lambda: run_dual(scores, DualConfig(iters=20)),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="write the timings to this file")
    args = p.parse_args(argv)
    backends = [b for b in _accel.BACKENDS if b != "numba" or _accel.HAVE_NUMBA]
    rows = []
    for name, fn in workloads().items():
        outputs, timings = {}, {}
        for backend in backends:
            with _accel.backend(backend):
                outputs[backend] = fn()
                timings[backend] = _best(fn, args.repeat)
        equal = all(_same(outputs[backends[0]], outputs[b]) for b in backends[1:])
        rows.append({"kernel": name, "equal": equal, **{f"{b}_s": timings[b] for b in backends}})

    header = f"{'kernel':38s}" + "".join(f"{b + ' (s)':>14s}" for b in backends) + f"{'speedup':>10s}  equal"
    print(header)
    for r in rows:
        line = f"{r['kernel']:38s}" + "".join(f"{r[b + '_s']:14.4f}" for b in backends)
        speed = r["numpy_s"] / r["numba_s"] if "numba_s" in r and r["numba_s"] > 0 else float("nan")
        print(line + f"{speed:10.1f}  {r['equal']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
