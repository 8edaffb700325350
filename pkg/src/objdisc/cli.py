"""Command line interface: ``synth``, ``discover``, ``evaluate``, ``export-graph``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .components import components_listing, components_to_dot, extract_components, solution_graph
from .errors import DataError, InvariantError
from .evaluation import corloc
from .io import dump_json, load_json, read_dataset, write_dataset
from .pipeline import SOLUTION_FORMAT, DiscoverConfig, discover
from .synthetic import SyntheticSpec, generate_synthetic

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="objdisc", description="Unsupervised image matching and object discovery.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--spec", type=Path, help="JSON file with generator parameters (defaults if omitted)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--features-sidecar", action="store_true", help="store features in float32 sidecar files")

    d = sub.add_parser("discover", help="run the discovery pipeline")
    d.add_argument("--dataset", type=Path, required=True)
    d.add_argument("--out", type=Path, required=True)
    d.add_argument("--nu", type=_positive, default=5)
    d.add_argument("--tau", type=_positive, default=10)
    d.add_argument("--top-k", type=_positive, default=1000)
    d.add_argument("--normalize-similarity", type=_bool, nargs="?", const=True, default=True, metavar="BOOL")
    d.add_argument("--continuous-opt", type=_bool, nargs="?", const=True, default=True, metavar="BOOL")
    d.add_argument("--ensemble-runs", type=_positive, default=5)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--prefilter-k", type=_positive, default=None)
    d.add_argument("--exact-standout", action="store_true")
    d.add_argument("--max-sweeps", type=_positive, default=50)
    d.add_argument("--alpha", type=float, default=0.01)
    d.add_argument("--beta", type=float, default=0.01)
    d.add_argument("--iters", type=_positive, default=200)
    d.add_argument("--setting", choices=("mixed", "separate"), default="mixed")
    d.add_argument("--pooling", choices=("max", "average"), default="max")
    d.add_argument("--top-m", type=_positive, default=1)
    d.add_argument("--workers", type=_positive, default=1)
    d.add_argument("--cache-dir", type=Path)
    d.add_argument("--trace", type=Path, help="stream per-iteration dual values to this CSV file")
    d.add_argument("--dump-conflict-graph", type=Path, metavar="DOT")

    e = sub.add_parser("evaluate", help="CorLoc of a solution")
    e.add_argument("--dataset", type=Path, required=True)
    e.add_argument("--solution", type=Path, required=True)
    e.add_argument("--setting", choices=("mixed", "separate"), default="mixed")
    e.add_argument("--csv", type=Path)

    g = sub.add_parser("export-graph", help="extract region-graph components")
    g.add_argument("--solution", type=Path, required=True)
    g.add_argument("--dataset", type=Path, help="adds class labels to the output")
    g.add_argument("--dot", type=Path)
    g.add_argument("--components", type=Path, help="JSON component listing (stdout if omitted)")
    g.add_argument("--min-size", type=_positive, default=4)
    g.add_argument("--max-size", type=_positive, default=None, help="default: half the number of images")
    g.add_argument("--target", type=_positive, default=10)
    return p


def _cmd_synth(args) -> int:
    spec = SyntheticSpec()
    if args.spec is not None:
        raw = load_json(args.spec)
        if not isinstance(raw, dict):
            raise DataError(f"{args.spec}: expected a JSON object")
        try:
            spec = SyntheticSpec.from_dict(raw)
        except (TypeError, ValueError) as exc:
            raise DataError(f"{args.spec}: {exc}") from None
    write_dataset(generate_synthetic(spec, args.seed), args.out, sidecar=args.features_sidecar)
    return EXIT_OK


def _config_from_args(args) -> DiscoverConfig:
    return DiscoverConfig(
        nu=args.nu,
        tau=args.tau,
        top_k=args.top_k,
        normalize_similarity=args.normalize_similarity,
        continuous_opt=args.continuous_opt,
        ensemble_runs=args.ensemble_runs,
        seed=args.seed,
        prefilter_k=args.prefilter_k,
        exact_standout=args.exact_standout,
        max_sweeps=args.max_sweeps,
        alpha=args.alpha,
        beta=args.beta,
        iters=args.iters,
        setting=args.setting,
        pooling=args.pooling,
        top_m=args.top_m,
        workers=args.workers,
    )


def _cmd_discover(args) -> int:
    dataset = read_dataset(args.dataset)
    cfg = _config_from_args(args)
    trace_fh = writer = None
    hook = None
    if args.trace is not None:
        trace_fh = open(args.trace, "w", newline="")
        writer = csv.writer(trace_fh, lineterminator="\n")
        writer.writerow(["t", "dual_value", "max_violation", "group"])

        def write_row(group, row):
            writer.writerow([row.t, repr(row.dual_value), repr(row.max_violation), group])
            trace_fh.flush()

        hook = write_row

    try:
        result = discover(dataset, cfg, args.cache_dir, hook, args.dump_conflict_graph)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    dump_json(result.to_dict(dataset, str(args.trace) if args.trace else None), args.out)
    for g in result.groups:
        msg = f"group {g.name}: best objective {g.best_primal:.6g}"
        if g.dual is not None:
            msg += f", dual bound {g.dual.dual_bound:.6g}, gap {g.gap:.6g}"
        logging.getLogger("objdisc").info(msg)
    return EXIT_OK


def _load_solution(path: Path) -> dict:
    sol = load_json(path)
    if not isinstance(sol, dict) or sol.get("format") != SOLUTION_FORMAT:
        raise DataError(f"{path}: not a solution file")
    return sol


def _cmd_evaluate(args) -> int:
    dataset = read_dataset(args.dataset)
    sol = _load_solution(args.solution)
    preds = dict(zip(sol["images"], sol["final"]["boxes"]))
    report = corloc(preds, dataset, args.setting)
    sys.stdout.write(report.to_text())
    if args.csv is not None:
        Path(args.csv).write_text(report.to_csv())
    return EXIT_OK


def _cmd_export_graph(args) -> int:
    sol = _load_solution(args.solution)
    labels = None
    if args.dataset is not None:
        dataset = read_dataset(args.dataset)
        by_id = {im.id: im.class_label for im in dataset}
        missing = [i for i in sol["images"] if i not in by_id]
        if missing:
            raise DataError(f"image {missing[0]!r} of the solution is not in the dataset")
        labels = [by_id[i] for i in sol["images"]]
    n, edges, weights = solution_graph(sol)
    max_size = args.max_size if args.max_size is not None else max(n // 2, 1)
    if max_size < args.min_size:
        raise DataError(f"max size {max_size} is below min size {args.min_size}")
    comps = extract_components(n, edges, weights, args.min_size, max_size, args.target)
    listing = components_listing(sol, comps, labels)
    if args.dot is not None:
        Path(args.dot).write_text(components_to_dot(sol, comps, edges, weights, labels))
    if args.components is not None:
        dump_json(listing, args.components)
    else:
        sys.stdout.write(json.dumps(listing, indent=1) + "\n")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "discover": _cmd_discover,
    "evaluate": _cmd_evaluate,
    "export-graph": _cmd_export_graph,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"objdisc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"objdisc: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"objdisc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"objdisc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
