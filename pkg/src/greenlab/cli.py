"""Command-line front end.

Usage::

    greenlab degrees --map squaring.json --N 5
    greenlab green --map squaring.json --out results/
    greenlab experiment volume_contraction --map squaring.json --config cfg.json --seed 1

Exit codes: 0 success or consistent verdict, 2 bad input or failed hypothesis,
3 resource cap exceeded, 4 Green iteration did not converge, 5 inconsistent
verdict, 6 inconclusive verdict.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import parallel
from .cohomology import dtop, dynamical_degree_estimate, is_1_regular, pullback_matrix, write_degree_csv
from .errors import ConvergenceError, GreenlabError, ResourceError, UsageError
from .geometry import default_grid
from .maps import load_map

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RESOURCE = 3
EXIT_NOT_CONVERGED = 4
EXIT_CODES = {"consistent": 0, "inconsistent": 5, "inconclusive": 6}


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _load_map(path):
    if path is None:
        return None
    try:
        return load_map(path)
    except OSError as exc:
        raise UsageError(f"cannot read map file: {exc}") from exc


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


# ---------------------------------------------------------------------------
# Commands


def cmd_degrees(args) -> int:
    f = _load_map(args.map)
    if f is None:
        raise UsageError("degrees needs --map")
    cfg = _load_config(args.config)
    cap = cfg.get("monomial_cap")
    N = args.N
    est = dynamical_degree_estimate(f, N, cap)
    reg = is_1_regular(f, N, cap)
    lam_matrix = pullback_matrix(f).lambda1
    d = dtop(f)
    lam = lam_matrix if reg else est.value
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"degrees-{f.hash()}.csv"
    write_degree_csv(csv_path, f, N, cap)
    summary = {
        "map": f.hash(),
        "degrees": list(est.degrees),
        "lambda1": lam,
        "lambda1_tail_ratio": est.value,
        "one_regular": bool(reg),
        "first_failure": reg.first_failure,
        "d_top": d,
        "lambda1_vs_dtop": "greater" if lam > d + 1e-12 else ("equal" if abs(lam - d) <= 1e-12 else "less"),
    }
    (out / f"degrees-{f.hash()}.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    regular = "true" if reg else f"false(n={reg.first_failure})"
    print(f"degrees: {list(est.degrees)}")
    print(f"lambda1: {lam:.12g}")
    print(f"1-regular: {regular}")
    print(f"d_top: {d}")
    print(f"lambda1 vs d_top: {summary['lambda1_vs_dtop']}")
    print(f"csv: {csv_path}")
    return EXIT_OK


def cmd_green(args) -> int:
    from .green import green_potential, save_green

    f = _load_map(args.map)
    if f is None:
        raise UsageError("green needs --map")
    cfg = _load_config(args.config)
    allowed = {"n_max", "tol", "resolution", "method", "check_regularity"}
    extra = set(cfg) - allowed
    if extra:
        raise UsageError(f"unknown config parameters: {sorted(extra)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"green-{f.hash()}"
    grid = default_grid(f.space, cfg.get("resolution"))
    try:
        res = green_potential(f, int(cfg.get("n_max", 60)), float(cfg.get("tol", 1e-10)), grid,
                              cfg.get("method", "orbit"), bool(cfg.get("check_regularity", True)))
    except ConvergenceError as exc:
        trace = {"map": f.hash(), "converged": False, "error": str(exc),
                 "trace": [[int(n), float(v)] for n, v in exc.trace]}
        tp = stem.with_name(stem.name + ".trace.json")
        tp.write_text(json.dumps(trace, indent=1, sort_keys=True))
        print(f"not converged: {exc}; trace: {tp}")
        return EXIT_NOT_CONVERGED
    files = save_green(res, stem)
    print(f"converged: {res.converged} after {res.iterations} iterations")
    print(f"invariance residual: {res.invariance_residual:.3e}")
    for p in files:
        print(f"wrote {p}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_experiment(args) -> int:
    from .experiments.registry import REGISTRY, run_experiment

    if args.id not in REGISTRY:
        raise UsageError(f"unknown experiment {args.id!r}; known: {', '.join(sorted(REGISTRY))}")
    f = _load_map(args.map)
    cfg = _load_config(args.config)
    rep = run_experiment(args.id, f, cfg, args.seed)
    jp, cp = rep.write(args.out)
    print(f"verdict: {rep.verdict}")
    for note in rep.notes:
        print(f"note: {note}")
    print(f"wrote {jp}")
    print(f"wrote {cp}")
    return EXIT_CODES[rep.verdict]


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--map", help="map definition (JSON)")
    common.add_argument("--config", help="run configuration (JSON object)")
    common.add_argument("--seed", type=_seed, default=0, help="master seed (default 0)")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--threads", type=_positive, default=None,
                        help="worker threads (default: $GREENLAB_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="greenlab", description="Green currents of meromorphic maps")
    sub = p.add_subparsers(dest="command", required=True)
    d = sub.add_parser("degrees", parents=[common], help="degree sequence and dynamical degree")
    d.add_argument("--N", type=_positive, default=5, help="number of iterates (default 5)")
    d.set_defaults(func=cmd_degrees)
    g = sub.add_parser("green", parents=[common], help="compute the Green potential")
    g.set_defaults(func=cmd_green)
    e = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    e.add_argument("id", help="experiment id")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parallel.set_threads(args.threads)
    try:
        return args.func(args)
    except ResourceError as exc:
        print(f"error: resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except GreenlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        parallel.set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
