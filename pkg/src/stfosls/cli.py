"""Command line entry point: ``stfosls run ...`` and ``stfosls rates ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .adaptive import MODES, read_rows, run_loop, slopes, write_rows
from .experiments import NAMES, from_parameters, make_experiment
from .mesh import to_svg
from .solver import DEFAULT_TOL, SolverError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stfosls",
        description="Space-time least-squares optimal control of the heat equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write a convergence table")
    run.add_argument("experiment", choices=NAMES)
    run.add_argument("--mode", choices=MODES, default="uniform")
    run.add_argument("--theta", type=float, default=0.5)
    run.add_argument("--max-dof", type=int, default=200_000)
    run.add_argument("--nx", type=int, default=4)
    run.add_argument("--nt", type=int, default=4)
    run.add_argument("--out", type=str, default=None, help="CSV path (default: stdout)")
    run.add_argument("--svg-every", type=int, default=0, help="write the mesh every K levels")
    run.add_argument("--tol", type=float, default=DEFAULT_TOL)
    run.add_argument("--params", type=str, default=None,
                     help="JSON file with experiment parameters (overrides the name defaults)")
    run.add_argument("--save-params", type=str, default=None, help="write the experiment parameters as JSON")
    run.add_argument("--indicators", type=str, default=None,
                     help="write per-element indicators of the last level as CSV")
    run.add_argument("-v", "--verbose", action="store_true")

    rates = sub.add_parser("rates", help="fitted log-log slopes over the last rows of a table")
    rates.add_argument("csv")
    rates.add_argument("--last", type=int, default=3)
    return parser


def _run(args):
    if args.params:
        params = json.loads(Path(args.params).read_text(encoding="utf-8"))
        if params.get("name") != args.experiment:
            raise ValueError(f"parameter file describes {params.get('name')!r}, not {args.experiment!r}")
        ex = from_parameters(params)
    else:
        ex = make_experiment(args.experiment, nx=args.nx, nt=args.nt)
    if args.svg_every < 0:
        raise ValueError("--svg-every must be nonnegative")
    if args.save_params:
        Path(args.save_params).write_text(json.dumps(ex.parameters(), indent=2) + "\n", encoding="utf-8")

    stem = Path(args.out).with_suffix("") if args.out else Path(f"{ex.name}_{args.mode}")
    last = {}

    def callback(level, mesh, sol, rep):
        if args.svg_every and level % args.svg_every == 0:
            to_svg(mesh, f"{stem}_mesh_L{level:03d}.svg")
        last["report"] = rep

    rec = run_loop(ex.problem, args.mode, args.theta, args.max_dof, ex.nx, ex.nt, args.tol, callback=callback)
    if args.out:
        write_rows(args.out, rec.rows)
    else:
        write_rows(sys.stdout, rec.rows)
    if args.indicators and "report" in last:
        last["report"].write_csv(args.indicators)
    print(f"{ex.name} {args.mode}: {len(rec.rows)} levels, status {rec.status}", file=sys.stderr)
    return 0


def _rates(args):
    rows = read_rows(args.csv)
    if len(rows) < 2:
        raise ValueError(f"{args.csv}: need at least two rows to fit a slope")
    for col, s in slopes(rows, args.last).items():
        print(f"{col:10s} {s: .4f}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args) if args.command == "run" else _rates(args)
    except SolverError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
