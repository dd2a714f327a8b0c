"""Command-line entry point: ``mqeuler <subcommand> [scenario] [options]``.

Exit status is 1 when any comparison in the report fails, 2 on usage or
scenario errors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .harness import (
    BUILTIN_SCENARIOS,
    ScenarioError,
    WORKERS_ENV,
    emit_report,
    load_scenario,
    run_diagnostics,
    run_ordering_study,
    run_verify,
)


def _scenario(args):
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
    if args.abs_tol is not None:
        sc.abs_tol = args.abs_tol
    if args.rel_tol is not None:
        sc.rel_tol = args.rel_tol
    np.random.seed(sc.seed)
    return sc


def _write(args, payload: bytes):
    if args.output in (None, "-"):
        sys.stdout.buffer.write(payload)
    else:
        with open(args.output, "wb") as fh:
            fh.write(payload)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mqeuler", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=None, help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--abs-tol", type=float, default=None)
    common.add_argument("--rel-tol", type=float, default=None)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--table", default=None, help="CSV table to emit")
    common.add_argument("-o", "--output", default=None, help="write the report here instead of stdout")
    names = ", ".join(sorted(BUILTIN_SCENARIOS))
    for name, hlp in [
        ("verify", "Euler integral versus the sum of local indices"),
        ("indices", "local indices of the B_+ vertices only"),
        ("ordering-study", "sum of local indices under chart re-orderings"),
        ("diagnostics", "gamma_T rates and windowed decay away from B_+"),
    ]:
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("scenario", help=f"YAML file or built-in ({names})")
        if name == "ordering-study":
            p.add_argument("--method", choices=("extrapolated", "scale_free"), default="extrapolated")
            p.add_argument("--perm", action="append", default=None,
                           help="comma-separated permutation; repeatable (default: all)")
    p = sub.add_parser("line-bundle", parents=[common], help="Euler number of a degree-k line bundle")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "line-bundle":
            spec = {"name": f"line-{args.k}", "bundle": {"kind": "line", "k": args.k}}
            if args.eps is not None:
                spec["bundle"]["eps"] = args.eps
            args.scenario = None
            report = run_verify(spec)
            table = args.table or "vertices"
        else:
            sc = _scenario(args)
            if args.command == "verify":
                report = run_verify(sc, args.workers)
                table = args.table or "vertices"
            elif args.command == "indices":
                report = run_verify(sc, args.workers, assembly=False)
                table = args.table or "vertices"
            elif args.command == "ordering-study":
                perms = None if args.perm is None else [[int(v) for v in p.split(",")] for p in args.perm]
                report = run_ordering_study(sc, perms, args.method, args.workers)
                table = args.table or "permutations"
            else:
                report = run_diagnostics(sc, args.workers)
                table = args.table or "gamma"
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write(args, emit_report(report, args.format, table))
    ok = report.get("match", True) and report.get("assembly", {}).get("consistent", True)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
