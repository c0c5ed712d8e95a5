"""Command-line entry point: ``niconsensus {run,preset,sweep,validate}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .runner import run, sweep
from .scenario import PRESETS, ScenarioError, dump_scenario, load_scenario
from .network import ConnectivityError

OUT_ENV = "NICONSENSUS_OUT"


def _default_out():
    return os.environ.get(OUT_ENV, "niconsensus-out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="niconsensus", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario file and write artifacts")
    p.add_argument("scenario")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./niconsensus-out)")

    p = sub.add_parser("preset", help="run a built-in scenario")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--out", default=None)
    p.add_argument("--print", dest="print_only", action="store_true",
                   help="print the preset as a scenario document instead of running it")

    p = sub.add_parser("sweep", help="plant-parameter perturbation sweep")
    p.add_argument("scenario")
    p.add_argument("--perturb", type=float, required=True,
                   help="relative half-width p; factors are drawn from [1-p, 1+p]")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--out", default=None)

    p = sub.add_parser("validate", help="parse and check a scenario file")
    p.add_argument("scenario")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = getattr(args, "out", None) or _default_out()
    try:
        if args.command == "preset":
            scenario = PRESETS[args.name]()
            if args.print_only:
                sys.stdout.write(dump_scenario(scenario))
                return 0
            status = run(scenario, out)
        elif args.command == "validate":
            load_scenario(args.scenario)
            print(f"{args.scenario}: ok")
            return 0
        elif args.command == "run":
            status = run(load_scenario(args.scenario), out)
        else:
            summary = sweep(load_scenario(args.scenario), args.perturb, args.runs, args.seed,
                            out, args.workers)
            print(f"settled {summary['n_settled']}/{summary['n_runs']}")
            return summary["status"]
    except (ScenarioError, ConnectivityError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"status {status}; artifacts in {out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
