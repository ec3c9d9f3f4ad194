"""Command line entry point: ``sim run`` and ``sim validate``."""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .scenario import ScenarioError, load_scenario
from .sim import SimulationError, run

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _run_one(path: str, seed: Optional[int], out: str, explain: bool, multi: bool) -> str:
    sc = load_scenario(path)
    if seed is not None:
        sc = sc.with_seed(seed)
    report = run(sc, explain=explain or None)
    out_dir = Path(out) / Path(path).stem if multi else Path(out)
    report.write(out_dir)
    s = report.summary
    return (f"{path}: {s['sla_count']} SLAs, {len(s['violated_slas'])} violated, "
            f"{s['energy']['total_j']:.6g} J, trace {s['trace_digest'][:16]} -> {out_dir}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="sim", description="Multi-domain 6G orchestration simulator")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run one or more scenarios")
    p_run.add_argument("scenarios", nargs="+", metavar="scenario.json")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--explain", action="store_true")
    p_run.add_argument("--jobs", type=int, default=1)

    p_val = sub.add_parser("validate", help="check a scenario document")
    p_val.add_argument("scenario", metavar="scenario.json")

    args = parser.parse_args(argv)

    if args.cmd == "validate":
        try:
            load_scenario(args.scenario)
        except (ScenarioError, OSError) as e:
            print(f"invalid: {e}", file=sys.stderr)
            return EXIT_VALIDATION
        print("ok")
        return EXIT_OK

    try:
        for path in args.scenarios:
            load_scenario(path)
    except (ScenarioError, OSError) as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    multi = len(args.scenarios) > 1
    jobs = [(p, args.seed, args.out, args.explain, multi) for p in args.scenarios]
    try:
        if args.jobs > 1 and multi:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                lines = list(pool.map(_run_one, *zip(*jobs)))
        else:
            lines = [_run_one(*j) for j in jobs]
    except (SimulationError, AssertionError, RuntimeError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for line in lines:
        print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
