"""Command-line front end: ``finslercheck run`` and ``finslercheck selftest``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import FinslerCheckError
from .scenario import run_scenario
from .selftest import selftest


def _print_table(report: dict, stream) -> None:
    for t in report["tasks"]:
        res = t["result"]
        worst = _headline(res)
        print(f"{t['status']:<13} {t['name']:<28} {t['task']:<16} {worst}", file=stream)
    print(f"overall: {report['summary']['status']}", file=stream)


def _headline(res: dict) -> str:
    for key in ("max_residual", "invariant_drift_max", "energy_drift_max"):
        if key in res:
            return f"{key}={res[key]:.3e}"
    parts = [f"{k}.max_residual={v['max_residual']:.3e}" for k, v in res.items()
             if isinstance(v, dict) and "max_residual" in v]
    return " ".join(parts)


def cmd_run(args) -> int:
    try:
        report = run_scenario(args.scenario, out_dir=args.out, seed=args.seed, jobs=args.jobs)
    except (FinslerCheckError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out is None:
        _print_table(report.data, sys.stderr)
        print(report.dumps())
    else:
        _print_table(report.data, sys.stdout)
    return report.exit_code


def cmd_selftest(args) -> int:
    report = selftest(verbose=args.verbose, stream=sys.stdout)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if report["summary"]["passed"] else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finslercheck",
                                     description="Residual checks for metrizability of sprays.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a JSON scenario")
    run.add_argument("scenario", help="path to the scenario file")
    run.add_argument("--out", default=None, help="directory for report.json and trajectory CSVs")
    run.add_argument("--seed", type=int, default=None, help="override the sampling seed")
    run.add_argument("--jobs", type=int, default=1, help="worker threads for per-point work")
    run.set_defaults(func=cmd_run)

    st = sub.add_parser("selftest", help="run the built-in fixture matrix")
    st.add_argument("--verbose", action="store_true", help="print every row, not only failures")
    st.add_argument("--json", default=None, help="also write the report to this path")
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
