"""Command-line entry points: run, sweep, validate."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (
    SWEEP_AXES,
    ConfigError,
    load_config,
    run_experiment,
    run_sweep,
    validate_suite,
    write_experiment_outputs,
)

FAILURE_BUDGET = 0.10   # more than this fraction of failed drops exits nonzero


def _add_common(sub):
    sub.add_argument("--config", required=True, help="experiment config file")
    sub.add_argument("--out", default="out", help="output directory")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config's master seed")
    sub.add_argument("--parallel", type=int, default=1,
                     help="worker processes for drops")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rscran",
        description="rate-splitting downlink simulator and optimizer",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    run_p = subs.add_parser("run", help="solve every drop of one config")
    _add_common(run_p)

    sweep_p = subs.add_parser("sweep", help="repeat a run along one axis")
    _add_common(sweep_p)
    sweep_p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated axis values")

    val_p = subs.add_parser("validate", help="built-in self checks")
    val_p.add_argument("--suite", required=True,
                       choices=("oracle", "invariants"))
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    return cfg


def _report_failures(results) -> int:
    worst = 0.0
    for result in results:
        for failure in result.failures:
            print(f"drop {failure['drop']} failed: {failure['error']}",
                  file=sys.stderr)
        worst = max(worst, result.failure_fraction)
    if worst > FAILURE_BUDGET:
        print(f"error: {worst:.0%} of drops failed "
              f"(budget {FAILURE_BUDGET:.0%})", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    result = run_experiment(cfg, parallel=args.parallel)
    write_experiment_outputs(cfg, [result], args.out)
    print(f"wrote {len(result.rows)} rows to {Path(args.out) / 'results.csv'}")
    return _report_failures([result])


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = []
    for tok in args.values.split(","):
        tok = tok.strip()
        if not tok:
            continue
        values.append(float(tok) if "." in tok or "e" in tok.lower()
                      else int(tok))
    if not values:
        print("error: --values is empty", file=sys.stderr)
        return 2
    results, stream_rows = run_sweep(cfg, args.axis, values,
                                     parallel=args.parallel)
    write_experiment_outputs(cfg, results, args.out, stream_rows=stream_rows,
                             extra={"sweep_axis": args.axis,
                                    "sweep_values": values})
    n = sum(len(r.rows) for r in results)
    print(f"wrote {n} rows to {Path(args.out) / 'results.csv'}")
    return _report_failures(results)


def cmd_validate(args) -> int:
    checks = validate_suite(args.suite)
    failed = 0
    for name, ok, detail in checks:
        mark = "PASS" if ok else "FAIL"
        print(f"[{mark}] {name}: {detail}")
        failed += 0 if ok else 1
    return 1 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
