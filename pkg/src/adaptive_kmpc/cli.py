"""Command-line interface for adaptive Koopman MPC experiments."""

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .errors import ConfigurationError, InputError
from .export import ResultsExporter
from .harness import (
    ExitCode,
    compare,
    default_output_dir,
    run_scenarios,
    validate,
)
from .scenario import bundled_scenarios


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kmpc", description="Adaptive Koopman MPC experiment harness"
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity (default: WARNING)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run one or more scenarios")
    run.add_argument(
        "scenarios",
        nargs="+",
        help="Scenario JSON file(s) or bundled scenario name(s)",
    )
    run.add_argument(
        "--out",
        type=Path,
        default=None,
        help=(
            "Output directory; each scenario writes into <out>/<name>/ "
            "(default: $KMPC_OUTPUT_DIR or data/output)"
        ),
    )
    run.add_argument("--seed", type=int, default=None, help="Override the clock seed")
    run.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="Number of scenarios run in parallel worker processes (default: 1)",
    )

    cmp = subparsers.add_parser("compare", help="Compare metrics JSON files")
    cmp.add_argument("metrics", type=Path, nargs="+", help="Metrics JSON files")
    cmp.add_argument(
        "--csv",
        type=Path,
        default=None,
        help="Where to write the comparison CSV (default: <output>/comparison.csv)",
    )

    check = subparsers.add_parser("validate", help="Validate a scenario file")
    check.add_argument("scenario", help="Scenario JSON file or bundled name")

    subparsers.add_parser("list", help="List bundled scenarios")
    return parser


def _run(args: argparse.Namespace) -> int:
    if args.jobs < 1:
        print("Error: --jobs must be at least 1", file=sys.stderr)
        return int(ExitCode.CONFIG)
    output_root = args.out or default_output_dir()
    print(f"Running {len(args.scenarios)} scenario(s), output in {output_root}/")
    results = run_scenarios(args.scenarios, output_root, args.seed, args.jobs)

    for result in results:
        print(f"  {result.summary_line()}")
    worst = max(int(r.exit_code) for r in results)
    if worst == ExitCode.OK:
        print(f"\n✓ Complete! Results exported to {output_root}/")
    return worst


def _compare(args: argparse.Namespace) -> int:
    try:
        comparison = compare(args.metrics)
    except InputError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return int(ExitCode.CONFIG)
    print(comparison.table)
    csv_path = args.csv or default_output_dir() / "comparison.csv"
    ResultsExporter().export_comparison(comparison.rows, csv_path)
    print(f"\n✓ Comparison exported to {csv_path}")
    return int(ExitCode.OK)


def _validate(args: argparse.Namespace) -> int:
    try:
        scenario = validate(args.scenario)
    except ConfigurationError as exc:
        print(f"Invalid: {exc}", file=sys.stderr)
        return int(ExitCode.CONFIG)
    print(
        f"✓ {scenario.name}: {scenario.dof}R plant, {scenario.mode.value} "
        f"controller, {scenario.reference.kind.value} reference"
    )
    return int(ExitCode.OK)


def _list() -> int:
    for name in bundled_scenarios():
        print(name)
    return int(ExitCode.OK)


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point for the CLI."""
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command == "run":
        return _run(args)
    if args.command == "compare":
        return _compare(args)
    if args.command == "validate":
        return _validate(args)
    return _list()


if __name__ == "__main__":
    sys.exit(main())
