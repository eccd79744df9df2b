"""Command-line surface.

Subcommands: ``run`` (HTTP endpoints from a config file), ``simulate``
(same engine over a simulated agent pool), ``report`` (table emission from
a log), ``correlate`` (rank agreement with external benchmark CSVs).
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Optional, Sequence

from .analytics import build_leaderboards, correlate, load_external_csv
from .config import ConfigError, load_agents_file, load_run_config
from .consensus import ContractViolation
from .engine import ModelRegistry, resume_benchmark, run_benchmark
from .reports import (
    REPORT_FORMATS,
    build_report,
    render_correlations_csv,
    render_correlations_markdown,
    write_report_files,
)
from .runlog import RunLogError, read_log

DEFAULT_LOG = "peerbench-run.jsonl"

_RUNTIME_ERRORS = (
    ConfigError,
    ContractViolation,
    RunLogError,
    ValueError,
    OSError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peerbench",
        description="Self-sustaining peer evaluation of a model pool.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate live endpoints from a config file")
    run.add_argument("--config", required=True, help="TOML file with [run] and [[models]]")
    _add_run_flags(run)

    simulate = sub.add_parser("simulate", help="run the engine over simulated agents")
    simulate.add_argument("--agents", required=True, help="TOML file with [run] and [[agents]]")
    _add_run_flags(simulate)

    report = sub.add_parser("report", help="emit leaderboard/topic/convergence/heatmap tables")
    report.add_argument("--log", required=True)
    report.add_argument("--format", choices=REPORT_FORMATS, default="csv")
    report.add_argument("--out", required=True, help="output directory")

    corr = sub.add_parser("correlate", help="rank agreement with external benchmarks")
    corr.add_argument("--log", required=True)
    corr.add_argument("--external", required=True, help="CSV: model_id,<benchmark>[,...]")
    corr.add_argument("--format", choices=REPORT_FORMATS, default="csv")
    corr.add_argument("--out", help="output file (default: stdout)")

    return parser


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--resume", help="existing log to continue")
    sub.add_argument("--iterations", type=int, help="override iteration target")
    sub.add_argument("--seed", type=int, help="override master seed")
    sub.add_argument("--judge-mode", help="multi or single:<model_id>")
    sub.add_argument("--log", help=f"log path (default from config or {DEFAULT_LOG})")


def _execute_run(args: argparse.Namespace, from_agents: bool) -> int:
    loader = load_agents_file if from_agents else load_run_config
    source = args.agents if from_agents else args.config
    config, models, file_log = loader(source)
    overrides = {}
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.judge_mode is not None:
        overrides["judge_mode"] = args.judge_mode
    if overrides:
        config = dataclasses.replace(config, **overrides)
    registry = ModelRegistry(models)
    log_path = args.log or file_log or DEFAULT_LOG
    if args.resume:
        log = resume_benchmark(args.resume, registry, config)
    else:
        log = run_benchmark(registry, config, log_path=log_path)
    completed = log.iterations_completed()
    accepted = log.final_state()[1]
    print(
        f"run complete: {completed} iterations ({accepted} accepted), "
        f"log at {log.path}"
    )
    return 0


def _execute_report(args: argparse.Namespace) -> int:
    bundle = build_report(read_log(args.log))
    for path in write_report_files(bundle, args.out, args.format):
        print(path)
    return 0


def _execute_correlate(args: argparse.Namespace) -> int:
    board = build_leaderboards(read_log(args.log)).aggregate
    columns = load_external_csv(args.external)
    entries = [correlate(board, column) for column in columns]
    if args.format == "csv":
        text = render_correlations_csv(entries)
    else:
        text = render_correlations_markdown(entries)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        print(args.out)
    else:
        print(text, end="")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        if args.command == "run":
            return _execute_run(args, from_agents=False)
        if args.command == "simulate":
            return _execute_run(args, from_agents=True)
        if args.command == "report":
            return _execute_report(args)
        if args.command == "correlate":
            return _execute_correlate(args)
        raise AssertionError(f"unhandled command {args.command!r}")
    except _RUNTIME_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
