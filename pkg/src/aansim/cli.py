"""Command-line front end: run one episode, run paired batches, or report.

Exit codes: 0 when the session completed (Done), 2 when it ended without
completion (Aborted or time cap), 1 for usage, scenario, or log errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import metrics as metrics_mod
from .episode import run_episode
from .scenario import ScenarioInvalid, load_scenario
from .session import LogInvalid, read_log, validate_log, write_log

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCOMPLETE = 2


def _log_name(scenario_name: str, condition: str, seed: int) -> str:
    return f"{scenario_name}_{condition}_seed{seed:04d}.jsonl"


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioInvalid as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    result = run_episode(scenario, args.condition, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / _log_name(scenario.name, args.condition, args.seed)
    write_log(result.log, log_path)
    m = metrics_mod.session_metrics(result.log)
    status = "completed" if m.completed else "not completed"
    locate = "censored" if m.censored else f"{m.time_to_locate_s:.1f}s"
    print(
        f"{scenario.name} condition {args.condition} seed {args.seed}: {status}; "
        f"time to locate {locate}; {m.interaction_rounds} interaction rounds; "
        f"{len(result.confusion_events)} confusion events; log {log_path}"
    )
    return EXIT_OK if m.completed else EXIT_INCOMPLETE


def _cmd_batch(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioInvalid as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sessions = []
    for seed in range(args.seed_start, args.seed_start + args.seeds):
        for condition in ("A", "B"):
            result = run_episode(scenario, condition, seed)
            write_log(result.log, out_dir / _log_name(scenario.name, condition, seed))
            sessions.append(metrics_mod.session_metrics(result.log))
    metrics_mod.write_summary_csv(sessions, out_dir / "summary.csv")
    report = metrics_mod.render_report(sessions)
    (out_dir / "report.txt").write_text(report, encoding="utf-8")
    print(report, end="")
    print(f"\n{len(sessions)} sessions -> {out_dir}/summary.csv, {out_dir}/report.txt")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    log_paths = sorted(Path(args.logs).glob("*.jsonl"))
    if not log_paths:
        print(f"no .jsonl logs under {args.logs}", file=sys.stderr)
        return EXIT_ERROR
    sessions = []
    for path in log_paths:
        try:
            log = read_log(path)
            validate_log(log)
        except LogInvalid as exc:
            print(f"invalid log {path}: {exc}", file=sys.stderr)
            return EXIT_ERROR
        sessions.append(metrics_mod.session_metrics(log))

    tlx_scores: dict[str, list[float]] | None = None
    if args.tlx:
        tlx_scores = {}
        for _participant, condition, resp in metrics_mod.load_tlx_csv(args.tlx):
            tlx_scores.setdefault(condition, []).append(metrics_mod.raw_tlx(resp))
    usability_scores: dict[str, list[float]] | None = None
    if args.usability:
        usability_scores = {}
        for _participant, condition, resp in metrics_mod.load_usability_csv(args.usability):
            usability_scores.setdefault(condition, []).append(
                metrics_mod.usability_composite(resp)
            )

    report = metrics_mod.render_report(sessions, tlx_scores, usability_scores)
    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")
        print(f"report -> {args.out}")
    else:
        print(report, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aansim",
        description="Deterministic desk-scale simulator for assist-as-needed "
        "medication guidance studies.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single episode and write its log")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    p_run.add_argument("--condition", required=True, choices=("A", "B"))
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default="runs", help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser(
        "batch", help="run paired A/B episodes over a seed range and summarize"
    )
    p_batch.add_argument("--scenario", required=True)
    p_batch.add_argument("--seeds", type=int, default=30, help="number of paired seeds")
    p_batch.add_argument("--seed-start", type=int, default=0)
    p_batch.add_argument("--out", default="runs")
    p_batch.set_defaults(func=_cmd_batch)

    p_report = sub.add_parser(
        "report", help="validate saved logs and render the condition comparison"
    )
    p_report.add_argument("--logs", required=True, help="directory of .jsonl logs")
    p_report.add_argument("--tlx", help="workload questionnaire CSV")
    p_report.add_argument("--usability", help="usability questionnaire CSV")
    p_report.add_argument("--out", help="write the report here instead of stdout")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
