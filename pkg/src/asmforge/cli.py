"""``asmforge`` command line: plan, run and report."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .contingency import LogFormatError, format_report, parse_contingency_log
from .executor import DEFAULT_MAX_TICKS, EXIT_CYCLE, EXIT_INVALID, EXIT_SUCCESS, run_mission
from .htn_domain import PlanningError, plan_tasks
from .mission_planner import CycleDetected, InvalidMission, plan_mission
from .mission_spec import MissionParseError, MissionSpec, parse_mission
from .sim_world import FaultScheduleError, initial_state, parse_fault_schedule

log = logging.getLogger("asmforge")


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise _Exit(EXIT_INVALID, f"cannot read {what} {path}: {exc}") from None


def _load_spec(path: str) -> MissionSpec:
    try:
        return parse_mission(_read(path, "mission"))
    except MissionParseError as exc:
        raise _Exit(EXIT_INVALID, f"{path}: {exc}") from None


def _plan(spec: MissionSpec):
    try:
        mission_plan = plan_mission(spec)
        return mission_plan, plan_tasks(spec, mission_plan)
    except CycleDetected as exc:
        raise _Exit(EXIT_CYCLE, str(exc)) from None
    except (InvalidMission, PlanningError) as exc:
        raise _Exit(EXIT_INVALID, str(exc)) from None


def _pairs(items: list[str], flag: str) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key or not value:
            raise _Exit(EXIT_INVALID, f"{flag} expects PART=VALUE, got {item!r}")
        out[key] = value
    return out


def cmd_plan(args) -> int:
    spec = _load_spec(args.mission)
    mission_plan, task_plan = _plan(spec)
    sys.stdout.write(mission_plan.to_text())
    sys.stdout.write("\n")
    sys.stdout.write(task_plan.to_text())
    return EXIT_SUCCESS


def cmd_run(args) -> int:
    spec = _load_spec(args.mission)
    _plan(spec)
    schedule = None
    if args.faults:
        try:
            schedule = parse_fault_schedule(_read(args.faults, "fault schedule"))
        except FaultScheduleError as exc:
            raise _Exit(EXIT_INVALID, f"{args.faults}: {exc}") from None
    unknown = [a for a in args.world_done if a not in spec.attachments]
    if unknown:
        raise _Exit(EXIT_INVALID, f"unknown attachments: {', '.join(unknown)}")
    classes = _pairs(args.world_class, "--world-class")
    configs = _pairs(args.world_config, "--world-config")
    missing = sorted((set(classes) | set(configs)) - set(spec.parts))
    if missing:
        raise _Exit(EXIT_INVALID, f"unknown parts: {', '.join(missing)}")
    world = initial_state(spec, part_classes=classes, configurations=configs, done=args.world_done)
    report = run_mission(spec, schedule, args.mode, args.max_ticks, world, mission_name=args.mission)
    if args.trace:
        Path(args.trace).write_text(report.trace_text(), encoding="utf-8")
    if args.log:
        Path(args.log).write_text(report.log_text(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return report.exit_code


def cmd_report(args) -> int:
    try:
        rows = parse_contingency_log(_read(args.log, "contingency log"))
    except LogFormatError as exc:
        raise _Exit(EXIT_INVALID, f"{args.log}: {exc}") from None
    sys.stdout.write(format_report(rows))
    return EXIT_SUCCESS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asmforge", description="Plan and execute assembly missions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="print the mission plan and task plan")
    p.add_argument("mission")
    p.set_defaults(func=cmd_plan)

    r = sub.add_parser("run", help="execute a mission in the simulator")
    r.add_argument("mission")
    r.add_argument("--faults", help="fault schedule file")
    r.add_argument("--mode", choices=("lazy", "preenum"), default="lazy")
    r.add_argument("--max-ticks", type=int, default=DEFAULT_MAX_TICKS)
    r.add_argument("--trace", help="write the per-tick world trace here")
    r.add_argument("--log", help="write the contingency log here")
    r.add_argument("--world-done", action="append", default=[], metavar="ATT",
                   help="attachment already present in the world (repeatable)")
    r.add_argument("--world-class", action="append", default=[], metavar="PART=CLASS",
                   help="actual class of a part in the world (repeatable)")
    r.add_argument("--world-config", action="append", default=[], metavar="PART=CONFIG",
                   help="actual configuration of a part in the world (repeatable)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("report", help="count contingencies per category")
    c.add_argument("log")
    c.set_defaults(func=cmd_report)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("ASMFORGE_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "max_ticks", 1) < 1:
        print("asmforge: --max-ticks must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except _Exit as exc:
        print(f"asmforge: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
