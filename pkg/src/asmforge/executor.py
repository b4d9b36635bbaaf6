"""The control loop: plan, compile, tick, classify and recover."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from .bt_core import Status, tick
from .contingency import (
    ContingencyRecord, ExecutionContext, PlannerHandles, RecoveryResult, apply_recovery, budget_key,
    classify, format_report, log_line, parse_contingency_log, select_recovery,
)
from .htn_domain import TaskPlan, plan_tasks
from .mission_planner import MissionPlan, plan_mission
from .mission_spec import MissionSpec
from .sim_world import FaultSchedule, SimWorld, WorldState, initial_state

log = logging.getLogger(__name__)

DEFAULT_MAX_TICKS = 10_000

EXIT_SUCCESS = 0
EXIT_INVALID = 2
EXIT_CYCLE = 3
EXIT_FAILED = 4
EXIT_BUDGET = 5


@dataclass
class RunReport:
    mission: str
    mission_plan: MissionPlan
    task_plan: TaskPlan
    status: str = "Running"
    ticks: int = 0
    clock: int = 0
    records: list[ContingencyRecord] = field(default_factory=list)
    outcomes: Counter = field(default_factory=Counter)
    trace: list[str] = field(default_factory=list)
    log: list[str] = field(default_factory=list)
    replans: list[str] = field(default_factory=list)
    final_state: WorldState | None = None

    @property
    def exit_code(self) -> int:
        return {"Success": EXIT_SUCCESS, "Failed": EXIT_FAILED}.get(self.status, EXIT_BUDGET)

    @property
    def counts(self) -> list[str]:
        return format_report(parse_contingency_log("\n".join(self.log))).splitlines()

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in self.trace)

    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log)

    def to_text(self) -> str:
        lines = [f"mission: {self.mission}",
                 "plan: " + " ".join(str(s) for s in self.mission_plan.steps),
                 f"primitives: {len(self.task_plan)}",
                 f"ticks: {self.ticks}",
                 f"clock: {self.clock}",
                 f"contingencies: {len(self.records)}"]
        lines += [f"  {row}" for row in self.counts]
        lines.append("recoveries: " + " ".join(f"{r.value}={self.outcomes[r.value]}" for r in RecoveryResult))
        lines += [f"replan: {p}" for p in self.replans]
        lines.append(f"status: {self.status}")
        return "\n".join(lines) + "\n"


def run_mission(spec: MissionSpec, schedule: FaultSchedule | None = None, mode: str = "lazy",
                max_ticks: int = DEFAULT_MAX_TICKS, world_state: WorldState | None = None,
                mission_name: str = "") -> RunReport:
    """Plan against the nominal world, then execute in ``world_state`` under ``schedule``."""
    if mode not in ("lazy", "preenum"):
        raise ValueError(f"unknown mode {mode!r}")
    nominal = initial_state(spec)
    mission_plan = plan_mission(spec)
    task_plan = plan_tasks(spec, mission_plan, nominal)
    handles = PlannerHandles(spec, preenum=mode == "preenum")
    tree = handles.compile(task_plan)
    world = SimWorld(world_state if world_state is not None else nominal, schedule or FaultSchedule())
    report = RunReport(mission_name, mission_plan, task_plan)
    used: Counter = Counter()
    for n in range(1, max_ticks + 1):
        result = tick(tree, world)
        report.ticks = n
        events = world.take_events()
        report.trace.append(f"tick={n} clock={world.state.clock} status={result.status.value} "
                            f"events={';'.join(events) or '-'}")
        if result.status is Status.SUCCESS:
            report.status = "Success"
            break
        if result.status is Status.RUNNING:
            continue
        ctx = ExecutionContext(spec, tree, world.state, n, used)
        record = classify(result, ctx)
        action = select_recovery(record, ctx)
        key = budget_key(record)
        if key is not None:
            used[key] += 1
        outcome = apply_recovery(action, tree, handles, world, record)
        report.records.append(record)
        report.outcomes[outcome.result.value] += 1
        report.log.append(log_line(record, action, outcome))
        log.info("contingency %s", report.log[-1])
        if outcome.detail:
            log.debug("recovery detail: %s", outcome.detail)
        tail = world.take_events()
        if tail:
            report.trace.append(f"tick={n} clock={world.state.clock} status=Recovery events={';'.join(tail)}")
        if outcome.result is RecoveryResult.FAILED:
            report.status = "Failed"
            break
        tree = outcome.tree
    else:
        report.status = "TickBudgetExhausted"
    report.replans = list(handles.plans)
    report.clock = world.state.clock
    report.final_state = world.state
    return report


