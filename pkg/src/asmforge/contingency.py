"""Failure classification, recovery selection and recovery application."""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable

from .bt_compiler import (
    Before, compile_plan, compile_primitive, forced_plan_tree, prepend_subtree, repair_subtree, stitch_repair,
)
from .bt_core import FailureKind, FailureSource, Node, Sequence, Status, TickResult, walk
from .htn_domain import (
    PlanningError, configuration_decisions, make_primitive, plan_tasks, repair_precondition, repairable, reverse_plan,
)
from .mission_planner import MissionPlanningError, replan_mission
from .mission_spec import CLASS_PREDICATES, MissionSpec
from .sim_world import (
    DETECTION_TOLERANCE, DRIVER_DOWN, GRASP_SLIP, JAMMED, NO_DETECTION, SENSOR_NOISE,
    DetectionError, SimWorld, WorldState, commit_detection, detect_with_error,
)
from .symbols import Literal, cnf, lit, neg


class Level(enum.Enum):
    MISSION = "Mission"
    TASK = "Task"
    SKILL = "Skill"
    UNCLASSIFIED = "Unclassified"


class Order(enum.Enum):
    FIRST = "First"
    HIGHER = "Higher"


class Axis(enum.Enum):
    PROCEDURAL = "Procedural"
    ELEMENTAL = "Elemental"
    GROUNDING = "Grounding"


class NotAFailure(ValueError):
    pass


# cause -> catalogue label, in report order
CAUSE_LABELS = {
    "wrong_configuration": "Parts not placed in right configuration",
    "station_location": "Part-stations not at expected location",
    "not_in_hand": "Part not in hand after grasping for next task",
    "alignment_failure": "Alignment action resulted in failure",
    "object_not_detected": "Object not detected due to lighting",
    "failed_grasp": "Failed grasp actuation",
    "driver_dropout": "Hardware-drivers dropping out",
    "sensor_noise": "Sensor noise due to environmental frequencies",
    "failed_actuation": "Failed actuation",
    "jammed_fastener": "Jammed fastener",
    "out_of_order_attachment": "Attachment done out of order",
    "irreversible_attachment": "Irreversible attachment already done",
    "part_class_mismatch": "Part class does not afford the attachment",
    "verification_failed": "Attachment not verified",
    "hand_occupied": "Hand occupied before grasping",
    "unexpected_state": "Unexpected world state",
}

BUDGETS = {
    "PerturbAndRetry": 3,
    "RunNPickBest": 2,
    "ResetDriver": 3,
    "StitchPreconditionRepair": 3,
    "ReverseAttachment": 1,
    "MissionReplan": 1,
}

CAMERA_DELTA = (0.0, 0.01)
GRASP_DELTA = (0.002, 0.0)


@dataclass(frozen=True)
class ContingencyRecord:
    level: Level
    order: Order
    axis: Axis
    source: FailureSource
    attachment: str
    tick_index: int
    cause: str
    literal: Literal | None = None
    target: str | None = None  # attachment to reverse or agent to reset
    escalated_from: Level | None = None

    @property
    def label(self) -> str:
        return category_label(self.level.value, self.order.value, self.cause)


def category_label(level: str, order: str, cause: str) -> str:
    text = CAUSE_LABELS.get(cause, cause)
    if level == Level.UNCLASSIFIED.value:
        return f"Unclassified / {text}"
    return f"{order}-order {level} / {text}"


@dataclass
class ExecutionContext:
    """What the classifier may look at: the live tree, a world snapshot, budgets."""

    spec: MissionSpec
    tree: Node
    state: WorldState
    tick_index: int = 0
    used: Counter = field(default_factory=Counter)


# -- recovery actions -------------------------------------------------------


@dataclass(frozen=True)
class PerturbAndRetry:
    target: str
    delta: tuple[float, float]
    budget: int = BUDGETS["PerturbAndRetry"]

    def __str__(self):
        return f"PerturbAndRetry({self.target},{self.budget})"


@dataclass(frozen=True)
class RunNPickBest:
    n: int = 3

    def __str__(self):
        return f"RunNPickBest({self.n})"


@dataclass(frozen=True)
class ResetDriver:
    agent: str

    def __str__(self):
        return f"ResetDriver({self.agent})"


@dataclass(frozen=True)
class StitchPreconditionRepair:
    literal: Literal

    def __str__(self):
        return f"StitchPreconditionRepair({self.literal})"


@dataclass(frozen=True)
class ReverseAttachment:
    attachment: str

    def __str__(self):
        return f"ReverseAttachment({self.attachment})"


@dataclass(frozen=True)
class MissionReplan:
    irreversible_done: tuple[str, ...] = ()

    def __str__(self):
        return f"MissionReplan({','.join(self.irreversible_done)})"


@dataclass(frozen=True)
class Escalate:
    reason: str

    def __str__(self):
        return f"Escalate({self.reason})"


RecoveryAction = PerturbAndRetry | RunNPickBest | ResetDriver | StitchPreconditionRepair | \
    ReverseAttachment | MissionReplan | Escalate


# -- classification ---------------------------------------------------------

# action error -> (level, order, axis, cause)
_ACTION_TABLE = {
    DRIVER_DOWN: (Level.UNCLASSIFIED, Order.FIRST, Axis.GROUNDING, "driver_dropout"),
    SENSOR_NOISE: (Level.UNCLASSIFIED, Order.FIRST, Axis.GROUNDING, "sensor_noise"),
    NO_DETECTION: (Level.SKILL, Order.FIRST, Axis.GROUNDING, "object_not_detected"),
    GRASP_SLIP: (Level.SKILL, Order.FIRST, Axis.GROUNDING, "failed_grasp"),
    JAMMED: (Level.SKILL, Order.HIGHER, Axis.PROCEDURAL, "jammed_fastener"),
}
_ACTUATION = (Level.SKILL, Order.FIRST, Axis.GROUNDING, "failed_actuation")

# failed precondition predicate -> (axis, cause); all first-order task
_CONDITION_TABLE = {
    "pose_ok": (Axis.GROUNDING, "wrong_configuration"),
    "at_station": (Axis.GROUNDING, "station_location"),
    "in_hand": (Axis.GROUNDING, "not_in_hand"),
    "is_aligned": (Axis.GROUNDING, "alignment_failure"),
}


def _node_meta(tree: Node, node_id: str) -> dict[str, str]:
    for node in walk(tree):
        if node.node_id == node_id:
            return node.meta
    return {}


def _done_attachments_on(state: WorldState, part: str) -> list[str]:
    ps = state.parts.get(part)
    if ps is None or ps.location.kind != "attached":
        return []
    return sorted(ps.location.attachments)


def _procedural(spec: MissionSpec, blocker: str) -> tuple:
    if spec.attachments[blocker].reversible:
        return Level.TASK, Order.FIRST, Axis.PROCEDURAL, "out_of_order_attachment"
    return Level.MISSION, Order.HIGHER, Axis.GROUNDING, "irreversible_attachment"


def _base(result: TickResult, ctx: ExecutionContext):
    src = result.failure_source
    meta = _node_meta(ctx.tree, src.node_id)
    if src.kind is FailureKind.ACTION:
        level, order, axis, cause = _ACTION_TABLE.get(src.error, _ACTUATION)
        target = src.primitive.agent if cause == "driver_dropout" else None
        return level, order, axis, cause, None, target
    literal = src.literal
    if meta.get("role") in ("verify", "done"):
        return Level.MISSION, Order.HIGHER, Axis.PROCEDURAL, "verification_failed", literal, None
    name = literal.predicate
    if literal.negated and name == "is_done":
        return (*_procedural(ctx.spec, literal.args[0]), literal, literal.args[0])
    if not literal.negated and name == "at_station":
        blockers = _done_attachments_on(ctx.state, literal.args[0])
        if blockers:
            irreversible = [b for b in blockers if not ctx.spec.attachments[b].reversible]
            blocker = irreversible[0] if irreversible else blockers[0]
            return (*_procedural(ctx.spec, blocker), literal, blocker)
    if name in CLASS_PREDICATES:
        return Level.TASK, Order.HIGHER, Axis.ELEMENTAL, "part_class_mismatch", literal, None
    if not literal.negated and name == "agent_state" and literal.args[1] == "free":
        return Level.TASK, Order.FIRST, Axis.GROUNDING, "hand_occupied", literal, None
    if not literal.negated and name in _CONDITION_TABLE:
        axis, cause = _CONDITION_TABLE[name]
        return Level.TASK, Order.FIRST, axis, cause, literal, None
    return Level.TASK, Order.HIGHER, Axis.GROUNDING, "unexpected_state", literal, None


def budget_key(record: ContingencyRecord) -> tuple | None:
    """Which budget the record's recovery draws on (None: no budget)."""
    if record.level in (Level.SKILL, Level.UNCLASSIFIED) and record.order is Order.FIRST:
        head = record.source.primitive.head if record.source.primitive is not None else record.source.node_id
        return ("skill", record.attachment, head, record.cause)
    if record.level is Level.TASK and record.order is Order.FIRST:
        if record.cause == "out_of_order_attachment":
            return ("reverse", record.target)
        return ("task", record.attachment, str(record.literal))
    if record.level is Level.MISSION:
        return ("mission", record.attachment, record.cause)
    return None


def _recovery_name(record: ContingencyRecord) -> str:
    return type(_recovery_for(record)).__name__


def _exhausted(record: ContingencyRecord, ctx: ExecutionContext) -> bool:
    key = budget_key(record)
    name = _recovery_name(record)
    return key is not None and name in BUDGETS and ctx.used[key] >= BUDGETS[name]


def classify(result: TickResult, ctx: ExecutionContext) -> ContingencyRecord:
    """Level, order and axis of a failed tick; applies the escalation ladder."""
    if result.status is not Status.FAILURE or result.failure_source is None:
        raise NotAFailure(f"cannot classify a {result.status.value} result")
    src = result.failure_source
    level, order, axis, cause, literal, target = _base(result, ctx)
    meta = _node_meta(ctx.tree, src.node_id)
    att = meta.get("att", "")
    record = ContingencyRecord(level, order, axis, src, att, ctx.tick_index, cause, literal, target)
    while _exhausted(record, ctx):
        if record.level in (Level.SKILL, Level.UNCLASSIFIED):
            # Re-presented as a task contingency on the primitive's postcondition.
            post = src.primitive.post[0][0] if src.primitive is not None and src.primitive.post else None
            record = replace(record, level=Level.TASK, order=Order.FIRST if repairable(post) else Order.HIGHER,
                             literal=post, escalated_from=record.level, target=None)
        elif record.level is Level.TASK:
            record = replace(record, level=Level.MISSION, order=Order.HIGHER, axis=Axis.PROCEDURAL,
                             escalated_from=Level.TASK)
        else:
            break
    return record


def _recovery_for(record: ContingencyRecord) -> RecoveryAction:
    level, order, cause = record.level, record.order, record.cause
    if level is Level.UNCLASSIFIED:
        if cause == "driver_dropout" and record.target:
            return ResetDriver(record.target)
        if cause == "sensor_noise":
            return RunNPickBest(3)
    elif level is Level.SKILL and order is Order.FIRST:
        if cause == "object_not_detected":
            return PerturbAndRetry("camera", CAMERA_DELTA)
        return PerturbAndRetry("grasp", GRASP_DELTA)
    elif level is Level.TASK and order is Order.FIRST:
        if cause == "out_of_order_attachment" and record.target:
            return ReverseAttachment(record.target)
        if repairable(record.literal):
            return StitchPreconditionRepair(record.literal)
    elif level is Level.MISSION:
        irreversible = (record.target,) if record.target else ()
        return MissionReplan(irreversible)
    return Escalate(cause)


def select_recovery(record: ContingencyRecord, ctx: ExecutionContext | None = None) -> RecoveryAction:
    """Table lookup; Escalate once the record's budget is spent."""
    if ctx is not None and _exhausted(record, ctx):
        return Escalate(f"{record.cause}_budget_exhausted")
    return _recovery_for(record)


# -- applying recoveries ----------------------------------------------------


class RecoveryResult(enum.Enum):
    RESUMED = "Resumed"
    REPLANNED = "Replanned"
    FAILED = "Failed"


@dataclass(frozen=True)
class RecoveryOutcome:
    result: RecoveryResult
    tree: Node
    detail: str = ""
    record: ContingencyRecord | None = None


@dataclass
class PlannerHandles:
    spec: MissionSpec
    preenum: bool = False
    plans: list[str] = field(default_factory=list)  # mission plans produced by replanning

    def compile(self, task_plan) -> Node:
        decisions = configuration_decisions(task_plan) if self.preenum else ()
        return compile_plan(task_plan, decisions)


def _path(tree: Node, node_id: str) -> list[Node]:
    def go(node, trail):
        trail = trail + [node]
        if node.node_id == node_id:
            return trail
        for child in node.children:
            found = go(child, trail)
            if found:
                return found
        return None

    return go(tree, []) or []


def _stitch_point(tree: Node, node_id: str) -> tuple[Node | None, Node | None]:
    """Innermost unit holding ``node_id`` and the Sequence it sits in."""
    path = _path(tree, node_id)
    for i in range(len(path) - 1, 0, -1):
        if path[i].meta.get("role") in ("unit", "verify") and isinstance(path[i - 1], Sequence):
            return path[i], path[i - 1]
    return None, None


def _repair(record, tree, world) -> RecoveryOutcome:
    literal = record.literal
    failed_node_id = record.source.node_id
    if any(n.meta.get("role") == "repair" for n in _path(tree, failed_node_id)):
        return RecoveryOutcome(RecoveryResult.RESUMED, tree, "retry repair in place", record)
    at, parent = _stitch_point(tree, failed_node_id)
    if at is None:
        return RecoveryOutcome(RecoveryResult.FAILED, tree, "no stitch point", record)
    tag = str(literal).replace(" ", "_")
    index = parent.nodes.index(at)
    if index > 0 and parent.nodes[index - 1].meta.get("role") == "repair" \
            and parent.nodes[index - 1].meta.get("literal") == tag:
        return RecoveryOutcome(RecoveryResult.RESUMED, tree, "repair already in place", record)
    agent = at.meta.get("agent") or record.source.primitive and record.source.primitive.agent
    try:
        plan = repair_precondition(literal, world.state, agent=agent or None, attachment=record.attachment)
    except PlanningError as exc:
        return RecoveryOutcome(RecoveryResult.FAILED, tree, str(exc), record)
    subtree = repair_subtree(plan, literal, {"att": record.attachment})
    return RecoveryOutcome(RecoveryResult.RESUMED, stitch_repair(tree, at.node_id, subtree, Before),
                           f"before={at.node_id}", record)


def _reverse(action: ReverseAttachment, record, tree, world) -> RecoveryOutcome:
    b = action.attachment
    try:
        plan = reverse_plan(b, world.state)
    except PlanningError as exc:
        return RecoveryOutcome(RecoveryResult.FAILED, tree, str(exc), record)
    part = world.state.spec.attachments[b].moved
    pending = record.attachment
    # Skip the reversal once b is undone and its part released, or once the
    # attachment that tripped over it is done.
    guard = cnf((neg("is_done", b), lit("is_done", pending)), (neg("in_hand", part), lit("is_done", pending)))
    subtree = forced_plan_tree(plan, guard, {"role": "reverse", "att": b})
    subtree.meta["role"] = "reverse"
    return RecoveryOutcome(RecoveryResult.RESUMED, prepend_subtree(tree, subtree), f"reverse={b}", record)


def _replan(handles: PlannerHandles, record, tree, world) -> RecoveryOutcome:
    state = world.state
    done = state.done_attachments()
    try:
        mission_plan = replan_mission(handles.spec, achieved=done)
        task_plan = plan_tasks(handles.spec, mission_plan, state, achieved=done)
    except (MissionPlanningError, PlanningError) as exc:
        return RecoveryOutcome(RecoveryResult.FAILED, tree, str(exc).replace(" ", "_"), record)
    order = ",".join(str(s) for s in mission_plan.steps)
    handles.plans.append(order)
    new_tree = handles.compile(task_plan)
    # A part left in a hand by the abandoned plan is put down first.
    used = {step.primitive.part for step in task_plan}
    releases = [compile_primitive(make_primitive("Release", part=a.held, agent=name),
                                  {"att": record.attachment, "agent": name, "role": "unit"})
                for name, a in sorted(state.agents.items()) if a.held is not None and a.held not in used]
    if releases:
        new_tree = prepend_subtree(new_tree, Sequence(releases, meta={"att": record.attachment, "role": "steps"}))
    return RecoveryOutcome(RecoveryResult.REPLANNED, new_tree, f"plan={order}", record)


def _pick_best(action: RunNPickBest, record, tree, world: SimWorld) -> RecoveryOutcome:
    prim = record.source.primitive
    first = getattr(record.source.outcome, "measurement", None)
    samples = [first] if first is not None else []
    state = world.state
    for _ in range(action.n - len(samples)):
        state = replace(state, clock=state.clock + 1)
        try:
            state, m = detect_with_error(state, prim.part, world.schedule, prim)
        except DetectionError:
            continue
        samples.append(m)
    if not samples:
        world.state = state
        return RecoveryOutcome(RecoveryResult.RESUMED, tree, "no_sample", record)
    best = min(range(len(samples)), key=lambda i: samples[i].magnitude)
    world.events.append(f"pick_best:{prim.part}:{best + 1}/{len(samples)}")
    if samples[best].magnitude <= DETECTION_TOLERANCE:
        state = commit_detection(state, prim.part, samples[best])
    world.state = state
    return RecoveryOutcome(RecoveryResult.RESUMED, tree, f"picked={best + 1}", record)


def apply_recovery(action: RecoveryAction, tree: Node, handles: PlannerHandles, world: SimWorld,
                   record: ContingencyRecord | None = None) -> RecoveryOutcome:
    if isinstance(action, PerturbAndRetry):
        world.perturb(action.target, action.delta)
        return RecoveryOutcome(RecoveryResult.RESUMED, tree, f"perturb={action.target}", record)
    if isinstance(action, RunNPickBest):
        return _pick_best(action, record, tree, world)
    if isinstance(action, ResetDriver):
        world.reset_driver(action.agent)
        return RecoveryOutcome(RecoveryResult.RESUMED, tree, f"reset={action.agent}", record)
    if isinstance(action, StitchPreconditionRepair):
        return _repair(replace(record, literal=action.literal), tree, world)
    if isinstance(action, ReverseAttachment):
        return _reverse(action, record, tree, world)
    if isinstance(action, MissionReplan):
        return _replan(handles, record, tree, world)
    return RecoveryOutcome(RecoveryResult.FAILED, tree, str(action), record)


# -- log --------------------------------------------------------------------

_LOG_FIELDS = ("tick", "level", "order", "axis", "att", "src", "action", "result", "cause")
_LOG_RE = re.compile(r"(\w+)=(\S*)")


def log_line(record: ContingencyRecord, action: RecoveryAction, outcome: RecoveryOutcome) -> str:
    return (f"tick={record.tick_index} level={record.level.value} order={record.order.value} "
            f"axis={record.axis.value} att={record.attachment or '-'} src={record.source.node_id} "
            f"action={str(action).replace(' ', '_')} result={outcome.result.value} cause={record.cause}")


class LogFormatError(ValueError):
    pass


def parse_contingency_log(text: str) -> list[dict[str, str]]:
    rows = []
    for number, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = dict(_LOG_RE.findall(line))
        if set(fields) != set(_LOG_FIELDS) or len(line.split()) != len(_LOG_FIELDS):
            raise LogFormatError(f"line {number}: not a contingency record: {line!r}")
        if fields["level"] not in {l.value for l in Level} or fields["order"] not in {o.value for o in Order}:
            raise LogFormatError(f"line {number}: bad level or order")
        rows.append(fields)
    return rows


def report_rows(rows: Iterable[dict[str, str]]) -> list[tuple[str, int]]:
    """Counts per contingency category, catalogued causes first."""
    counts = Counter(category_label(r["level"], r["order"], r["cause"]) for r in rows)
    rank = {cause: i for i, cause in enumerate(CAUSE_LABELS)}

    def key(label):
        text = label.split(" / ", 1)[1]
        cause = next((c for c, t in CAUSE_LABELS.items() if t == text), text)
        return (rank.get(cause, len(rank)), label)

    return [(label, counts[label]) for label in sorted(counts, key=key)]


def format_report(rows: Iterable[dict[str, str]]) -> str:
    return "".join(f"{label}: {count}\n" for label, count in report_rows(rows))
