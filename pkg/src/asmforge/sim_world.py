"""Deterministic dual-arm assembly world with scripted fault injection.

World state is an immutable value; :func:`apply_primitive` returns a new
state plus an :class:`ActionOutcome`. :class:`SimWorld` wraps one state and
one fault schedule into the mutable interface the behavior-tree engine ticks
against.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Union

from .mission_spec import CLASS_PREDICATES, MissionSpec, class_predicate
from .symbols import PREDICATES, Literal, SkillPrimitive, UnboundArgument, UnknownPredicate, skill_of, tick_cost

AGENTS = ("left", "right")
CONFIGURATIONS = ("base-down", "base-up")
DEFAULT_CONFIGURATION = "base-down"
DETECTION_TOLERANCE = 0.005
RESET_DRIVER_TICKS = 2

GRASP_SLIP = "GraspSlip"
NO_DETECTION = "NoDetection"
DRIVER_DOWN = "DriverDown"
JAMMED = "Jammed"
SENSOR_NOISE = "SensorNoise"
MOTION_FAILURE = "MotionFailure"
ALIGN_FAILURE = "AlignFailure"
PLANNING_FAILURE = "PlanningFailure"
HAND_OCCUPIED = "HandOccupied"
FASTEN_FAILED = "FastenFailed"
VERIFY_FAILED = "VerificationFailed"

# Error reported when a scripted fault hits a primitive of this family.
_FAULT_ERROR = {
    "Detect": NO_DETECTION,
    "PickUp.ComputeGrasp": PLANNING_FAILURE,
    "PickUp.Grasp": GRASP_SLIP,
    "Move": MOTION_FAILURE,
    "Align": ALIGN_FAILURE,
    "Fasten": JAMMED,
    "Release": GRASP_SLIP,
    "Verify": VERIFY_FAILED,
}

_FASTEN_TAG = {"Fasten.ScrewPrim": "screwed", "Fasten.InsertPrim": "inserted", "Fasten.MountPrim": "mounted"}
_PLACEMENT_TAGS = {"detected", "grasp_planned", "aligned"}


# -- state ------------------------------------------------------------------


@dataclass(frozen=True)
class Location:
    kind: str  # station | hand | attached | stuck
    agent: str | None = None
    attachments: tuple[str, ...] = ()

    def __str__(self) -> str:
        if self.kind == "hand":
            return f"hand:{self.agent}"
        if self.kind in ("attached", "stuck"):
            return f"{self.kind}:{'+'.join(self.attachments)}"
        return self.kind


STATION = Location("station")


@dataclass(frozen=True)
class PartState:
    location: Location = STATION
    configuration: str = DEFAULT_CONFIGURATION
    tags: frozenset[str] = frozenset()
    grasp_plan: str | None = None
    grasp_config: str | None = None
    belief_config: str | None = None
    belief_pose: tuple[float, float] | None = None


@dataclass(frozen=True)
class AgentState:
    pose: tuple[float, float]
    held: str | None = None
    down_until: int | None = None
    tags: frozenset[str] = frozenset()

    @property
    def driver_up(self) -> bool:
        return self.down_until is None


@dataclass(frozen=True)
class WorldState:
    spec: MissionSpec
    parts: dict[str, PartState]
    agents: dict[str, AgentState]
    part_classes: dict[str, str]
    uncertain: frozenset[str] = frozenset()
    camera_pose: tuple[float, float] = (0.0, 0.5)
    grasp_offset: tuple[float, float] = (0.0, 0.0)
    clock: int = 0
    job: tuple[str, int] | None = None
    fault_hits: tuple[tuple[int, int], ...] = ()

    def hits(self, index: int) -> int:
        return dict(self.fault_hits).get(index, 0)

    def with_hit(self, index: int) -> "WorldState":
        hits = dict(self.fault_hits)
        hits[index] = hits.get(index, 0) + 1
        return replace(self, fault_hits=tuple(sorted(hits.items())))

    def with_part(self, part_id: str, **changes) -> "WorldState":
        parts = dict(self.parts)
        parts[part_id] = replace(parts[part_id], **changes)
        return replace(self, parts=parts)

    def with_agent(self, agent: str, **changes) -> "WorldState":
        agents = dict(self.agents)
        agents[agent] = replace(agents[agent], **changes)
        return replace(self, agents=agents)

    def done_attachments(self) -> list[str]:
        return [a for a in self.spec.attachments if is_done(self, a)]


def initial_state(spec: MissionSpec, *, configurations: dict[str, str] | None = None,
                  part_classes: dict[str, str] | None = None,
                  uncertain: Iterable[str] = (), done: Iterable[str] = ()) -> WorldState:
    """Every part resting at its station, both arms idle and empty.

    ``done`` lists attachments the world already contains (a part someone
    fastened before the run started).
    """
    configurations = configurations or {}
    classes = {pid: part.part_class.class_name for pid, part in spec.parts.items()}
    classes.update(part_classes or {})
    parts = {pid: PartState(configuration=configurations.get(pid, DEFAULT_CONFIGURATION)) for pid in spec.parts}
    for aid in done:
        att = spec.attachments[aid]
        ps = parts[att.moved]
        prior = ps.location.attachments if ps.location.kind == "attached" else ()
        tag = {"screw": "screwed", "insert": "inserted"}.get(att.kind.value, "mounted")
        parts[att.moved] = replace(ps, location=Location("attached", attachments=prior + (aid,)),
                                   tags=ps.tags | {tag})
    agents = {"left": AgentState((0.0, 0.3)), "right": AgentState((0.0, -0.3))}
    return WorldState(spec, parts, agents, classes, frozenset(uncertain))


# -- faults -----------------------------------------------------------------


@dataclass(frozen=True)
class FailNTimes:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("fail_n needs n >= 1")


@dataclass(frozen=True)
class FailPermanently:
    pass


@dataclass(frozen=True)
class PoseNoise:
    magnitudes: tuple[float, ...]

    def __post_init__(self):
        if not self.magnitudes or any(not math.isfinite(m) or m < 0 for m in self.magnitudes):
            raise ValueError("noise needs a finite, non-empty list of magnitudes >= 0")


@dataclass(frozen=True)
class DropDriver:
    duration: int

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("drop_driver needs a duration >= 1")


@dataclass(frozen=True)
class WrongConfiguration:
    config: str


FaultMode = Union[FailNTimes, FailPermanently, PoseNoise, DropDriver, WrongConfiguration]


@dataclass(frozen=True)
class FaultSpec:
    target: str
    mode: FaultMode
    part: str | None = None
    agent: str | None = None

    @property
    def targets_predicate(self) -> bool:
        return self.target in PREDICATES

    def matches_primitive(self, prim: SkillPrimitive) -> bool:
        if self.targets_predicate:
            return False
        if self.target != prim.head and not prim.head.endswith("." + self.target):
            return False
        return (self.part is None or self.part == prim.part) and (self.agent is None or self.agent == prim.agent)

    def matches_literal(self, literal: Literal) -> bool:
        if self.target != literal.predicate:
            return False
        if self.part is not None and (not literal.args or literal.args[0] != self.part):
            return False
        if self.agent is not None:
            if literal.predicate == "agent_state":
                return bool(literal.args) and literal.args[0] == self.agent
            return len(literal.args) > 1 and literal.args[1] == self.agent
        return True

    def to_text(self) -> str:
        out = f"fault target={self.target}"
        if self.part:
            out += f" part={self.part}"
        if self.agent:
            out += f" agent={self.agent}"
        return out + " mode=" + _mode_text(self.mode)


def _mode_text(mode: FaultMode) -> str:
    if isinstance(mode, FailNTimes):
        return f"fail_n:{mode.n}"
    if isinstance(mode, FailPermanently):
        return "fail_perm"
    if isinstance(mode, PoseNoise):
        return "noise:" + ",".join(repr(m) for m in mode.magnitudes)
    if isinstance(mode, DropDriver):
        return f"drop_driver:{mode.duration}"
    return f"wrong_config:{mode.config}"


@dataclass(frozen=True)
class FaultSchedule:
    faults: tuple[FaultSpec, ...] = ()

    def __iter__(self):
        return iter(self.faults)

    def __len__(self):
        return len(self.faults)

    def to_text(self) -> str:
        return "".join(f.to_text() + "\n" for f in self.faults)


class FaultScheduleError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _parse_mode(text: str) -> FaultMode:
    name, _, arg = text.partition(":")
    if name == "fail_n":
        return FailNTimes(int(arg))
    if name == "fail_perm" and not arg:
        return FailPermanently()
    if name == "noise":
        return PoseNoise(tuple(float(x) for x in arg.split(",")))
    if name == "drop_driver":
        return DropDriver(int(arg))
    if name == "wrong_config" and arg:
        return WrongConfiguration(arg)
    raise ValueError(f"unknown mode {text!r}")


def parse_fault_schedule(text: str) -> FaultSchedule:
    """Parse ``fault target=... [part=...] [agent=...] mode=...`` lines."""
    faults = []
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] != "fault":
            raise FaultScheduleError(f"expected 'fault', got {words[0]!r}", number)
        fields: dict[str, str] = {}
        for word in words[1:]:
            key, sep, value = word.partition("=")
            if not sep or key not in ("target", "part", "agent", "mode") or key in fields or not value:
                raise FaultScheduleError(f"bad field {word!r}", number)
            fields[key] = value
        if "target" not in fields or "mode" not in fields:
            raise FaultScheduleError("fault needs target= and mode=", number)
        if fields.get("agent") not in (None, *AGENTS):
            raise FaultScheduleError(f"unknown agent {fields['agent']!r}", number)
        try:
            mode = _parse_mode(fields["mode"])
        except ValueError as exc:
            raise FaultScheduleError(str(exc), number) from None
        faults.append(FaultSpec(fields["target"], mode, fields.get("part"), fields.get("agent")))
    return FaultSchedule(tuple(faults))


# -- outcomes ---------------------------------------------------------------


class OutcomeStatus(enum.Enum):
    IN_PROGRESS = "InProgress"
    DONE = "Done"
    ERROR = "Error"


@dataclass(frozen=True)
class Measurement:
    pose: tuple[float, float]
    magnitude: float


@dataclass(frozen=True)
class ActionOutcome:
    status: OutcomeStatus
    error: str | None = None
    measurement: Measurement | None = None

    def __str__(self) -> str:
        if self.status is OutcomeStatus.ERROR:
            return f"Error({self.error})"
        return self.status.value


IN_PROGRESS = ActionOutcome(OutcomeStatus.IN_PROGRESS)
DONE = ActionOutcome(OutcomeStatus.DONE)


def _error(kind: str, measurement: Measurement | None = None) -> ActionOutcome:
    return ActionOutcome(OutcomeStatus.ERROR, kind, measurement)


# -- predicates -------------------------------------------------------------


def _part(state: WorldState, part: str) -> PartState:
    try:
        return state.parts[part]
    except KeyError:
        raise UnboundArgument(f"unknown part {part!r}") from None


def _agent(state: WorldState, agent: str) -> AgentState:
    try:
        return state.agents[agent]
    except KeyError:
        raise UnboundArgument(f"unknown agent {agent!r}") from None


def is_done(state: WorldState, attachment: str) -> bool:
    att = state.spec.attachments.get(attachment)
    if att is None:
        raise UnboundArgument(f"unknown attachment {attachment!r}")
    loc = state.parts[att.moved].location
    return loc.kind == "attached" and attachment in loc.attachments


def query_predicate(state: WorldState, literal: Literal) -> bool:
    """Truthful value of ``literal`` in ``state`` (no fault flipping)."""
    literal.check()
    name, args = literal.predicate, literal.args
    if name == "true":
        value = True
    elif name in CLASS_PREDICATES:
        _part(state, args[0])
        value = class_predicate(name, state.part_classes[args[0]])
    elif name == "is_done":
        value = is_done(state, args[0])
    elif name == "agent_state":
        ag = _agent(state, args[0])
        if args[1] == "free":
            value = ag.held is None
        elif args[1] == "down":
            value = not ag.driver_up
        else:
            value = args[1] in ag.tags
    else:
        ps = _part(state, args[0])
        loc = ps.location
        if name == "in_hand":
            if len(args) == 2:
                _agent(state, args[1])
            # Held counts, even once the part is fastened and not yet released.
            holders = [n for n, a in state.agents.items() if a.held == args[0]]
            value = bool(holders) and (len(args) == 1 or args[1] in holders)
        elif name == "is_grasped":
            value = any(a.held == args[0] for a in state.agents.values())
        elif name == "is_aligned":
            value = "aligned" in ps.tags
        elif name == "is_placed":
            value = loc.kind == "attached"
        elif name == "at_station":
            value = loc.kind == "station"
        elif name == "pose_ok":
            held = ps.grasp_config if loc.kind == "hand" else DEFAULT_CONFIGURATION
            value = held == ps.configuration
        elif name == "part_state":
            tag = args[1]
            if tag.startswith("config_"):
                value = ps.belief_config == tag[len("config_"):]
            elif tag == "uncertain":
                value = args[0] in state.uncertain
            else:
                value = tag in ps.tags
        else:  # pragma: no cover - PREDICATES and this dispatch are kept in sync
            raise UnknownPredicate(name)
    return value != literal.negated


def true_pose(state: WorldState, part: str) -> tuple[float, float]:
    ps = _part(state, part)
    if ps.location.kind == "hand":
        return state.agents[ps.location.agent].pose
    if ps.location.kind in ("attached", "stuck"):
        att = state.spec.attachments[ps.location.attachments[-1]]
        return state.spec.station_pose(att.bases[0])
    return state.spec.station_pose(part)


# -- actions ----------------------------------------------------------------


class DetectionError(RuntimeError):
    def __init__(self, part: str):
        super().__init__(f"{part} not detected")
        self.part = part


def _matching(schedule: FaultSchedule, prim: SkillPrimitive):
    for index, fault in enumerate(schedule):
        if fault.matches_primitive(prim):
            yield index, fault


def _detect_prim(part: str) -> SkillPrimitive:
    return SkillPrimitive("Detect.Object", (("part", part),))


def _lighting(state: WorldState, schedule: FaultSchedule, prim: SkillPrimitive) -> tuple[WorldState, bool]:
    for index, fault in _matching(schedule, prim):
        mode = fault.mode
        if isinstance(mode, FailNTimes) and state.hits(index) < mode.n:
            return state.with_hit(index), True
        if isinstance(mode, FailPermanently):
            return state.with_hit(index), True
    return state, False


def detect_with_error(state: WorldState, part: str, schedule: FaultSchedule = FaultSchedule(),
                      prim: SkillPrimitive | None = None) -> tuple[WorldState, Measurement]:
    """One detection of ``part``: true pose plus the next scripted offset.

    Raises :class:`DetectionError` while a lighting fault is active.
    """
    prim = prim or _detect_prim(part)
    state, dark = _lighting(state, schedule, prim)
    if dark:
        raise DetectionError(part)
    offset = 0.0
    for index, fault in _matching(schedule, prim):
        if isinstance(fault.mode, PoseNoise):
            used = state.hits(index)
            if used < len(fault.mode.magnitudes):
                offset = fault.mode.magnitudes[used]
                state = state.with_hit(index)
            break
    x, y = true_pose(state, part)
    return state, Measurement((x + offset, y), abs(offset))


def commit_detection(state: WorldState, part: str, measurement: Measurement) -> WorldState:
    ps = _part(state, part)
    return state.with_part(part, tags=ps.tags | {"detected"}, belief_pose=measurement.pose,
                           belief_config=ps.configuration)


def _scripted_failure(state: WorldState, schedule: FaultSchedule, prim: SkillPrimitive):
    """Apply matching non-detection faults; return (state, error or None)."""
    for index, fault in _matching(schedule, prim):
        mode = fault.mode
        if isinstance(mode, (FailNTimes, FailPermanently)):
            if skill_of(prim.head) == "Detect":
                continue  # handled by detect_with_error
            if isinstance(mode, FailPermanently) or state.hits(index) < mode.n:
                return state.with_hit(index), _error(_fault_error(prim.head))
        elif isinstance(mode, DropDriver) and state.hits(index) == 0 and prim.agent in state.agents:
            state = state.with_hit(index).with_agent(prim.agent, down_until=state.clock + mode.duration)
            return state, _error(DRIVER_DOWN)
        elif isinstance(mode, WrongConfiguration) and state.hits(index) == 0 and prim.part in state.parts:
            state = state.with_hit(index).with_part(prim.part, configuration=mode.config)
    return state, None


def _fault_error(head: str) -> str:
    if head in _FAULT_ERROR:
        return _FAULT_ERROR[head]
    return _FAULT_ERROR[skill_of(head)]


def apply_primitive(state: WorldState, prim: SkillPrimitive,
                    schedule: FaultSchedule = FaultSchedule()) -> tuple[WorldState, ActionOutcome]:
    """Advance one work tick on ``prim``; effects land on its last tick."""
    state = replace(state, clock=state.clock + 1)
    ag = prim.agent
    if ag is not None:
        agent = _agent(state, ag)
        if not agent.driver_up:
            if state.clock >= agent.down_until:
                state = state.with_agent(ag, down_until=None)
            else:
                return replace(state, job=None), _error(DRIVER_DOWN)
    sig = prim.signature()
    progress = state.job[1] + 1 if state.job and state.job[0] == sig else 1
    if progress < tick_cost(prim.head):
        return replace(state, job=(sig, progress)), IN_PROGRESS
    state = replace(state, job=None)
    state, failure = _scripted_failure(state, schedule, prim)
    if failure is not None:
        if skill_of(prim.head) == "Fasten" and prim.part in state.parts:
            state = _jam(state, prim)
        return state, failure
    return _effect(state, prim, schedule)


def _jam(state: WorldState, prim: SkillPrimitive) -> WorldState:
    att = prim.param("attachment", "")
    for name, ag in state.agents.items():
        if ag.held == prim.part:
            state = state.with_agent(name, held=None)
    return state.with_part(prim.part, location=Location("stuck", attachments=(att,)))


def _effect(state: WorldState, prim: SkillPrimitive, schedule: FaultSchedule) -> tuple[WorldState, ActionOutcome]:
    head, p, ag = prim.head, prim.part, prim.agent
    if head == "Detect.Object":
        state, dark = _lighting(state, schedule, prim)
        if dark:
            return state, _error(NO_DETECTION)
        try:
            state, measurement = detect_with_error(state, p, schedule, prim)
        except DetectionError:
            return state, _error(NO_DETECTION)
        if measurement.magnitude > DETECTION_TOLERANCE:
            return state, _error(SENSOR_NOISE, measurement)
        return commit_detection(state, p, measurement), ActionOutcome(OutcomeStatus.DONE, measurement=measurement)
    if head in ("Detect.Force", "Detect.Grasp", "Verify.Pre"):
        return state, DONE
    if head == "Verify.Post":
        ok = all(any(query_predicate(state, l) for l in clause) for clause in prim.post)
        return state, DONE if ok else _error(VERIFY_FAILED)
    ps = _part(state, p) if p is not None else None
    if head == "PickUp.ComputeGrasp":
        if "detected" not in ps.tags:
            return state, _error(PLANNING_FAILURE)
        config = prim.param("config", "auto")
        plan = ps.belief_config if config == "auto" else config
        return state.with_part(p, grasp_plan=plan, tags=ps.tags | {"grasp_planned"}), DONE
    if head == "PickUp.Grasp":
        agent = _agent(state, ag)
        loc = ps.location
        if agent.held not in (None, p) or (loc.kind == "hand" and loc.agent != ag):
            return state, _error(HAND_OCCUPIED)
        if loc.kind == "stuck" or ps.grasp_plan is None:
            return state, _error(GRASP_SLIP)
        changes = {"grasp_config": ps.grasp_plan}
        if loc.kind == "station":
            changes.update(location=Location("hand", ag), tags=ps.tags - {"aligned"})
        return state.with_part(p, **changes).with_agent(ag, held=p), DONE
    if skill_of(head) == "Move":
        agent = _agent(state, ag)
        if head == "Move.MoveUntilForce":
            return state.with_agent(ag, tags=agent.tags | {"contact"}), DONE
        target = prim.param("target", p)
        pose = state.spec.station_pose(target) if target in state.spec.parts else agent.pose
        tags = frozenset(t for t in agent.tags if not t.startswith("at_")) | {f"at_{target}"}
        return state.with_agent(ag, pose=pose, tags=tags), DONE
    if head == "Align":
        loc = ps.location
        if not ((loc.kind == "hand" and loc.agent == ag) or loc.kind == "attached"):
            return state, _error(ALIGN_FAILURE)
        return state.with_part(p, tags=ps.tags | {"aligned"}), DONE
    if head in _FASTEN_TAG:
        loc = ps.location
        held = (loc.kind == "hand" and loc.agent == ag) or loc.kind == "attached"
        if not held or "aligned" not in ps.tags:
            return state, _error(FASTEN_FAILED)
        att = prim.param("attachment")
        done = loc.attachments if loc.kind == "attached" else ()
        return state.with_part(p, location=Location("attached", attachments=done + (att,)),
                               tags=ps.tags | {_FASTEN_TAG[head]}), DONE
    if head in ("Fasten.UnscrewPrim", "Fasten.ExtractPrim"):
        att = prim.param("attachment")
        loc = ps.location
        if loc.kind != "attached" or att not in loc.attachments or _agent(state, ag).held != p:
            return state, _error(FASTEN_FAILED)
        rest = tuple(a for a in loc.attachments if a != att)
        if rest:
            return state.with_part(p, location=Location("attached", attachments=rest)), DONE
        tags = ps.tags - {"aligned", "screwed", "inserted", "mounted"}
        return state.with_part(p, location=Location("hand", ag), tags=tags), DONE
    if head == "Release":
        agent = _agent(state, ag)
        if ps.location.kind == "hand" and ps.location.agent == ag:
            state = state.with_part(p, location=STATION, tags=ps.tags - _PLACEMENT_TAGS, grasp_plan=None,
                                    grasp_config=None, belief_config=None, belief_pose=None)
        if agent.held == p:
            state = state.with_agent(ag, held=None)
        return state, DONE
    raise UnknownPredicate(f"no simulator effect for {head}")


def run_to_completion(state: WorldState, prim: SkillPrimitive,
                      schedule: FaultSchedule = FaultSchedule()) -> tuple[WorldState, ActionOutcome]:
    """Resubmit ``prim`` until it stops reporting progress."""
    while True:
        state, outcome = apply_primitive(state, prim, schedule)
        if outcome.status is not OutcomeStatus.IN_PROGRESS:
            return state, outcome


# -- mutable world ----------------------------------------------------------


@dataclass
class SimWorld:
    """The executor's single mutable world: state, schedule and an event log."""

    state: WorldState
    schedule: FaultSchedule = field(default_factory=FaultSchedule)
    events: list[str] = field(default_factory=list)
    action_count: int = 0

    def execute(self, prim: SkillPrimitive) -> ActionOutcome:
        self.state, outcome = apply_primitive(self.state, prim, self.schedule)
        self.action_count += 1
        self.events.append(f"{prim.signature()}->{outcome}")
        return outcome

    def query(self, literal: Literal) -> bool:
        # Predicate faults flip a true reading of the positive fact to false.
        positive = query_predicate(self.state, literal) != literal.negated
        if positive:
            for index, fault in enumerate(self.schedule):
                if not fault.targets_predicate or not fault.matches_literal(literal):
                    continue
                mode = fault.mode
                if isinstance(mode, FailPermanently) or (
                        isinstance(mode, FailNTimes) and self.state.hits(index) < mode.n):
                    self.state = self.state.with_hit(index)
                    positive = False
                    break
        return positive != literal.negated

    def snapshot(self) -> WorldState:
        return self.state

    def perturb(self, target: str, delta: tuple[float, float]) -> None:
        if target == "camera":
            x, y = self.state.camera_pose
            self.state = replace(self.state, camera_pose=(x + delta[0], y + delta[1]))
        else:
            x, y = self.state.grasp_offset
            self.state = replace(self.state, grasp_offset=(x + delta[0], y + delta[1]))
        self.events.append(f"perturb:{target}")

    def reset_driver(self, agent: str, cost: int = RESET_DRIVER_TICKS) -> None:
        self.state = replace(self.state.with_agent(agent, down_until=None), clock=self.state.clock + cost, job=None)
        self.events.append(f"reset_driver:{agent}")

    def take_events(self) -> list[str]:
        out, self.events = self.events, []
        return out


def assembly_of(state: WorldState) -> dict[str, str]:
    """Where every part ended up; the part of the state that defines the product."""
    return {pid: str(ps.location) for pid, ps in sorted(state.parts.items())}

