"""Skill methods, SHOP-style task planning and first-order repairs.

Methods are ordered lists of guarded branches; the first branch whose guard
holds in the (forward-simulated) state is taken. Planning is total-order
and never backtracks across mission steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Union

from .mission_planner import MissionPlan
from .mission_spec import AttachmentKind, Category, MissionSpec
from .sim_world import (
    CONFIGURATIONS, OutcomeStatus, WorldState, initial_state, query_predicate, run_to_completion,
)
from .symbols import (
    CNF, PRIMITIVE_HEADS, Literal, SkillPrimitive, cnf, lit, neg, parse_signature, skill_of,
)


class PlanningError(Exception):
    pass


class NoApplicableBranch(PlanningError):
    def __init__(self, method: str, attachment: str | None = None):
        where = f" (attachment {attachment})" if attachment else ""
        super().__init__(f"no branch of {method} applies{where}")
        self.method = method
        self.attachment = attachment


class UnsatisfiablePrecondition(PlanningError):
    def __init__(self, primitive: SkillPrimitive, literal: Literal | None = None, attachment: str | None = None):
        what = f"{literal} fails" if literal is not None else "execution fails"
        super().__init__(f"{primitive}: {what}")
        self.primitive = primitive
        self.literal = literal
        self.attachment = attachment


class Irreversible(PlanningError):
    def __init__(self, attachment: str):
        super().__init__(f"attachment {attachment} cannot be undone")
        self.attachment = attachment


class PreconditionViolation(PlanningError):
    pass


class NoRepairKnown(PlanningError):
    def __init__(self, literal: Literal):
        super().__init__(f"no repair for failed {literal}")
        self.literal = literal


# -- primitives -------------------------------------------------------------

_FASTEN_HEAD = {
    AttachmentKind.SCREW: "Fasten.ScrewPrim",
    AttachmentKind.INSERT: "Fasten.InsertPrim",
    AttachmentKind.MOUNT: "Fasten.MountPrim",
}
_UNFASTEN_HEAD = {
    AttachmentKind.SCREW: "Fasten.UnscrewPrim",
    AttachmentKind.INSERT: "Fasten.ExtractPrim",
    AttachmentKind.MOUNT: "Fasten.ExtractPrim",
}
_FASTEN_TAG = {"Fasten.ScrewPrim": "screwed", "Fasten.InsertPrim": "inserted", "Fasten.MountPrim": "mounted"}

# Class guards of the fasten method, in branch order.
FASTEN_GUARDS = (
    ("Fasten.ScrewPrim", ("is_screw", "is_bolt", "is_nut")),
    ("Fasten.InsertPrim", ("is_housing", "is_shaft", "is_pulley", "is_dowel")),
    ("Fasten.MountPrim", ("is_elastic",)),
)


def _class_clause(head: str, part: str) -> tuple[Literal, ...]:
    for h, preds in FASTEN_GUARDS:
        if h == head:
            return tuple(lit(name, part) for name in preds)
    raise KeyError(head)


def conditions(head: str, params: Mapping[str, str]) -> tuple[CNF, CNF]:
    """Pre- and postconditions of a grounded primitive."""
    p = params.get("part")
    ag = params.get("agent")
    target = params.get("target", p)
    att = params.get("attachment")
    variant = params.get("variant", "nominal")
    if head == "Detect.Object":
        return (cnf(lit("at_station", p)) if variant == "nominal" else ()), cnf(lit("part_state", p, "detected"))
    if head == "Detect.Grasp":
        return (), cnf(lit("is_grasped", p))
    if head in ("Detect.Force", "Verify.Pre"):
        return (), ()
    if head == "PickUp.ComputeGrasp":
        return cnf(lit("part_state", p, "detected")), cnf(lit("part_state", p, "grasp_planned"))
    if head == "PickUp.Grasp":
        if variant == "reverse":
            return cnf(lit("part_state", p, "grasp_planned"), lit("is_placed", p)), cnf(lit("is_grasped", p))
        return cnf(lit("part_state", p, "grasp_planned"), lit("agent_state", ag, "free")), cnf(lit("in_hand", p, ag))
    if head in ("Move.Transport", "Move.Servo"):
        pre = cnf(lit("in_hand", p, ag)) if variant == "reverse" else cnf(lit("in_hand", p, ag), lit("pose_ok", p))
        return pre, cnf(lit("agent_state", ag, f"at_{target}"))
    if head == "Move.MoveUntilForce":
        return cnf(lit("in_hand", p, ag)), cnf(lit("agent_state", ag, "contact"))
    if head == "Align":
        if variant == "continuation":
            return cnf(lit("is_placed", p)), cnf(lit("is_aligned", p))
        return cnf(lit("in_hand", p, ag), lit("agent_state", ag, f"at_{target}")), cnf(lit("is_aligned", p))
    if head in _FASTEN_TAG:
        holding = lit("is_placed", p) if variant == "continuation" else lit("in_hand", p, ag)
        pre = [holding, lit("is_aligned", p)]
        if params.get("class_check") == "yes":
            pre.append(_class_clause(head, p))
        blockers = [b for b in params.get("blockers", "").split("|") if b]
        pre.extend(neg("is_done", b) for b in blockers)
        return cnf(*pre), cnf(lit("is_done", att), lit("part_state", p, _FASTEN_TAG[head]))
    if head in ("Fasten.UnscrewPrim", "Fasten.ExtractPrim"):
        return cnf(lit("is_done", att), lit("is_grasped", p)), cnf(neg("is_done", att))
    if head == "Release":
        return (), cnf(lit("agent_state", ag, "free"))
    if head == "Verify.Post":
        return (), cnf(lit("is_done", att))
    raise KeyError(f"unknown primitive head {head!r}")


def make_primitive(head: str, params: Union[Mapping[str, str], Iterable[tuple[str, str]]] = (), **kw) -> SkillPrimitive:
    """Ground a catalog primitive; conditions follow from head and params."""
    if head not in PRIMITIVE_HEADS:
        raise KeyError(f"{head!r} is not in the skill catalog")
    items = dict(params)
    items.update({k: v for k, v in kw.items() if v is not None})
    items = {k: v for k, v in items.items() if v is not None and v != ""}
    if items.get("variant") == "nominal":
        del items["variant"]
    pre, post = conditions(head, items)
    return SkillPrimitive(head, tuple(items.items()), pre, post)


def primitive_from_signature(text: str) -> SkillPrimitive:
    head, params = parse_signature(text)
    return make_primitive(head, params)


# -- methods ----------------------------------------------------------------


@dataclass(frozen=True)
class MethodBranch:
    name: str
    guard: CNF
    body: tuple[Union[SkillPrimitive, "SkillMethod"], ...]


@dataclass(frozen=True)
class SkillMethod:
    """A method: guarded branches tried in order, plus a required post."""

    head: str
    branches: tuple[MethodBranch, ...]
    post: CNF = ()


def evaluate(state: WorldState, formula: CNF) -> bool:
    """Truth of a CNF formula in ``state``."""
    return all(any(query_predicate(state, l) for l in clause) for clause in formula)


def first_false(state: WorldState, formula: CNF) -> Literal | None:
    for clause in formula:
        if not any(query_predicate(state, l) for l in clause):
            return clause[0]
    return None


def choose_branch(method: SkillMethod, state: WorldState, attachment: str | None = None) -> MethodBranch:
    for branch in method.branches:
        if evaluate(state, branch.guard):
            return branch
    raise NoApplicableBranch(method.head, attachment)


def fasten_method(part: str, agent: str, attachment: str | None = None, blockers: Iterable[str] = (),
                  variant: str = "nominal") -> SkillMethod:
    branches = []
    for head, preds in FASTEN_GUARDS:
        prim = make_primitive(head, part=part, agent=agent, attachment=attachment, variant=variant,
                              blockers="|".join(sorted(blockers)), class_check="yes")
        branches.append(MethodBranch(head, cnf(tuple(lit(n, part) for n in preds)), (prim,)))
    return SkillMethod("fasten", tuple(branches))


def decompose_fasten(part: str, agent: str, state: WorldState, attachment: str | None = None,
                     blockers: Iterable[str] = ()) -> SkillPrimitive:
    """Pick the fasten primitive for ``part`` from its class predicates."""
    if part not in state.parts:
        raise PreconditionViolation(f"unknown part {part!r}")
    branch = choose_branch(fasten_method(part, agent, attachment, blockers), state, attachment)
    return branch.body[0]


def assign_agent(spec: MissionSpec, attachment: str) -> str:
    """Parts approached from the front half (y < 0) go to the right arm."""
    att = spec.attachments[attachment]
    _, y = spec.station_pose(att.moved)
    return "right" if y < 0 else "left"


def move_method(part: str, agent: str, target: str, variant: str = "nominal") -> SkillMethod:
    servo = make_primitive("Move.Servo", part=part, agent=agent, target=target, variant=variant)
    transport = make_primitive("Move.Transport", part=part, agent=agent, target=target, variant=variant)
    return SkillMethod("move", (
        MethodBranch("servo", cnf(lit("part_state", target, "uncertain")), (servo,)),
        MethodBranch("transport", (), (transport,)),
    ))


def _fasten_for(spec: MissionSpec, attachment: str, agent: str, blockers, variant: str):
    att = spec.attachments[attachment]
    head = _FASTEN_HEAD[att.kind]
    category = spec.part_class(att.moved).category
    dispatched = {Category.SCREW_LIKE: "Fasten.ScrewPrim", Category.INSERT_LIKE: "Fasten.InsertPrim",
                  Category.ELASTIC_LIKE: "Fasten.MountPrim"}.get(category)
    # The class guard is kept as a precondition only when the class dispatch
    # chose this kind; explicit or passive kinds carry no class expectation.
    return make_primitive(head, part=att.moved, agent=agent, attachment=attachment, variant=variant,
                          blockers="|".join(sorted(blockers)),
                          class_check="yes" if dispatched == head else None)


def blockers_for(spec: MissionSpec, attachment: str, ignore: Iterable[str] = ()) -> list[str]:
    """Attachments that must not be done when ``attachment`` is fastened."""
    ignore = set(ignore)
    out = set()
    for p_x in spec.blocked_by.get(attachment, ()):
        for b in spec.attachments_of(p_x):
            if b != attachment and b not in ignore:
                out.add(b)
    return sorted(out)


def achieve_method(spec: MissionSpec, attachment: str, agent: str, state: WorldState,
                   ignore_blockers: Iterable[str] = ()) -> SkillMethod:
    """Top-level method for one attachment, read as achieve(attachment)."""
    att = spec.attachments[attachment]
    p, target = att.moved, att.bases[0]
    blockers = blockers_for(spec, attachment, ignore_blockers)
    holder = next((name for name, a in state.agents.items() if a.held == p), agent)

    def mk(head, **kw):
        return make_primitive(head, part=p, **kw)

    from_station = (
        mk("Detect.Object", agent=agent),
        mk("PickUp.ComputeGrasp", agent=agent, config=_default_config()),
        mk("PickUp.Grasp", agent=agent),
        move_method(p, agent, target),
        mk("Align", agent=agent, target=target),
        _fasten_for(spec, attachment, agent, blockers, "nominal"),
        mk("Release", agent=agent),
        mk("Verify.Post", agent=agent, attachment=attachment),
    )
    from_hand = (
        move_method(p, holder, target),
        mk("Align", agent=holder, target=target),
        _fasten_for(spec, attachment, holder, blockers, "nominal"),
        mk("Release", agent=holder),
        mk("Verify.Post", agent=holder, attachment=attachment),
    )
    continuation = (
        mk("Detect.Object", agent=agent, variant="continuation"),
        mk("Align", agent=agent, target=target, variant="continuation"),
        _fasten_for(spec, attachment, agent, blockers, "continuation"),
        mk("Verify.Post", agent=agent, attachment=attachment),
    )
    return SkillMethod(f"achieve({attachment})", (
        MethodBranch("from_station", cnf(lit("at_station", p)), from_station),
        MethodBranch("from_hand", cnf(lit("in_hand", p)), from_hand),
        MethodBranch("continuation", cnf(lit("is_placed", p)), continuation),
    ), post=cnf(lit("is_done", attachment)))


def _default_config() -> str:
    return CONFIGURATIONS[0]


# -- task plans -------------------------------------------------------------


@dataclass(frozen=True)
class TaskStep:
    primitive: SkillPrimitive
    agent: str
    attachment: str
    step: int = 0


@dataclass(frozen=True)
class TaskPlan:
    steps: tuple[TaskStep, ...] = ()

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def primitives(self) -> list[SkillPrimitive]:
        return [s.primitive for s in self.steps]

    def heads(self) -> list[str]:
        return [s.primitive.head for s in self.steps]

    def to_text(self) -> str:
        return "".join(f"{i} {s.agent} {s.primitive.signature()} src={s.attachment} step={s.step}\n"
                       for i, s in enumerate(self.steps))


def parse_task_plan(text: str) -> TaskPlan:
    steps = []
    for number, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        words = line.split()
        try:
            idx, agent, signature, src = words[:4]
            extra = dict(w.split("=", 1) for w in words[4:])
            if int(idx) != len(steps) or not src.startswith("src="):
                raise ValueError
            steps.append(TaskStep(primitive_from_signature(signature), agent, src[4:], int(extra.get("step", 0))))
        except (ValueError, KeyError) as exc:
            raise ValueError(f"line {number}: bad task-plan line {line!r}") from exc
    return TaskPlan(tuple(steps))


def _simulate(state: WorldState, prim: SkillPrimitive, attachment: str | None) -> WorldState:
    missing = first_false(state, prim.pre)
    if missing is not None:
        raise UnsatisfiablePrecondition(prim, missing, attachment)
    if skill_of(prim.head) == "Verify":
        missing = first_false(state, prim.post)
        if missing is not None:
            raise UnsatisfiablePrecondition(prim, missing, attachment)
        return state
    state, outcome = run_to_completion(state, prim)
    if outcome.status is not OutcomeStatus.DONE:
        raise UnsatisfiablePrecondition(prim, None, attachment)
    return state


def _expand(items, state: WorldState, attachment: str) -> tuple[list[SkillPrimitive], WorldState]:
    """Resolve nested methods left to right against the simulated state."""
    out = []
    for item in items:
        if isinstance(item, SkillMethod):
            branch = choose_branch(item, state, attachment)
            prims, state = _expand(branch.body, state, attachment)
            out.extend(prims)
        else:
            state = _simulate(state, item, attachment)
            out.append(item)
    return out, state


def plan_tasks(spec: MissionSpec, mission_plan: MissionPlan, initial: WorldState | None = None,
               achieved: Iterable[str] = ()) -> TaskPlan:
    """Decompose a mission plan into grounded, agent-assigned primitives."""
    state = initial if initial is not None else initial_state(spec)
    ignore = set(achieved) | set(state.done_attachments())
    steps: list[TaskStep] = []
    for index, step in enumerate(mission_plan.steps):
        members = [a for a in step.members if a not in ignore]
        if not members:
            continue
        if len(members) == 1:
            a = members[0]
            method = achieve_method(spec, a, assign_agent(spec, a), state, ignore)
            branch = choose_branch(method, state, a)
            prims, state = _expand(branch.body, state, a)
            steps.extend(TaskStep(p, p.agent, a, index) for p in prims)
        else:
            state = _plan_complex(spec, members, index, state, ignore, steps)
    return TaskPlan(tuple(steps))


def _plan_complex(spec, members, index, state, ignore, steps) -> WorldState:
    if len(members) > 2:
        raise NoApplicableBranch("complex attachment with more than two members", members[0])
    first = assign_agent(spec, members[0])
    agents = [first, "left" if first == "right" else "right"]
    bodies = []
    for a, ag in zip(members, agents):
        method = achieve_method(spec, a, ag, state, ignore)
        branch = method.branches[0]
        if not evaluate(state, branch.guard):
            raise NoApplicableBranch(method.head, a)
        body = branch.body
        # pick-up | move, align, fasten | release | verify
        bodies.append((a, [body[0:3], body[3:6], body[6:7], body[7:8]]))
    for phase in range(4):
        for a, phases in bodies:
            prims, state = _expand(phases[phase], state, a)
            steps.extend(TaskStep(p, p.agent, a, index) for p in prims)
    return state


def execute_task_plan(state: WorldState, plan: TaskPlan, schedule=None) -> WorldState:
    """Run a plan primitive by primitive, without a behavior tree.

    A primitive whose postcondition already holds is a no-op.
    """
    from .sim_world import FaultSchedule

    schedule = schedule or FaultSchedule()
    for step in plan:
        prim = step.primitive
        if skill_of(prim.head) == "Verify":
            if not evaluate(state, prim.post):
                raise UnsatisfiablePrecondition(prim, first_false(state, prim.post), step.attachment)
            continue
        if prim.post and evaluate(state, prim.post):
            continue
        state, outcome = run_to_completion(state, prim, schedule)
        if outcome.status is not OutcomeStatus.DONE:
            raise UnsatisfiablePrecondition(prim, None, step.attachment)
    return state


# -- decisions --------------------------------------------------------------


@dataclass(frozen=True)
class DecisionPoint:
    """Plan entries ``[start, stop)`` replaced by a run-time decision."""

    start: int
    stop: int
    method: SkillMethod


def configuration_decisions(plan: TaskPlan) -> list[DecisionPoint]:
    """One decision per nominal pick-up: which part configuration to grasp for."""
    out = []
    steps = plan.steps
    for i in range(len(steps) - 1):
        a, b = steps[i].primitive, steps[i + 1].primitive
        if (a.head == "PickUp.ComputeGrasp" and b.head == "PickUp.Grasp" and a.part == b.part
                and a.agent == b.agent and b.param("variant") is None):
            p, ag = a.part, a.agent
            branches = tuple(
                MethodBranch(f"config_{c}", cnf(lit("part_state", p, f"config_{c}")),
                             (make_primitive("PickUp.ComputeGrasp", part=p, agent=ag, config=c),
                              make_primitive("PickUp.Grasp", part=p, agent=ag)))
                for c in CONFIGURATIONS)
            out.append(DecisionPoint(i, i + 2, SkillMethod(f"pickup_config({p})", branches)))
    return out


# -- repairs ----------------------------------------------------------------


def reverse_plan(attachment: str, state: WorldState) -> TaskPlan:
    """Undo a done, reversible attachment and return its part to the station."""
    spec = state.spec
    att = spec.attachments.get(attachment)
    if att is None:
        raise PreconditionViolation(f"unknown attachment {attachment!r}")
    if not att.reversible:
        raise Irreversible(attachment)
    if not evaluate(state, cnf(lit("is_done", attachment))):
        raise PreconditionViolation(f"attachment {attachment} is not done")
    p = att.moved
    ag = assign_agent(spec, attachment)
    others = [a for a in state.parts[p].location.attachments if a != attachment]
    prims = [
        make_primitive("Detect.Object", part=p, agent=ag, variant="reverse"),
        make_primitive("PickUp.ComputeGrasp", part=p, agent=ag, config="auto"),
        make_primitive("PickUp.Grasp", part=p, agent=ag, variant="reverse"),
        make_primitive(_UNFASTEN_HEAD[att.kind], part=p, agent=ag, attachment=attachment),
    ]
    if not others:
        prims.append(make_primitive("Move.Transport", part=p, agent=ag, target=p, variant="reverse"))
    prims.append(make_primitive("Release", part=p, agent=ag))
    return TaskPlan(tuple(TaskStep(prim, ag, attachment, 0) for prim in prims))


REPAIR_TABLE = {
    "is_aligned": ("Detect", "Align"),
    "in_hand": ("Detect", "PickUp"),
    "pose_ok": ("Release", "Detect", "PickUp"),
    "at_station": ("Detect",),
}


def _holder(state: WorldState, part: str) -> str | None:
    return next((name for name, a in state.agents.items() if a.held == part), None)


def repairable(literal: Literal | None) -> bool:
    """Whether :func:`repair_precondition` knows a sub-plan for ``literal``."""
    if literal is None or literal.negated:
        return False
    return literal.predicate in REPAIR_TABLE or (literal.predicate == "agent_state" and literal.args[1:] == ("free",))


def _free_hand(agent: str, state: WorldState, attachment: str) -> TaskPlan:
    # Put the held part down and ground its grasp again, so a Grasp waiting
    # on a free hand can run next.
    if agent not in state.agents:
        raise NoRepairKnown(lit("agent_state", agent, "free"))
    p = state.agents[agent].held
    if p is None:
        raise NoRepairKnown(lit("agent_state", agent, "free"))
    prims = (make_primitive("Release", part=p, agent=agent),
             make_primitive("Detect.Object", part=p, agent=agent, variant="repair"),
             make_primitive("PickUp.ComputeGrasp", part=p, agent=agent, config="auto"))
    return TaskPlan(tuple(TaskStep(prim, agent, attachment, 0) for prim in prims))


def repair_precondition(failed: Literal, state: WorldState, agent: str | None = None,
                        attachment: str = "") -> TaskPlan:
    """Sub-plan that re-establishes a failed precondition literal."""
    if repairable(failed) and failed.predicate == "agent_state":
        return _free_hand(failed.args[0], state, attachment)
    if failed.negated or failed.predicate not in REPAIR_TABLE or not failed.args:
        raise NoRepairKnown(failed)
    p = failed.args[0]
    if p not in state.parts:
        raise NoRepairKnown(failed)
    if failed.predicate == "in_hand" and len(failed.args) == 2:
        agent = failed.args[1]
    ag = agent or _holder(state, p)
    if ag is None:
        owning = [a for a in state.spec.attachments.values() if a.moved == p]
        ag = assign_agent(state.spec, owning[0].id) if owning else "left"
    prims = []
    for skill in REPAIR_TABLE[failed.predicate]:
        if skill == "Detect":
            prims.append(make_primitive("Detect.Object", part=p, agent=ag, variant="repair"))
        elif skill == "PickUp":
            prims.append(make_primitive("PickUp.ComputeGrasp", part=p, agent=ag, config="auto"))
            prims.append(make_primitive("PickUp.Grasp", part=p, agent=ag))
        elif skill == "Release":
            prims.append(make_primitive("Release", part=p, agent=ag))
        elif skill == "Align":
            at = sorted(t[3:] for t in state.agents[ag].tags if t.startswith("at_"))
            target = at[0] if at else p
            prims.append(make_primitive("Align", part=p, agent=ag, target=target))
    return TaskPlan(tuple(TaskStep(prim, ag, attachment, 0) for prim in prims))
