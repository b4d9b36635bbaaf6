"""Attachment ordering from blocked-by and stability-dependence relations."""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

from .mission_spec import MissionSpec, Severity, structural_issues


class MissionPlanningError(Exception):
    pass


class InvalidMission(MissionPlanningError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(issue.message for issue in self.issues))


class CycleDetected(MissionPlanningError):
    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("precedence cycle: " + " -> ".join(self.cycle + self.cycle[:1]))


class Unsatisfiable(CycleDetected):
    """No ordering of the remaining attachments satisfies the constraints."""


@dataclass(frozen=True, order=True)
class PlanStep:
    """One mission step: a single attachment or a stability cluster.

    Members are kept sorted, so ``members[0]`` doubles as the tie-break key.
    """

    members: tuple[str, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("empty plan step")
        if tuple(sorted(self.members)) != self.members or len(set(self.members)) != len(self.members):
            object.__setattr__(self, "members", tuple(sorted(set(self.members))))

    @property
    def is_complex(self) -> bool:
        return len(self.members) > 1

    @property
    def key(self) -> str:
        return self.members[0]

    def __str__(self) -> str:
        if self.is_complex:
            return "complex{" + ",".join(self.members) + "}"
        return self.members[0]


@dataclass(frozen=True)
class MissionPlan:
    steps: tuple[PlanStep, ...] = ()

    def attachments(self) -> list[str]:
        return [a for step in self.steps for a in step.members]

    def to_text(self) -> str:
        return "".join(f"{step}\n" for step in self.steps)


_COMPLEX_RE = re.compile(r"complex\{([^{}]*)\}")


def parse_mission_plan(text: str) -> MissionPlan:
    steps = []
    for number, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        m = _COMPLEX_RE.fullmatch(line)
        if m:
            members = tuple(x.strip() for x in m.group(1).split(","))
            if len(members) < 2 or not all(members):
                raise ValueError(f"line {number}: complex step needs two or more members")
            steps.append(PlanStep(members))
        elif re.fullmatch(r"[A-Za-z0-9_][A-Za-z0-9_.\-]*", line):
            steps.append(PlanStep((line,)))
        else:
            raise ValueError(f"line {number}: bad plan step {line!r}")
    return MissionPlan(tuple(steps))


@dataclass(frozen=True)
class PrecedenceGraph:
    nodes: frozenset[PlanStep]
    edges: frozenset[tuple[PlanStep, PlanStep]]

    def successors(self, node: PlanStep) -> list[PlanStep]:
        return sorted(b for a, b in self.edges if a == node)

    def edge_keys(self) -> set[tuple[str, str]]:
        return {(str(a), str(b)) for a, b in self.edges}


def stability_clusters(attachment_ids: Iterable[str], pairs: Iterable[tuple[str, str]]) -> list[PlanStep]:
    """Connected components of the stability pair graph, as plan steps."""
    ids = sorted(set(attachment_ids))
    parent = {a: a for a in ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        if a in parent and b in parent:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, list[str]] = {}
    for a in ids:
        groups.setdefault(find(a), []).append(a)
    return sorted(PlanStep(tuple(g)) for g in groups.values())


def _must_precede(spec: MissionSpec, blocked_by: Mapping[str, Iterable[str]],
                  remaining: set[str]) -> set[tuple[str, str]]:
    out = set()
    for a_n in sorted(blocked_by):
        if a_n not in remaining:
            continue
        for p_x in sorted(blocked_by[a_n]):
            for b in spec.attachments_of(p_x):
                if b != a_n and b in remaining:
                    out.add((a_n, b))
    return out


def _graph(spec: MissionSpec, remaining: set[str], blocked_by: Mapping[str, Iterable[str]],
           dropped: Iterable[tuple[str, str]] = ()) -> PrecedenceGraph:
    steps = stability_clusters(remaining, spec.stability_dep)
    step_of = {a: step for step in steps for a in step.members}
    dropped = set(dropped)
    edges = set()
    for a, b in _must_precede(spec, blocked_by, remaining):
        if (a, b) in dropped:
            continue
        sa, sb = step_of[a], step_of[b]
        if sa != sb:
            edges.add((sa, sb))
    return PrecedenceGraph(frozenset(steps), frozenset(edges))


def find_cycle(graph: PrecedenceGraph) -> list[str] | None:
    """Return one cycle (as step labels) or ``None`` when acyclic."""
    color: dict[PlanStep, int] = {}
    stack: list[PlanStep] = []

    def visit(node):
        color[node] = 1
        stack.append(node)
        for nxt in graph.successors(node):
            state = color.get(nxt, 0)
            if state == 1:
                return [str(s) for s in stack[stack.index(nxt):]]
            if state == 0:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        color[node] = 2
        return None

    for node in sorted(graph.nodes):
        if color.get(node, 0) == 0:
            found = visit(node)
            if found:
                return found
    return None


def build_precedence_graph(spec: MissionSpec) -> PrecedenceGraph:
    """Must-precede graph over plan steps; raises :class:`CycleDetected`."""
    graph = _graph(spec, set(spec.attachments), spec.blocked_by)
    cycle = find_cycle(graph)
    if cycle:
        raise CycleDetected(cycle)
    return graph


def topological_order(graph: PrecedenceGraph) -> list[PlanStep]:
    # Kahn's algorithm; the heap yields the smallest ready step key first.
    indegree = {node: 0 for node in graph.nodes}
    for _, b in graph.edges:
        indegree[b] += 1
    ready = [node for node, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for nxt in graph.successors(node):
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(ready, nxt)
    if len(order) != len(graph.nodes):
        raise CycleDetected(find_cycle(graph) or [])
    return order


def _check(spec: MissionSpec) -> None:
    errors = [i for i in structural_issues(spec) if i.severity is Severity.ERROR]
    if errors:
        raise InvalidMission(errors)


def plan_mission(spec: MissionSpec) -> MissionPlan:
    """Least-commitment total order of the mission's attachments."""
    _check(spec)
    return MissionPlan(tuple(topological_order(build_precedence_graph(spec))))


def replan_mission(spec: MissionSpec, achieved: Iterable[str] = (),
                   forbidden_edges: Iterable[tuple[str, str]] = (),
                   extra_blocked: Mapping[str, Iterable[str]] | None = None) -> MissionPlan:
    """Order the attachments not yet achieved.

    Edges touching achieved attachments vanish with them, ``forbidden_edges``
    are dropped, and ``extra_blocked`` adds blocked-by facts discovered at run
    time.
    """
    _check(spec)
    achieved = set(achieved)
    unknown = achieved - set(spec.attachments)
    if unknown:
        raise ValueError(f"unknown attachments: {sorted(unknown)}")
    blocked: dict[str, set[str]] = {a: set(ps) for a, ps in spec.blocked_by.items()}
    for a, ps in (extra_blocked or {}).items():
        if a not in spec.attachments:
            raise ValueError(f"unknown attachment {a!r}")
        blocked.setdefault(a, set()).update(ps)
    remaining = set(spec.attachments) - achieved
    graph = _graph(spec, remaining, blocked, forbidden_edges)
    cycle = find_cycle(graph)
    if cycle:
        raise Unsatisfiable(cycle)
    return MissionPlan(tuple(topological_order(graph)))


def part_label(part_id: str) -> str:
    """Short display name: ``pA`` -> ``A``; other ids are left alone."""
    if re.fullmatch(r"p[A-Z0-9][A-Za-z0-9_]*", part_id):
        return part_id[1:]
    return part_id


def part_state_progression(spec: MissionSpec, plan: MissionPlan, achieved: Iterable[str] = ()) -> list[str]:
    """Subassembly states visited while executing ``plan``.

    Consecutive steps that move the same part form one event (a screw that
    passes through several bases). Before an event whose base parts are not
    yet assembled, the bases are staged together, which yields an extra state.
    """
    current = {p for a in achieved for p in spec.attachments[a].parts}
    states = []

    def emit():
        states.append("+".join(sorted(part_label(p) for p in current)))

    if current:
        emit()
    events: list[list[str]] = []
    last_moved = None
    for step in plan.steps:
        if step.is_complex:
            events.append(list(step.members))
            last_moved = None
            continue
        att = spec.attachments[step.key]
        if events and att.moved == last_moved:
            events[-1].append(att.id)
        else:
            events.append([att.id])
        last_moved = att.moved
    for event in events:
        atts = [spec.attachments[a] for a in event]
        bases = {p for att in atts for p in att.bases}
        if not bases <= current:
            current |= bases
            emit()
        current |= {p for att in atts for p in att.parts}
        emit()
    return states
