"""Task plans to behavior trees: PPA units, backchained decisions, repairs."""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, Union

from .bt_core import (
    Action, Condition, Fallback, ForceSuccess, Node, RetryUntilSuccessful, Sequence,
    _id_number, assign_ids, find, parent_of, walk,
)
from .htn_domain import DecisionPoint, SkillMethod, TaskPlan, TaskStep, primitive_from_signature
from .symbols import CNF, PRIMITIVE_HEADS, TRUE, Clause, Literal, SkillPrimitive, cnf, neg, skill_of


class CompileError(ValueError):
    pass


class UngroundedPrimitive(CompileError):
    pass


class EmptyDecision(CompileError):
    pass


def clause_node(clause: Clause, meta: dict | None = None) -> Node:
    """One Condition per literal; a disjunction becomes a Fallback of them."""
    meta = meta or {}
    if len(clause) == 1:
        return Condition(clause[0], meta=dict(meta))
    return Fallback([Condition(l, meta=dict(meta)) for l in clause], meta=dict(meta))


def _conjunction(formula: CNF, meta: dict) -> Node:
    if len(formula) == 1:
        return clause_node(formula[0], meta)
    return Sequence([clause_node(c, meta) for c in formula], meta=dict(meta))


def compile_primitive(pa: SkillPrimitive, meta: dict | None = None) -> Node:
    """Fallback[post, Sequence[pre..., Action]]; Verify compiles to its checks."""
    if not pa.grounded:
        raise UngroundedPrimitive(f"{pa} has free parameters")
    base = {"head": pa.head, **(meta or {})}
    if skill_of(pa.head) == "Verify":
        checks = [clause_node(c, {**base, "role": "verify"}) for c in pa.post] or [Condition(TRUE)]
        return Sequence(checks, meta={**base, "role": "verify"})
    action = Action(pa, meta={**base, "role": "action"})
    body = Sequence([clause_node(c, {**base, "role": "pre"}) for c in pa.pre] + [action],
                    meta={**base, "role": "body"})
    kids = [_conjunction(pa.post, {**base, "role": "post"})] if pa.post else []
    return Fallback(kids + [body], meta={**base, "role": "unit"})


PLAN_LIBRARY = {head: compile_primitive for head in PRIMITIVE_HEADS}


def backchain_decision(decision: Union[SkillMethod, DecisionPoint], meta: dict | None = None) -> Node:
    """Guarded branches in order: Fallback[Sequence[guard..., body...], ...]."""
    method = decision.method if isinstance(decision, DecisionPoint) else decision
    if not method.branches:
        raise EmptyDecision(method.head)
    meta = dict(meta or {})
    arms = []
    for branch in method.branches:
        guard = [clause_node(c, {**meta, "role": "guard"}) for c in branch.guard]
        body = [backchain_decision(item, meta) if isinstance(item, SkillMethod) else compile_primitive(item, meta)
                for item in branch.body]
        if not guard and not body:
            raise EmptyDecision(f"{method.head}: branch {branch.name} is empty")
        arms.append(Sequence(guard + body, meta={**meta, "role": "branch", "branch": branch.name}))
    if len(arms) == 1:
        return arms[0]
    return Fallback(arms, meta={**meta, "role": "decision"})


def _segments(steps: list[tuple[int, TaskStep]]):
    """Group PickUp pairs so the pair can be retried or replaced as one."""
    i = 0
    while i < len(steps):
        prim = steps[i][1].primitive
        nxt = steps[i + 1][1].primitive if i + 1 < len(steps) else None
        if (prim.head == "PickUp.ComputeGrasp" and nxt is not None and nxt.head == "PickUp.Grasp"
                and nxt.part == prim.part):
            yield steps[i:i + 2]
            i += 2
        else:
            yield steps[i:i + 1]
            i += 1


def step_guard(plan_steps: Iterable[TaskStep]) -> CNF:
    """A finished step: members done and their parts out of the hands."""
    out = []
    seen = set()
    for s in plan_steps:
        if s.attachment in seen:
            continue
        seen.add(s.attachment)
        out.append(Literal("is_done", (s.attachment,)))
        if s.primitive.part:
            out.append(neg("is_grasped", s.primitive.part))
    return cnf(*out)


def _unit_meta(idx: int, s: TaskStep) -> dict:
    return {"att": s.attachment, "idx": str(idx), "agent": s.agent}


def compile_plan(plan: TaskPlan, decisions: Iterable[DecisionPoint] = ()) -> Node:
    """One tree for the whole plan, one guarded subtree per mission step."""
    if not plan.steps:
        return assign_ids(ForceSuccess(child=Condition(TRUE, meta={"role": "empty"}), meta={"role": "root"}))
    by_start = {d.start: d for d in decisions}
    indexed = list(enumerate(plan.steps))
    step_nodes = []
    for step_no, group in groupby(indexed, key=lambda e: e[1].step):
        group = list(group)
        atts = sorted({s.attachment for _, s in group})
        step_meta = {"att": "+".join(atts), "step": str(step_no)}
        units = []
        for segment in _segments(group):
            first_idx, first = segment[0]
            decision = by_start.get(first_idx)
            if decision is not None and decision.stop == first_idx + len(segment):
                node = backchain_decision(decision, _unit_meta(first_idx, first))
                node.meta.update(role="segment", skill="PickUp", decision=decision.method.head.split("(")[0])
                units.append(node)
                continue
            compiled = [compile_primitive(s.primitive, _unit_meta(idx, s)) for idx, s in segment]
            if len(compiled) > 1:
                units.append(Sequence(compiled, meta={**_unit_meta(first_idx, first), "role": "segment",
                                                      "skill": skill_of(first.primitive.head)}))
            else:
                units.extend(compiled)
        body = Sequence(units, meta={**step_meta, "role": "steps"})
        guard = _conjunction(step_guard(s for _, s in group), {**step_meta, "role": "done"})
        step_nodes.append(Fallback([guard, body], meta={**step_meta, "role": "step"}))
    return assign_ids(Sequence(step_nodes, meta={"role": "root"}))


# -- stitching --------------------------------------------------------------


class Policy(enum.Enum):
    BEFORE = "Before"
    WRAP_RETRY = "WrapRetry"


@dataclass(frozen=True)
class WrapRetry:
    max_attempts: int = 3


Before = Policy.BEFORE
StitchPolicy = Union[Policy, WrapRetry]


def _replace_child(parent: Node, old: Node, new: Node) -> None:
    if hasattr(parent, "nodes"):
        parent.nodes[parent.nodes.index(old)] = new
    else:
        parent.child = new


def stitch_repair(tree: Node, at: str, repair: Node | None, policy: StitchPolicy) -> Node:
    """Return a copy of ``tree`` with ``repair`` spliced at node ``at``.

    Untouched nodes keep their ids; inserted nodes get fresh ones.
    """
    tree = copy.deepcopy(tree)
    target = find(tree, at)
    parent = parent_of(tree, at)
    start = max(_id_number(n.node_id) for n in walk(tree)) + 1
    new_nodes: list[Node] = []
    if policy is Policy.BEFORE:
        if repair is None:
            raise ValueError("Before needs a repair subtree")
        fresh = copy.deepcopy(repair)
        new_nodes.extend(walk(fresh))
        if isinstance(parent, Sequence):
            parent.nodes.insert(parent.nodes.index(target), fresh)
        else:
            wrapper = Sequence([fresh, target], meta={**target.meta, "role": "repaired"})
            new_nodes.append(wrapper)
            if parent is None:
                tree = wrapper
            else:
                _replace_child(parent, target, wrapper)
    elif isinstance(policy, WrapRetry):
        if isinstance(target, RetryUntilSuccessful):
            return tree
        wrapper = RetryUntilSuccessful(child=target, max_attempts=policy.max_attempts,
                                       meta={**target.meta, "role": "retry"})
        new_nodes.append(wrapper)
        if parent is None:
            tree = wrapper
        else:
            _replace_child(parent, target, wrapper)
    else:
        raise ValueError(f"unknown stitch policy {policy!r}")
    for node in new_nodes:
        node.node_id = None
    return assign_ids(tree, start)


def repair_subtree(plan: TaskPlan, failed: Literal, meta: dict | None = None) -> Node:
    """Forced repair: the actions run unless the failed literal already holds."""
    meta = {"role": "repair", "literal": str(failed).replace(" ", "_"), **(meta or {})}
    actions = [Action(s.primitive, meta={**meta, "head": s.primitive.head, "role": "repair_action"})
               for s in plan.steps]
    if not actions:
        raise EmptyDecision("empty repair plan")
    return Fallback([Condition(failed, meta=dict(meta)), Sequence(actions, meta=dict(meta))], meta=meta)


def guarded_plan_tree(plan: TaskPlan, guard: CNF, meta: dict) -> Node:
    """PPA units of a repair plan, skipped once ``guard`` holds."""
    units = [compile_primitive(s.primitive, {**meta, "att": s.attachment, "agent": s.agent}) for s in plan.steps]
    body = Sequence(units, meta={**meta, "role": "steps"})
    if not guard:
        return body
    return Fallback([_conjunction(guard, {**meta, "role": "done"}), body], meta={**meta, "role": "step"})


def forced_plan_tree(plan: TaskPlan, guard: CNF, meta: dict) -> Node:
    """Bare actions (no post short-circuit), skipped once ``guard`` holds."""
    actions = [Action(s.primitive, meta={**meta, "att": s.attachment, "head": s.primitive.head,
                                         "role": "repair_action"}) for s in plan.steps]
    body = Sequence(actions, meta={**meta, "role": "steps"})
    if not guard:
        return body
    return Fallback([_conjunction(guard, {**meta, "role": "done"}), body], meta={**meta, "role": "step"})


def primitive_factory(signature: str) -> SkillPrimitive:
    """Rebuild primitives with their conditions when parsing tree text."""
    return primitive_from_signature(signature)



def prepend_subtree(tree: Node, subtree: Node) -> Node:
    """New root ``Sequence[subtree, tree]``; existing ids are kept."""
    tree = copy.deepcopy(tree)
    fresh = copy.deepcopy(subtree)
    start = max(_id_number(n.node_id) for n in walk(tree)) + 1
    for node in walk(fresh):
        node.node_id = None
    root = Sequence([fresh, tree], meta={"role": "root"})
    return assign_ids(root, start)
