import pytest

from asmforge import bundled_missions, parse_mission, plan_mission, plan_tasks
from asmforge.bt_compiler import (
    PLAN_LIBRARY, Before, EmptyDecision, UngroundedPrimitive, WrapRetry, backchain_decision, compile_plan,
    compile_primitive, prepend_subtree, repair_subtree, stitch_repair,
)
from asmforge.bt_core import (
    Action, Condition, Fallback, NodeNotFound, RetryUntilSuccessful, Sequence, Status, assign_ids, find,
    serialize_tree, tick, walk,
)
from asmforge.htn_domain import (
    MethodBranch, SkillMethod, TaskPlan, TaskStep, configuration_decisions, execute_task_plan, fasten_method, make_primitive,
)
from asmforge.mission_planner import MissionPlan, PlanStep
from asmforge.sim_world import SimWorld, initial_state, query_predicate, run_to_completion
from asmforge.symbols import PRIMITIVE_HEADS, SkillPrimitive, cnf, lit


def run_tree(tree, world, limit=500):
    for _ in range(limit):
        result = tick(tree, world)
        if result.status is not Status.RUNNING:
            return result
    raise AssertionError("tree did not terminate")


def actions(tree):
    return [n for n in walk(tree) if isinstance(n, Action)]


def test_ppa_shape():
    grasp = make_primitive("PickUp.Grasp", part="pC", agent="left", config="auto")
    unit = compile_primitive(grasp)
    assert isinstance(unit, Fallback)
    post, body = unit.nodes
    assert isinstance(post, Condition) and str(post.literal) == "in_hand(pC,left)"
    assert isinstance(body, Sequence) and isinstance(body.nodes[-1], Action)
    assert [str(n.literal) for n in body.nodes[:-1]] == ["part_state(pC,grasp_planned)", "agent_state(left,free)"]


def test_empty_pre_gives_bare_action_body():
    prim = SkillPrimitive("Detect.Object", (("part", "pA"),), pre=(), post=cnf(lit("is_detected", "pA")))
    unit = compile_primitive(prim)
    body = unit.nodes[1]
    assert isinstance(body, Sequence) and len(body.nodes) == 1 and isinstance(body.nodes[0], Action)


def test_screw_pre_has_one_condition_per_clause():
    screw = make_primitive("Fasten.ScrewPrim", part="pB", agent="right", attachment="a1")
    body = compile_primitive(screw).nodes[1]
    pre = {str(n.literal) for n in body.nodes if isinstance(n, Condition)}
    assert {"in_hand(pB,right)", "is_aligned(pB)"} <= pre


def test_disjunctive_clause_becomes_fallback():
    screw = make_primitive("Fasten.ScrewPrim", part="pB", agent="right", attachment="a1", class_check="yes")
    body = compile_primitive(screw).nodes[1]
    disjunctions = [n for n in body.nodes if isinstance(n, Fallback)]
    assert disjunctions
    assert all(isinstance(c, Condition) for c in disjunctions[0].nodes)
    assert len(disjunctions[0].nodes) == 3


def test_ungrounded_rejected():
    with pytest.raises(UngroundedPrimitive):
        compile_primitive(SkillPrimitive("PickUp.Grasp", (("part", "?p"),)))


def test_plan_library_covers_catalog():
    assert set(PLAN_LIBRARY) == set(PRIMITIVE_HEADS)


def test_fasten_backchains_to_three_guarded_sequences():
    tree = backchain_decision(fasten_method("pB", "right", "a1"))
    assert isinstance(tree, Fallback)
    assert [n.meta["branch"] for n in tree.nodes] == ["Fasten.ScrewPrim", "Fasten.InsertPrim", "Fasten.MountPrim"]
    for arm in tree.nodes:
        assert isinstance(arm, Sequence)
        assert arm.nodes[0].meta["role"] == "guard"


def test_single_branch_collapses():
    prim = make_primitive("Align", part="pB", agent="right", attachment="a1")
    method = SkillMethod("only", (MethodBranch("b", cnf(lit("is_screw", "pB")), (prim,)),))
    tree = backchain_decision(method)
    assert isinstance(tree, Sequence)
    assert isinstance(tree.nodes[0], Condition)


def test_empty_decision():
    with pytest.raises(EmptyDecision):
        backchain_decision(SkillMethod("nothing", ()))
    with pytest.raises(EmptyDecision):
        backchain_decision(SkillMethod("hollow", (MethodBranch("b", (), ()),)))


@pytest.mark.parametrize("config", ["base-up", "base-down"])
def test_configuration_decision_runs_one_branch(screw_tiles, config):
    plan = plan_tasks(screw_tiles, plan_mission(screw_tiles))
    decision = configuration_decisions(plan)[0]
    state = initial_state(screw_tiles, configurations={decision.method.branches[0].body[0].part: config})
    # the guards become ground-evaluable once the preceding steps have run
    for step in plan.steps[:decision.start]:
        state, _ = run_to_completion(state, step.primitive)
    truth = [all(query_predicate(state, c[0]) for c in b.guard) for b in decision.method.branches]
    assert truth.count(True) == 1
    world = SimWorld(state)
    before = world.action_count
    tree = assign_ids(backchain_decision(decision))
    assert run_tree(tree, world).status is Status.SUCCESS
    ran = world.events[-(world.action_count - before):]
    assert len({e.split("config=")[1].split(",")[0] for e in ran if "ComputeGrasp" in e}) == 1


def test_empty_plan_is_constant_success():
    tree = compile_plan(TaskPlan())
    world = SimWorld(initial_state(parse_mission("parts:\n  p: plain-tile\n")))
    assert tick(tree, world).status is Status.SUCCESS
    assert world.action_count == 0


@pytest.mark.parametrize("name", bundled_missions())
@pytest.mark.parametrize("preenum", [False, True])
def test_compiled_tree_matches_direct_execution(name, preenum, fixture_specs):
    spec = fixture_specs[name]
    plan = plan_tasks(spec, plan_mission(spec))
    decisions = configuration_decisions(plan) if preenum else ()
    tree = compile_plan(plan, decisions)
    world = SimWorld(initial_state(spec))
    assert run_tree(tree, world, 5000).status is Status.SUCCESS
    assert world.state == execute_task_plan(initial_state(spec), plan)


def test_nodes_carry_attachment_tags(screw_tiles):
    tree = compile_plan(plan_tasks(screw_tiles, plan_mission(screw_tiles)))
    assert isinstance(tree, Sequence)
    for node in walk(tree):
        if node is not tree:
            assert "att" in node.meta, node
    for action in actions(tree):
        assert action.meta["head"] == action.primitive.head


def test_a1_only_plan(screw_tiles):
    only = MissionPlan((PlanStep(("a1",)),))
    plan = plan_tasks(screw_tiles, only)
    world = SimWorld(initial_state(screw_tiles))
    assert run_tree(compile_plan(plan), world).status is Status.SUCCESS
    assert world.state == execute_task_plan(initial_state(screw_tiles), plan)
    assert query_predicate(world.state, lit("is_done", "a1"))


def _pickup_segment(tree):
    return next(n for n in walk(tree) if n.meta.get("role") == "segment" and n.meta.get("skill") == "PickUp")


def test_wrap_retry_keeps_other_ids(screw_tiles):
    tree = compile_plan(plan_tasks(screw_tiles, plan_mission(screw_tiles)))
    seg = _pickup_segment(tree)
    out = stitch_repair(tree, seg.node_id, None, WrapRetry(3))
    wrapper = next(n for n in walk(out) if isinstance(n, RetryUntilSuccessful))
    assert wrapper.max_attempts == 3 and wrapper.child.same_as(seg)
    before = {n.node_id for n in walk(tree)}
    after = {n.node_id for n in walk(out)}
    assert after - before == {wrapper.node_id} and before <= after
    # the input tree is untouched
    assert not any(isinstance(n, RetryUntilSuccessful) for n in walk(tree))
    # wrapping twice is a no-op
    again = stitch_repair(out, wrapper.node_id, None, WrapRetry(3))
    assert serialize_tree(again) == serialize_tree(out)


def test_before_inserts_repair_as_predecessor(screw_tiles):
    plan = plan_tasks(screw_tiles, plan_mission(screw_tiles))
    tree = compile_plan(plan)
    screw = next(a for a in actions(tree) if a.primitive.head == "Fasten.ScrewPrim")
    align = next(a.primitive for a in actions(tree) if a.primitive.head == "Align")
    repair = compile_primitive(align, {"tag": "repair"})
    out = stitch_repair(tree, screw.node_id, repair, Before)
    body = next(n for n in walk(out) if any(c.node_id == screw.node_id for c in n.children))
    idx = [c.node_id for c in body.children].index(screw.node_id)
    assert body.children[idx - 1].meta["tag"] == "repair"
    assert find(out, screw.node_id).same_as(screw)


def test_before_at_non_sequence_wraps(screw_tiles):
    leaf = assign_ids(Condition(lit("is_done", "a0")))
    out = stitch_repair(leaf, "n0", Condition(lit("is_done", "a1")), Before)
    assert isinstance(out, Sequence) and out.nodes[1].node_id == "n0"


def test_stitch_unknown_id(screw_tiles):
    tree = compile_plan(plan_tasks(screw_tiles, plan_mission(screw_tiles)))
    with pytest.raises(NodeNotFound):
        stitch_repair(tree, "n9999", None, WrapRetry(3))


def test_repair_subtree_and_prepend(screw_tiles):
    rel = make_primitive("Release", part="pB", agent="right")
    sub = repair_subtree(TaskPlan((TaskStep(rel, "right", "a1"),)), lit("agent_state", "right", "free"))
    assert isinstance(sub, Fallback) and isinstance(sub.nodes[0], Condition)
    with pytest.raises(EmptyDecision):
        repair_subtree(TaskPlan(), lit("is_done", "a0"))
    tree = compile_plan(plan_tasks(screw_tiles, plan_mission(screw_tiles)))
    out = prepend_subtree(tree, sub)
    assert out.nodes[1].same_as(tree)
