import re
from collections import Counter

import pytest

from asmforge import plan_mission, plan_tasks, run_mission
from asmforge.bt_compiler import compile_plan
from asmforge.bt_core import Action, Condition, FailureKind, FailureSource, Status, TickResult, tick, walk
from asmforge.contingency import (
    BUDGETS, Axis, Escalate, ExecutionContext, Level, LogFormatError, MissionReplan, NotAFailure, Order,
    PerturbAndRetry, PlannerHandles, RecoveryResult, ResetDriver, ReverseAttachment, RunNPickBest,
    StitchPreconditionRepair, apply_recovery, budget_key, category_label, classify, format_report,
    parse_contingency_log, select_recovery,
)
from asmforge.sim_world import (
    DRIVER_DOWN, GRASP_SLIP, JAMMED, NO_DETECTION, ActionOutcome, OutcomeStatus, SimWorld, initial_state,
    parse_fault_schedule,
)
from asmforge.symbols import lit


@pytest.fixture
def live(screw_tiles):
    tree = compile_plan(plan_tasks(screw_tiles, plan_mission(screw_tiles)))
    return tree, ExecutionContext(screw_tiles, tree, initial_state(screw_tiles), tick_index=7)


def action_node(tree, head):
    return next(n for n in walk(tree) if isinstance(n, Action) and n.primitive.head == head)


def action_failure(tree, head, error):
    node = action_node(tree, head)
    outcome = ActionOutcome(OutcomeStatus.ERROR, error)
    return TickResult(Status.FAILURE, FailureSource(node.node_id, FailureKind.ACTION, primitive=node.primitive,
                                                    outcome=outcome))


def condition_failure(tree, literal, role="pre"):
    node = next(n for n in walk(tree) if isinstance(n, Condition) and n.literal == literal
                and n.meta.get("role") == role)
    return TickResult(Status.FAILURE, FailureSource(node.node_id, FailureKind.CONDITION, literal=literal))


def run(screw_tiles, faults="", **world):
    return run_mission(screw_tiles, parse_fault_schedule(faults), world_state=initial_state(screw_tiles, **world))


def test_failed_grasp_is_first_order_skill(live):
    tree, ctx = live
    record = classify(action_failure(tree, "PickUp.Grasp", GRASP_SLIP), ctx)
    assert (record.level, record.order, record.axis) == (Level.SKILL, Order.FIRST, Axis.GROUNDING)
    assert record.attachment == "a1" and record.tick_index == 7
    assert isinstance(select_recovery(record, ctx), PerturbAndRetry)


def test_missing_in_hand_is_first_order_task(live):
    tree, ctx = live
    record = classify(condition_failure(tree, lit("in_hand", "pB", "left")), ctx)
    assert (record.level, record.order, record.cause) == (Level.TASK, Order.FIRST, "not_in_hand")
    assert select_recovery(record, ctx) == StitchPreconditionRepair(lit("in_hand", "pB", "left"))


def test_dowel_escalates(screw_tiles):
    report = run(screw_tiles, part_classes={"pB": "dowel-4"})
    assert report.exit_code == 4
    record = report.records[-1]
    assert (record.level, record.order, record.axis) == (Level.TASK, Order.HIGHER, Axis.ELEMENTAL)
    assert "action=Escalate(part_class_mismatch)" in report.log[-1]


def test_not_a_failure(live):
    _, ctx = live
    with pytest.raises(NotAFailure):
        classify(TickResult(Status.SUCCESS), ctx)


def test_classify_is_pure(live):
    tree, ctx = live
    result = action_failure(tree, "Detect.Object", NO_DETECTION)
    assert classify(result, ctx) == classify(result, ctx)


@pytest.mark.parametrize("error, expected", [
    (NO_DETECTION, PerturbAndRetry),
    (GRASP_SLIP, PerturbAndRetry),
    (DRIVER_DOWN, ResetDriver),
    (JAMMED, Escalate),
])
def test_action_errors_select(live, error, expected):
    tree, ctx = live
    head = "Fasten.ScrewPrim" if error == JAMMED else "PickUp.Grasp"
    record = classify(action_failure(tree, head, error), ctx)
    assert isinstance(select_recovery(record, ctx), expected)
    if record.level is Level.SKILL:
        assert record.source.kind is FailureKind.ACTION


def test_camera_perturbation_for_detection(live):
    tree, ctx = live
    action = select_recovery(classify(action_failure(tree, "Detect.Object", NO_DETECTION), ctx), ctx)
    assert action.target == "camera" and action.budget >= 1


def test_driver_dropout_is_unclassified(live):
    tree, ctx = live
    record = classify(action_failure(tree, "Move.Transport", DRIVER_DOWN), ctx)
    assert record.level is Level.UNCLASSIFIED
    assert select_recovery(record, ctx) == ResetDriver("left")


def test_sensor_noise_picks_best_of_three(screw_tiles):
    report = run(screw_tiles, "fault target=Detect.Object part=pB mode=noise:0.01,0.002,0.03")
    assert report.exit_code == 0
    assert any("action=RunNPickBest(3)" in line for line in report.log)
    assert any("pick_best:pB:2/3" in line for line in report.trace)
    assert RunNPickBest().n == 3


def test_budget_exhaustion_ladder(live):
    tree, ctx = live
    result = action_failure(tree, "PickUp.Grasp", GRASP_SLIP)
    record = classify(result, ctx)
    ctx.used[budget_key(record)] = BUDGETS["PerturbAndRetry"]
    lifted = classify(result, ctx)
    assert lifted.level is Level.TASK and lifted.escalated_from is Level.SKILL
    assert lifted.literal == lit("in_hand", "pB", "left")
    ctx.used[budget_key(lifted)] = BUDGETS["StitchPreconditionRepair"]
    top = classify(result, ctx)
    assert top.level is Level.MISSION
    assert isinstance(select_recovery(top, ctx), MissionReplan)
    ctx.used[budget_key(top)] = BUDGETS["MissionReplan"]
    assert isinstance(select_recovery(classify(result, ctx), ctx), Escalate)


def test_out_of_order_attachment_reverses(screw_tiles):
    tree = compile_plan(plan_tasks(screw_tiles, plan_mission(screw_tiles)))
    world = SimWorld(initial_state(screw_tiles, done=["a2"]))
    result = tick(tree, world)
    assert result.status is Status.FAILURE
    record = classify(result, ExecutionContext(screw_tiles, tree, world.state))
    assert (record.level, record.order, record.axis) == (Level.TASK, Order.FIRST, Axis.PROCEDURAL)
    assert select_recovery(record) == ReverseAttachment("a2")


def test_lighting_fault_resumes_after_perturbation(screw_tiles):
    report = run(screw_tiles, "fault target=Detect.Object part=pB mode=fail_n:1")
    assert report.exit_code == 0
    assert report.outcomes["Resumed"] == 1
    assert "action=PerturbAndRetry(camera,3)" in report.log[0]


def test_glue_replan_excludes_achieved(screw_tiles):
    report = run(screw_tiles, done=["a0"])
    assert report.exit_code == 0
    assert report.replans == ["a1,a2"]
    assert all("a0" not in plan.split(",") for plan in report.replans)
    assert "action=MissionReplan(a0)" in report.log[0]


def test_jam_escalates_and_fails(screw_tiles):
    report = run(screw_tiles, "fault target=ScrewPrim mode=fail_perm")
    assert report.exit_code == 4
    assert report.outcomes["Failed"] == 1
    assert "action=Escalate(jammed_fastener)" in report.log[-1]


def test_escalate_applies_as_failed(live, screw_tiles):
    tree, _ = live
    outcome = apply_recovery(Escalate("test"), tree, PlannerHandles(screw_tiles), SimWorld(initial_state(screw_tiles)))
    assert outcome.result is RecoveryResult.FAILED and outcome.tree is tree


def _done_order(report):
    order = []
    for line in report.trace:
        for att in re.findall(r"Fasten\.\w+\([^)]*attachment=(\w+)[^)]*\)->Done", line):
            order.append(att)
    return order


@pytest.mark.parametrize("faults", [
    "fault target=Grasp part=pB mode=fail_n:2",
    "fault target=in_hand part=pB mode=fail_n:1",
    "fault target=is_aligned part=pB mode=fail_n:1",
    "fault target=at_station part=pB mode=fail_n:1",
    "fault target=Move.Transport mode=drop_driver:10",
])
def test_first_order_recovery_resumes_original_plan(screw_tiles, faults):
    nominal = run(screw_tiles)
    report = run(screw_tiles, faults)
    assert report.exit_code == 0 and report.records
    assert all(r.order is Order.FIRST for r in report.records)
    assert report.replans == []
    assert _done_order(report) == _done_order(nominal)


@pytest.mark.parametrize("head", ["Grasp", "Detect.Object", "Align", "Move.Transport"])
def test_bounded_faults_terminate(screw_tiles, head):
    for n in (1, 2, 3, 5):
        report = run(screw_tiles, f"fault target={head} mode=fail_n:{n}")
        assert report.status in ("Success", "Failed")
        assert report.ticks < 2000


def test_log_round_trip_and_report(screw_tiles):
    report = run(screw_tiles, "fault target=Grasp part=pB mode=fail_n:2")
    rows = parse_contingency_log(report.log_text())
    assert len(rows) == 2
    assert format_report(rows) == "First-order Skill / Failed grasp actuation: 2\n"
    assert format_report([]) == ""


def test_unclassified_row_label():
    assert category_label("Unclassified", "First", "driver_dropout") == "Unclassified / Hardware-drivers dropping out"


@pytest.mark.parametrize("text", [
    "garbage\n",
    "tick=1 level=Galaxy order=First axis=Grounding att=a1 src=n1 action=X result=Resumed cause=x\n",
    "tick=1 level=Skill order=First axis=Grounding att=a1 src=n1 action=X result=Resumed\n",
])
def test_bad_log(text):
    with pytest.raises(LogFormatError):
        parse_contingency_log(text)


def test_counts_match_failures(screw_tiles):
    report = run(screw_tiles, "fault target=Grasp part=pB mode=fail_n:2\nfault target=is_aligned part=pB mode=fail_n:1")
    failures = sum(1 for line in report.trace if "status=Failure" in line)
    counted = sum(int(row.rsplit(": ", 1)[1]) for row in report.counts)
    assert counted == len(report.records) == failures
    assert Counter(r.level for r in report.records) == Counter({Level.SKILL: 2, Level.TASK: 1})
