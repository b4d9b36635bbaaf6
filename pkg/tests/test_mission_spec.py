import pytest
from hypothesis import given, settings, strategies as st

from asmforge.mission_planner import CycleDetected, InvalidMission, plan_mission
from asmforge.mission_spec import (
    AttachmentKind, BadIndentationError, Category, DanglingReferenceError, DuplicateIdError, MissionParseError,
    MissionSpec, MissionSyntaxError, categorize, class_predicate, parse_mission, serialize_mission, validate,
)

from missiongen import random_mission

SCREW_TILES = """\
 parts:
   pA: plain-tile
   pB: screw0
   pC: tile-with-hole
   pD: tile-with-hole
 attachments:
   a0: pA, pC
   a1: pB, pC
   a2: pB, pD
relations:
  blocked-by:
    a1: pA
    a2: pA
"""


def test_screw_tiles(screw_tiles):
    spec = parse_mission(SCREW_TILES)
    assert spec == screw_tiles
    assert list(spec.parts) == ["pA", "pB", "pC", "pD"]
    assert len(spec.attachments) == 3
    assert spec.blocked_by == {"a1": frozenset({"pA"}), "a2": frozenset({"pA"})}
    assert spec.attachments["a1"].moved == "pB"
    assert spec.attachments["a1"].bases == ("pC",)
    assert spec.attachments["a1"].kind is AttachmentKind.SCREW and spec.attachments["a1"].reversible
    assert spec.attachments["a0"].kind is AttachmentKind.MOUNT and not spec.attachments["a0"].reversible
    assert validate(spec) == []


def test_empty_collections():
    spec = parse_mission("parts:\n  p1: screw\nattachments:\nrelations:")
    assert list(spec.parts) == ["p1"] and spec.attachments == {} and spec.blocked_by == {}


def test_empty_text_is_an_empty_spec():
    assert parse_mission("") == MissionSpec()
    assert parse_mission("# only a comment\n\n") == MissionSpec()


def test_dangling_part_reports_name_and_line():
    with pytest.raises(DanglingReferenceError) as info:
        parse_mission(SCREW_TILES.replace("a2: pB, pD", "a2: pB, pZ"))
    assert "pZ" in str(info.value)
    assert info.value.line == 9
    assert info.value.column == 12


@pytest.mark.parametrize("text, error, line", [
    ("parts:\n  p1: screw\n  p1: nut\n", DuplicateIdError, 3),
    ("parts:\n  p1: screw\n   p2: nut\n", BadIndentationError, 3),
    ("parts:\n    p1: screw\n  p2: nut\n", BadIndentationError, 3),
    ("widgets:\n  p1: screw\n", MissionSyntaxError, 1),
    ("parts:\n  p1 screw\n", MissionSyntaxError, 2),
    ("parts:\n  p1: screw @ 1,\n", MissionSyntaxError, 2),
    ("parts:\n  p1: screw\n  p2: nut\nattachments:\n  a0: p1\n", MissionSyntaxError, 5),
    ("parts:\n  p1: screw\n  p2: nut\nattachments:\n  a0: p1, p1\n", MissionSyntaxError, 5),
    ("parts:\n  p1: screw\n  p2: nut\nattachments:\n  a0: p1, p2 type=glue\n", MissionSyntaxError, 5),
    ("parts:\n  p1: screw\n  p2: nut\nattachments:\n  a0: p1, p2 reversible=maybe\n", MissionSyntaxError, 5),
    ("parts:\n  p1: screw\n  p2: nut\nattachments:\n  a0: p1, p2\nrelations:\n  blocked-by:\n    a9: p1\n",
     DanglingReferenceError, 8),
    ("parts:\n  p1: screw\n  p2: nut\nattachments:\n  a0: p1, p2\nrelations:\n  touches:\n    a0: p1\n",
     MissionSyntaxError, 7),
    ("parts:\n  p1: screw\nparts:\n  p2: nut\n", DuplicateIdError, 3),
    (b"parts:\n  p1: scr\xffew\n", MissionSyntaxError, 1),
])
def test_structured_errors(text, error, line):
    with pytest.raises(error) as info:
        parse_mission(text)
    assert isinstance(info.value, MissionParseError)
    assert info.value.line == line
    assert info.value.column >= 1


def test_options_and_poses():
    spec = parse_mission(
        "parts:\n  base: plate @ 0.5,-0.25\n  peg: dowel-4\n"
        "attachments:\n  a0: peg, base type=mount reversible=true\n  a1: base, peg\n")
    assert spec.station_pose("base") == (0.5, -0.25)
    assert spec.parts["base"].pose_given and not spec.parts["peg"].pose_given
    assert spec.attachments["a0"].kind is AttachmentKind.MOUNT and spec.attachments["a0"].reversible
    assert spec.attachments["a1"].kind is AttachmentKind.MOUNT and not spec.attachments["a1"].reversible


@pytest.mark.parametrize("name, category", [
    ("screw0", Category.SCREW_LIKE), ("Bolt-M4", Category.SCREW_LIKE), ("nut", Category.SCREW_LIKE),
    ("housing", Category.INSERT_LIKE), ("shaft-d8", Category.INSERT_LIKE), ("pulley", Category.INSERT_LIKE),
    ("dowel-4", Category.INSERT_LIKE), ("belt-gt2", Category.ELASTIC_LIKE), ("elastic", Category.ELASTIC_LIKE),
    ("o-ring-elastic", Category.ELASTIC_LIKE), ("plain-tile", Category.PASSIVE), ("", Category.PASSIVE),
])
def test_category_map(name, category):
    assert categorize(name) is category


def test_class_predicates():
    assert class_predicate("is_screw", "screw0")
    assert not class_predicate("is_screw", "dowel")
    assert class_predicate("is_elastic", "ring-elastic")
    with pytest.raises(KeyError):
        class_predicate("is_widget", "screw")


def test_validation_cycle_and_self_pair():
    text = ("parts:\n  pA: screw\n  pB: tile\n  pC: screw\n"
            "attachments:\n  a0: pA, pB\n  a1: pC, pB\n"
            "relations:\n  blocked-by:\n    a0: pC\n    a1: pA\n")
    issues = validate(parse_mission(text))
    assert [i.code for i in issues] == ["Cycle"]
    assert set(issues[0].location) == {"a0", "a1"}
    spec = parse_mission("parts:\n  p1: screw\n  p2: nut\nattachments:\n  a0: p1, p2\n"
                         "relations:\n  stability-dependence:\n    a0: a0\n")
    assert [i.code for i in validate(spec)] == ["SelfPair"]


def test_error_issue_implies_planning_error():
    spec = parse_mission("parts:\n  p1: screw\n  p2: nut\nattachments:\n  a0: p1, p2\n"
                         "relations:\n  stability-dependence:\n    a0: a0\n")
    with pytest.raises(InvalidMission):
        plan_mission(spec)


def test_serialize_round_trip_on_fixtures(fixture_specs):
    for spec in fixture_specs.values():
        assert parse_mission(serialize_mission(spec)) == spec


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_round_trip_property(rng):
    spec = parse_mission(random_mission(rng))
    text = serialize_mission(spec)
    assert parse_mission(text) == spec
    assert serialize_mission(parse_mission(text)) == text


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=300))
def test_arbitrary_bytes_never_crash(data):
    try:
        parse_mission(data)
    except MissionParseError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_validation_errors_match_planner(rng):
    spec = parse_mission(random_mission(rng))
    has_cycle = any(i.code == "Cycle" for i in validate(spec))
    try:
        plan_mission(spec)
    except CycleDetected:
        assert has_cycle
    else:
        assert not has_cycle
