import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recoverbt.literals import unify
from recoverbt.world import (
    AddObject,
    AddRelation,
    RemoveObject,
    RemoveRelation,
    SceneDiff,
    SceneEdit,
    SceneException,
    SceneGraph,
    SceneObject,
    SetAttribute,
    apply_diff,
    apply_edit,
    apply_edits,
    diff,
    diff_edits,
    evaluate,
    ground_derived_negation,
    serialize_scene,
)
from tests.conftest import TABLETOP, lit, scene_edits, tabletop_scene


@pytest.mark.parametrize(
    "literal,value",
    [
        pytest.param("on(blue_peg, table)", True),
        pytest.param("on(blue_peg, green_hole)", False),
        pytest.param("~on(blue_peg, green_hole)", True),
        pytest.param("occupied(green_hole)", True, id="OccupiedByOn"),
        pytest.param("~occupied(red_bin)", True),
        pytest.param("hand_empty", True),
        pytest.param("pickable(blue_peg)", True),
        pytest.param("pickable(table)", False),
        pytest.param("~opened(drawer)", True),
        pytest.param("at(red_bin, shelf)", True),
    ],
)
def test_evaluate(tabletop: SceneGraph, literal: str, value: bool):
    assert evaluate(lit(literal), tabletop) is value


@pytest.mark.parametrize("literal", ["held(ghost)", "on(X, table)"])
def test_evaluate__rejects(tabletop: SceneGraph, literal: str):
    with pytest.raises(SceneException):
        evaluate(lit(literal), tabletop)


def test_held_clears_hand_empty(tabletop: SceneGraph):
    g = apply_edit(tabletop, AddRelation(lit("held(red_cube)")))
    assert not evaluate(lit("hand_empty"), g)
    assert g.support("red_cube") == lit("held(red_cube)")
    assert lit("on(red_cube, table)") not in g.relations
    assert g.revision == tabletop.revision + 1


@pytest.mark.parametrize(
    "edit",
    [
        pytest.param(AddRelation(lit("on(blue_peg, blue_peg)")), id="SelfSupport"),
        pytest.param(AddRelation(lit("held(ghost)")), id="UnknownObject"),
        pytest.param(AddRelation(lit("occupied(green_hole)")), id="DerivedRelation"),
        pytest.param(AddRelation(lit("at(blue_peg, green_hole)")), id="AtNonZone"),
        pytest.param(RemoveRelation(lit("on(red_cube, green_hole)")), id="AbsentRelation"),
        pytest.param(AddObject(SceneObject("table", "zone")), id="DuplicateObject"),
        pytest.param(RemoveObject("ghost"), id="UnknownRemoval"),
        pytest.param(SetAttribute("drawer", "weight", 3), id="UnknownAttribute"),
    ],
)
def test_apply_edit__rejected(tabletop: SceneGraph, edit: SceneEdit):
    with pytest.raises(SceneException):
        apply_edit(tabletop, edit)


def test_single_gripper(tabletop: SceneGraph):
    g = apply_edit(tabletop, AddRelation(lit("held(red_cube)")))
    with pytest.raises(SceneException):
        apply_edit(g, AddRelation(lit("held(blue_peg)")))


def test_support_cycle(tabletop: SceneGraph):
    g = apply_edit(tabletop, AddRelation(lit("on(red_cube, blue_peg)")))
    with pytest.raises(SceneException):
        apply_edit(g, AddRelation(lit("on(blue_peg, red_cube)")))


def test_remove_object_drops_relations(tabletop: SceneGraph):
    g = apply_edit(tabletop, RemoveObject("black_cube"))
    assert not g.has("black_cube")
    assert not evaluate(lit("occupied(green_hole)"), g)


def test_ground_derived_negation(tabletop: SceneGraph):
    g = apply_edit(tabletop, AddRelation(lit("inside(red_cube, green_hole)")))
    assert ground_derived_negation(lit("~occupied(green_hole)"), g) == [
        lit("~on(black_cube, green_hole)"),
        lit("~inside(red_cube, green_hole)"),
    ]
    assert ground_derived_negation(lit("hand_empty"), g) == []
    held = apply_edit(g, AddRelation(lit("held(blue_peg)")))
    assert ground_derived_negation(lit("hand_empty"), held) == [lit("~held(blue_peg)")]


@pytest.mark.parametrize(
    "d",
    [
        pytest.param({"type": "teleport", "id": "a"}, id="UnknownType"),
        pytest.param({"type": "add-relation"}, id="MissingField"),
    ],
)
def test_scene_edit_fromdict__rejected(d: dict):
    with pytest.raises(SceneException):
        SceneEdit.fromdict(d)


def test_scene_edit_dict_isomorphism():
    edits = [
        AddRelation(lit("inside(red_cube, red_bin)")),
        RemoveRelation(lit("on(blue_peg, table)")),
        SetAttribute("drawer", "opened", True),
        RemoveObject("black_cube"),
        AddObject(SceneObject("yellow_cube", "cube", "yellow", pickable=True)),
    ]
    assert [SceneEdit.fromdict(e.dict()) for e in edits] == edits


def test_serialize_scene(tabletop: SceneGraph):
    lines = serialize_scene(tabletop).splitlines()
    assert lines[0] == "scene revision=0 objects=8 relations=4"
    assert lines[1].startswith("object black_cube class=cube")
    assert lines[-4:] == [
        "at(red_bin, shelf)",
        "on(black_cube, green_hole)",
        "on(blue_peg, table)",
        "on(red_cube, table)",
    ]


def test_scene_dict_isomorphism(tabletop: SceneGraph):
    assert SceneGraph.fromdict(tabletop.dict()) == tabletop


def apply_valid(g: SceneGraph, edits: list[SceneEdit]) -> SceneGraph:
    for e in edits:
        try:
            g = apply_edit(g, e)
        except SceneException:
            pass
    return g


@settings(max_examples=1000, deadline=None)
@given(st.lists(scene_edits(), max_size=25))
def test_incremental_equals_rebuild(edits: list[SceneEdit]):
    tabletop = tabletop_scene()
    g = apply_valid(tabletop, edits)
    rebuilt = SceneGraph.build(g.objects, g.relations, g.revision)
    assert serialize_scene(rebuilt) == serialize_scene(g)

    d = diff(tabletop, g)
    assert serialize_scene(apply_diff(tabletop, d)) == serialize_scene(g)
    assert apply_edits(tabletop, diff_edits(d)).same_state(g)
    assert apply_diff(tabletop, SceneDiff.fromdict(d.dict())).same_state(g)
    assert diff(g, g).is_empty


def test_apply_diff__mismatch(tabletop: SceneGraph):
    moved = apply_edit(tabletop, AddRelation(lit("held(black_cube)")))
    d = diff(tabletop, moved)
    with pytest.raises(SceneException):
        apply_diff(moved, d)


def test_tabletop_objects_are_sorted():
    g = SceneGraph.build(reversed(TABLETOP))
    assert g.ids == sorted(o.id for o in TABLETOP)


@pytest.mark.parametrize(
    "pattern,ground,binding,expected",
    [
        pytest.param("inside(O, green_hole)", "inside(blue_peg, green_hole)", None, {"O": "blue_peg"}, id="Variable"),
        pytest.param("on(X, X)", "on(red_cube, red_cube)", None, {"X": "red_cube"}, id="RepeatedVariable"),
        pytest.param("on(X, X)", "on(red_cube, table)", None, None, id="RepeatedVariableClash"),
        pytest.param("~on(X, _)", "~on(red_cube, table)", None, {"X": "red_cube"}, id="Wildcard"),
        pytest.param("on(X, table)", "on(red_cube, green_hole)", None, None, id="ConstantClash"),
        pytest.param("on(X, Y)", "~on(red_cube, table)", None, None, id="SignClash"),
        pytest.param("on(X, Y)", "inside(red_cube, table)", None, None, id="PredicateClash"),
        pytest.param("held(X)", "held(red_cube)", {"X": "blue_peg"}, None, id="PriorBindingClash"),
        pytest.param("held(X)", "held(red_cube)", {"Y": "table"}, {"X": "red_cube", "Y": "table"}, id="PriorBindingKept"),
    ],
)
def test_unify(pattern: str, ground: str, binding: dict | None, expected: dict | None):
    assert unify(lit(pattern), lit(ground), binding) == expected


def test_unify_leaves_caller_binding_alone():
    binding = {"Y": "table"}
    unify(lit("held(X)"), lit("held(red_cube)"), binding)
    assert binding == {"Y": "table"}
