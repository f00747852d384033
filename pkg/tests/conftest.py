from itertools import count
from pathlib import Path

import pytest
from hypothesis import strategies as st
from hypothesis.strategies._internal.core import DrawFn

from recoverbt import tree
from recoverbt.literals import Literal
from recoverbt.parser import parse_literal
from recoverbt.scenario import Scenario, load_scenario
from recoverbt.skills import SkillCatalog, builtin_catalog
from recoverbt.world import (
    AddRelation,
    RemoveObject,
    RemoveRelation,
    SceneEdit,
    SceneGraph,
    SceneObject,
    SetAttribute,
)

ROOT = Path(__file__).parent.parent
SCENARIOS = ROOT / "scenarios"
FIXTURES = ROOT / "fixtures"

TABLETOP = (
    SceneObject("table", "zone"),
    SceneObject("shelf", "zone"),
    SceneObject("green_hole", "hole", "green", container=True),
    SceneObject("red_bin", "bin", "red", container=True),
    SceneObject("drawer", "drawer", "brown", container=True),
    SceneObject("blue_peg", "peg", "blue", pickable=True),
    SceneObject("red_cube", "cube", "red", pickable=True),
    SceneObject("black_cube", "cube", "black", pickable=True),
)


def lit(text: str) -> Literal:
    return parse_literal(text)


@pytest.fixture
def catalog() -> SkillCatalog:
    return builtin_catalog()


def tabletop_scene() -> SceneGraph:
    return SceneGraph.build(
        TABLETOP,
        [
            lit("on(blue_peg, table)"),
            lit("on(red_cube, table)"),
            lit("on(black_cube, green_hole)"),
            lit("at(red_bin, shelf)"),
        ],
    )


@pytest.fixture
def tabletop() -> SceneGraph:
    return tabletop_scene()


@pytest.fixture
def scenario():
    def load(name: str) -> Scenario:
        return load_scenario(SCENARIOS / ("%s.yml" % name))

    return load


def scene_edits() -> st.SearchStrategy[SceneEdit]:
    """Edits over the tabletop objects; many of them are rejected by the invariants."""
    ids = [o.id for o in TABLETOP]
    movable = ["blue_peg", "red_cube", "black_cube"]
    relation = st.one_of(
        st.builds(lambda a, b: lit("on(%s, %s)" % (a, b)), st.sampled_from(ids), st.sampled_from(ids)),
        st.builds(lambda a, b: lit("inside(%s, %s)" % (a, b)), st.sampled_from(movable), st.sampled_from(ids)),
        st.builds(lambda a: lit("held(%s)" % a), st.sampled_from(ids)),
        st.builds(lambda a, z: lit("at(%s, %s)" % (a, z)), st.sampled_from(ids), st.sampled_from(ids)),
    )
    return st.one_of(
        st.builds(AddRelation, relation),
        st.builds(RemoveRelation, relation),
        st.builds(SetAttribute, st.sampled_from(ids), st.sampled_from(["opened", "reachable", "color"]), st.booleans()),
        st.builds(RemoveObject, st.sampled_from(movable)),
    )


def ground_literals() -> st.SearchStrategy[Literal]:
    return st.sampled_from(
        [
            lit("on(blue_peg, table)"),
            lit("on(black_cube, green_hole)"),
            lit("inside(blue_peg, green_hole)"),
            lit("held(red_cube)"),
            lit("~occupied(green_hole)"),
            lit("hand_empty"),
            lit("pickable(red_cube)"),
            lit("~opened(drawer)"),
        ]
    )


def ground_actions() -> st.SearchStrategy[tuple[str, dict]]:
    return st.sampled_from(
        [
            ("grasp", {"X": "red_cube"}),
            ("grasp", {"X": "black_cube"}),
            ("place_on", {"X": "black_cube", "Y": "table"}),
            ("place_inside", {"X": "blue_peg", "Y": "green_hole"}),
            ("close_drawer", {"D": "drawer"}),
        ]
    )


def tree_shapes(max_leaves: int = 20):
    leaf = st.one_of(
        st.tuples(st.just("condition"), ground_literals(), st.booleans()),
        st.tuples(st.just("action"), ground_actions()),
    )
    return st.recursive(
        leaf,
        lambda children: st.tuples(
            st.sampled_from(["sequence", "fallback"]), st.lists(children, min_size=1, max_size=3)
        ),
        max_leaves=max_leaves,
    )


def build_tree(shape, ids=None) -> tree.BTNode:
    """Materialize a shape drawn from `tree_shapes` with pre-order ids n1, n2, ..."""
    ids = ids or count(1)
    node_id = "n%d" % next(ids)
    match shape:
        case ("condition", literal, expanded):
            return tree.Condition(node_id, literal, expanded)
        case ("action", (name, binding)):
            return tree.Action(node_id, builtin_catalog().ground(name, binding))
        case ("sequence", children):
            return tree.Sequence(node_id, [build_tree(c, ids) for c in children])
        case ("fallback", children):
            return tree.Fallback(node_id, [build_tree(c, ids) for c in children])
    raise ValueError("unexpected shape: %r" % (shape,))


@st.composite
def behavior_trees(draw: DrawFn, max_leaves: int = 20) -> tree.BTNode:
    return build_tree(draw(tree_shapes(max_leaves)))


CONTAINERS_DRAWN = (
    SceneObject("green_hole", "hole", "green", container=True),
    SceneObject("red_bin", "bin", "red", container=True),
    SceneObject("drawer", "drawer", "brown", container=True, opened=True),
)


@st.composite
def container_worlds(draw: DrawFn) -> tuple[SceneGraph, Literal]:
    """Up to three pickable parts around one hole, bin or open drawer, one of them to be put inside."""
    box = draw(st.sampled_from(CONTAINERS_DRAWN))
    names = draw(st.lists(st.sampled_from(["blue_peg", "red_cube", "black_cube"]), min_size=1, max_size=3, unique=True))
    objects = [SceneObject("table", "zone"), box]
    objects += [SceneObject(n, "peg" if n.endswith("peg") else "cube", pickable=True) for n in names]
    relations = []
    holder = None
    for name in names:
        where = draw(st.sampled_from(["table", "inside", "on", "held"]))
        if where == "held" and holder is not None:
            where = "table"
        match where:
            case "table":
                relations.append(lit("on(%s, table)" % name))
            case "inside" | "on":
                relations.append(lit("%s(%s, %s)" % (where, name, box.id)))
            case "held":
                holder = name
                relations.append(lit("held(%s)" % name))
    target = draw(st.sampled_from(names))
    return SceneGraph.build(objects, relations), lit("inside(%s, %s)" % (target, box.id))
