import pytest

from recoverbt import format
from recoverbt.tree import Action, Condition, Fallback, Sequence
from tests.conftest import lit


def test_format_node(catalog):
    assert format.format_node(Sequence("n1", [Condition("n2", lit("hand_empty"))])) == "Sequence [n1]"
    assert format.format_node(Condition("n3", lit("inside(blue_peg, green_hole)"), True)) == (
        "Condition* [n3] inside(blue_peg, green_hole)"
    )
    assert format.format_node(Condition("n4", lit("~occupied(green_hole)"))) == "Condition [n4] ~occupied(green_hole)"
    assert format.format_node(Action("n5", catalog.ground("grasp", {"X": "blue_peg"}))) == "Action [n5] grasp(blue_peg)"


def test_format_node__unknown():
    with pytest.raises(format.FormatException):
        format.format_node("Condition [n1] hand_empty")


def test_render(catalog):
    root = Sequence(
        "n1",
        [
            Fallback(
                "n3",
                [
                    Condition("n2", lit("inside(blue_peg, green_hole)"), True),
                    Sequence(
                        "n5",
                        [
                            Condition("n4", lit("held(blue_peg)")),
                            Action("n6", catalog.ground("place_inside", {"X": "blue_peg", "Y": "green_hole"})),
                        ],
                    ),
                ],
            )
        ],
    )
    assert format.render(root) == "\n".join(
        [
            "Sequence [n1]",
            "  Fallback [n3]",
            "    Condition* [n2] inside(blue_peg, green_hole)",
            "    Sequence [n5]",
            "      Condition [n4] held(blue_peg)",
            "      Action [n6] place_inside(blue_peg, green_hole)",
        ]
    )
