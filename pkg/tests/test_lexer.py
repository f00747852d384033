import pytest
from recoverbt.lexer import LexerException, Token, tokenize


@pytest.mark.parametrize(
    "input,tokens",
    [
        pytest.param("hand_empty", [Token.identifier("hand_empty")], id="Bare"),
        pytest.param(
            "held(red_cube)",
            [
                Token.identifier("held"),
                Token.left_paren(),
                Token.identifier("red_cube"),
                Token.right_paren(),
            ],
        ),
        pytest.param(
            "~occupied(green_hole)",
            [
                Token.tilde(),
                Token.identifier("occupied"),
                Token.left_paren(),
                Token.identifier("green_hole"),
                Token.right_paren(),
            ],
            id="Negated",
        ),
        pytest.param(
            "~on(X, _)",
            [
                Token.tilde(),
                Token.identifier("on"),
                Token.left_paren(),
                Token.identifier("X"),
                Token.comma(),
                Token.wildcard(),
                Token.right_paren(),
            ],
            id="Wildcard",
        ),
        pytest.param(
            "  Condition* [n3] inside(blue_peg,green_hole)",
            [
                Token.identifier("Condition"),
                Token.star(),
                Token.left_bracket(),
                Token.identifier("n3"),
                Token.right_bracket(),
                Token.identifier("inside"),
                Token.left_paren(),
                Token.identifier("blue_peg"),
                Token.comma(),
                Token.identifier("green_hole"),
                Token.right_paren(),
            ],
            id="TreeLine",
        ),
    ],
)
def test_tokenize(input: str, tokens: list[Token]):
    assert tokenize(input) == tokens


@pytest.mark.parametrize("input", ["on(a, b).", "held(a) & held(b)", "inside(a; b)", "é"])
def test_tokenize__unexpected_character(input: str):
    with pytest.raises(LexerException):
        tokenize(input)


def test_token_repr():
    assert repr(Token.identifier("grasp")) == 'IDENTIFIER("grasp")'
    assert repr(Token.tilde()) == 'TILDE("~")'
