"""
Tokens shared by literals and rendered tree lines.

    ~on(X, _)                                  TILDE IDENTIFIER LPAREN IDENTIFIER COMMA WILD RPAREN
    Condition* [n3] inside(blue_peg, green_hole)
"""

import re
from dataclasses import dataclass, field
from enum import Enum


class TokenType(Enum):
    Identifier = "identifier"
    Wildcard = "wild"
    Tilde = "tilde"
    LeftParen = "lparen"
    RightParen = "rparen"
    Comma = "comma"
    LeftBrac = "lbrac"
    RightBrac = "rbrac"
    Star = "star"


PUNCTUATION: dict[str, TokenType] = {
    "~": TokenType.Tilde,
    "(": TokenType.LeftParen,
    ")": TokenType.RightParen,
    ",": TokenType.Comma,
    "[": TokenType.LeftBrac,
    "]": TokenType.RightBrac,
    "*": TokenType.Star,
}

# ASCII only; symbols double as YAML scalars and prompt text.
SYMBOL = re.compile(r"[A-Za-z0-9_]+")


@dataclass(frozen=True)
class Token:
    """A typed slice of the source. `column` is kept for error messages and ignored by equality.

    Classmethods build each kind; `identifier` takes the symbol text, the punctuation builders
    take nothing. Brackets and the star only occur in tree listings.
    """

    type: TokenType
    value: str
    column: int = field(default=0, compare=False)

    @classmethod
    def identifier(cls, v: str, column: int = 0) -> "Token":
        return cls(TokenType.Identifier, v, column)

    @classmethod
    def wildcard(cls, column: int = 0) -> "Token":
        return cls(TokenType.Wildcard, "_", column)

    @classmethod
    def punctuation(cls, char: str, column: int = 0) -> "Token":
        return cls(PUNCTUATION[char], char, column)

    @classmethod
    def tilde(cls) -> "Token":
        return cls.punctuation("~")

    @classmethod
    def left_paren(cls) -> "Token":
        return cls.punctuation("(")

    @classmethod
    def right_paren(cls) -> "Token":
        return cls.punctuation(")")

    @classmethod
    def comma(cls) -> "Token":
        return cls.punctuation(",")

    @classmethod
    def left_bracket(cls) -> "Token":
        return cls.punctuation("[")

    @classmethod
    def right_bracket(cls) -> "Token":
        return cls.punctuation("]")

    @classmethod
    def star(cls) -> "Token":
        return cls.punctuation("*")

    def __repr__(self) -> str:
        return f'{self.type.value.upper()}("{self.value}")'


class LexerException(Exception):
    pass


def tokenize(source: str) -> list[Token]:
    """Split a literal such as `~occupied(green_hole)`, or one rendered tree line, into tokens.

    Args:
        source (str): Text to split.

    Raises:
        LexerException: On a character outside symbols, punctuation and whitespace.

    Returns:
        list[Token]: Tokens in source order. A lone `_` is a wildcard.
    """
    tokens: list[Token] = []
    column = 0
    while column < len(source):
        char = source[column]
        if char.isspace():
            column += 1
        elif match := SYMBOL.match(source, column):
            text = match.group()
            tokens.append(Token.wildcard(column) if text == "_" else Token.identifier(text, column))
            column = match.end()
        elif char in PUNCTUATION:
            tokens.append(Token.punctuation(char, column))
            column += 1
        else:
            raise LexerException("Unexpected character %r at column %d of %r" % (char, column, source))
    return tokens
