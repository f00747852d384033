from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from recoverbt.lexer import Token, TokenType, tokenize
from recoverbt.literals import Literal, Term, Vocabulary

if TYPE_CHECKING:
    from recoverbt.skills import SkillCatalog
    from recoverbt.tree import BTNode


class ParserException(Exception):
    pass


def parse_literal_tokens(tokens: list[Token]) -> Literal:
    """Consume one literal from the front of `tokens` (the list is mutated).

    Args:
        tokens (list[Token]): Token stream positioned at the start of a literal.

    Raises:
        ParserException: On malformed syntax.

    Returns:
        Literal: Parsed literal, not yet checked against the vocabulary.
    """
    if not tokens:
        raise ParserException("No tokens to parse.")

    negated = False
    if tokens[0].type == TokenType.Tilde:
        negated = True
        tokens.pop(0)

    if not tokens or (head := tokens.pop(0)).type != TokenType.Identifier:
        raise ParserException("Literal must start with a predicate name.")

    args: list[Term] = []
    if tokens and tokens[0].type == TokenType.LeftParen:
        tokens.pop(0)
        while True:
            if not tokens:
                raise ParserException("Unterminated argument list for %r." % head.value)
            match (arg := tokens.pop(0)).type:
                case TokenType.Identifier:
                    args.append(Term.of(arg.value))
                case TokenType.Wildcard:
                    args.append(Term.wildcard())
                case other:
                    raise ParserException("Bad literal argument. Got: %r" % other)
            if not tokens:
                raise ParserException("Unterminated argument list for %r." % head.value)
            match (sep := tokens.pop(0)).type:
                case TokenType.Comma:
                    continue
                case TokenType.RightParen:
                    break
                case _:
                    raise ParserException("Unexpected token in argument list: %r" % sep)

    return Literal(head.value, tuple(args), negated)


def parse_literal(text: str) -> Literal:
    """Parse `[~]predicate(arg, ...)` (or `[~]predicate` for 0-arity) into a validated literal.

    Args:
        text (str): Surface syntax, e.g. `~occupied(green_hole)`.

    Raises:
        ParserException: On malformed syntax or trailing tokens.
        VocabularyException: On an unknown predicate or an arity mismatch.

    Returns:
        Literal: The parsed literal.
    """
    tokens = tokenize(text)
    lit = parse_literal_tokens(tokens)
    if tokens:
        raise ParserException("Unexpected trailing tokens after literal: %r" % tokens)
    return Vocabulary.validate(lit)


NODE_KINDS = ("Sequence", "Fallback", "Condition", "Action")


@dataclass
class TreeLine:
    """One line of a rendered tree listing, before children are attached."""

    depth: int
    kind: str
    node_id: str
    expanded: bool = False
    call: Literal | None = None
    children: list["TreeLine"] = field(default_factory=list)


def parse_tree_line(raw: str) -> TreeLine:
    """Parse one rendered line, e.g. `  Condition* [n3] inside(blue_peg, green_hole)`.

    Raises:
        ParserException: On odd indentation or a malformed line.
    """
    spaces = len(raw) - len(raw.lstrip(" "))
    if spaces % 2:
        raise ParserException("Odd indentation in line: %r" % raw)
    tokens = tokenize(raw)
    if not tokens or (kind := tokens.pop(0)).type != TokenType.Identifier or kind.value not in NODE_KINDS:
        raise ParserException("Line must start with a node kind: %r" % raw)
    expanded = bool(tokens) and tokens[0].type == TokenType.Star
    if expanded:
        if kind.value != "Condition":
            raise ParserException("Only conditions carry the expanded marker: %r" % raw)
        tokens.pop(0)
    if (
        len(tokens) < 3
        or tokens[0].type != TokenType.LeftBrac
        or tokens[1].type != TokenType.Identifier
        or tokens[2].type != TokenType.RightBrac
    ):
        raise ParserException("Missing [node-id] in line: %r" % raw)
    line = TreeLine(spaces // 2, kind.value, tokens[1].value, expanded)
    del tokens[:3]
    if kind.value in ("Condition", "Action"):
        line.call = parse_literal_tokens(tokens)
    if tokens:
        raise ParserException("Unexpected trailing tokens in line: %r" % raw)
    return line


def build_node(line: TreeLine, catalog: "SkillCatalog") -> "BTNode":
    from recoverbt import tree
    from recoverbt.skills import SkillException

    match line.kind:
        case "Sequence" | "Fallback":
            if not line.children:
                raise ParserException("%s [%s] has no children" % (line.kind, line.node_id))
            cls = tree.Sequence if line.kind == "Sequence" else tree.Fallback
            return cls(line.node_id, [build_node(c, catalog) for c in line.children])
        case "Condition":
            return tree.Condition(line.node_id, Vocabulary.validate(line.call), line.expanded)
        case _:
            call = line.call
            if call.negated or not call.is_ground:
                raise ParserException("Malformed action [%s]: %s" % (line.node_id, call))
            try:
                template = catalog.template(call.predicate)
                if len(template.params) != len(call.args):
                    raise ParserException("Wrong number of arguments for %r" % call.predicate)
                binding = dict(zip(template.param_names, call.names))
                return tree.Action(line.node_id, catalog.ground(call.predicate, binding))
            except SkillException as e:
                raise ParserException(str(e))


def parse_tree(text: str, catalog: "SkillCatalog") -> "BTNode":
    """Parse a rendered tree listing back into nodes.

    Args:
        text (str): Listing as produced by `format.render`.
        catalog (SkillCatalog): Resolves action lines to ground skills.

    Raises:
        ParserException: On bad nesting, a malformed line or an empty control node.

    Returns:
        BTNode: Root of the parsed tree.
    """
    from recoverbt import tree

    stack: list[TreeLine] = []
    top: TreeLine | None = None
    for raw in text.splitlines():
        if not raw.strip():
            continue
        line = parse_tree_line(raw)
        while stack and stack[-1].depth >= line.depth:
            stack.pop()
        if not stack:
            if top is not None or line.depth != 0:
                raise ParserException("Listing has more than one root: %r" % raw)
            top = line
        else:
            parent = stack[-1]
            if line.depth != parent.depth + 1 or parent.kind not in ("Sequence", "Fallback"):
                raise ParserException("Bad nesting at line: %r" % raw)
            parent.children.append(line)
        stack.append(line)
    if top is None:
        raise ParserException("Empty tree listing.")
    root = build_node(top, catalog)
    tree.check_tree(root)
    return root
