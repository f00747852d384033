"""
The condition language: terms, literals, the closed predicate vocabulary and unification.

    ~occupied(green_hole)      negated derived literal
    inside(O, green_hole)      pattern with variable O
    ~on(X, _)                  pattern with a wildcard (postcondition side effects only)
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

Binding = dict[str, str]


class TermKind(Enum):
    Constant = "constant"
    Variable = "variable"
    Wildcard = "wildcard"


@dataclass(frozen=True, order=True)
class Term:
    """An argument slot of a literal.

    Constants name scene objects; zones such as `table` are objects of class zone, so object-ids
    and area-ids share one kind. Variables start with an uppercase letter and `_` is the
    wildcard.
    """

    kind: TermKind
    name: str

    @classmethod
    def const(cls, name: str) -> "Term":
        return cls(TermKind.Constant, name)

    @classmethod
    def var(cls, name: str) -> "Term":
        return cls(TermKind.Variable, name)

    @classmethod
    def wildcard(cls) -> "Term":
        return cls(TermKind.Wildcard, "_")

    @classmethod
    def of(cls, name: str) -> "Term":
        """Classify a bare symbol the way the surface syntax does."""
        if name == "_":
            return cls.wildcard()
        if name[:1].isupper():
            return cls.var(name)
        return cls.const(name)

    @property
    def is_ground(self) -> bool:
        return self.kind == TermKind.Constant

    def __str__(self) -> str:
        return self.name


class VocabularyException(Exception):
    pass


class PredicateKind(Enum):
    Base = "base"
    Derived = "derived"
    Attribute = "attribute"


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple[Term, ...] = ()
    negated: bool = False

    @classmethod
    def make(cls, predicate: str, *args: str, negated: bool = False) -> "Literal":
        """Build a literal from bare symbols, e.g. `Literal.make("on", "a", "table")`."""
        return cls(predicate, tuple(Term.of(a) for a in args), negated)

    @property
    def is_ground(self) -> bool:
        return all(t.is_ground for t in self.args)

    @property
    def has_wildcard(self) -> bool:
        return any(t.kind == TermKind.Wildcard for t in self.args)

    @property
    def variables(self) -> list[str]:
        seen: list[str] = []
        for t in self.args:
            if t.kind == TermKind.Variable and t.name not in seen:
                seen.append(t.name)
        return seen

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.args)

    def negate(self) -> "Literal":
        return Literal(self.predicate, self.args, not self.negated)

    def positive(self) -> "Literal":
        return Literal(self.predicate, self.args, False)

    def substitute(self, binding: Mapping[str, str]) -> "Literal":
        """Replace bound variables by constants; unbound variables and wildcards are kept."""
        args = tuple(
            Term.const(binding[t.name])
            if t.kind == TermKind.Variable and t.name in binding
            else t
            for t in self.args
        )
        return Literal(self.predicate, args, self.negated)

    def __str__(self) -> str:
        sign = "~" if self.negated else ""
        if not self.args:
            return sign + self.predicate
        return "%s%s(%s)" % (sign, self.predicate, ", ".join(map(str, self.args)))

    def __lt__(self, other: "Literal") -> bool:
        return str(self) < str(other)


class Vocabulary:
    """The closed set of predicates conditions may use.

    Class vars:
    - PREDICATES: predicate name -> (arity, kind)
    - STATIC_ATTRIBUTES: attributes no skill changes; false ones prune achiever bindings
    - SUPPORT: base predicates that give an object its single support
    """

    PREDICATES: dict[str, tuple[int, PredicateKind]] = {
        "on": (2, PredicateKind.Base),
        "inside": (2, PredicateKind.Base),
        "held": (1, PredicateKind.Base),
        "at": (2, PredicateKind.Base),
        "occupied": (1, PredicateKind.Derived),
        "hand_empty": (0, PredicateKind.Derived),
        "pickable": (1, PredicateKind.Attribute),
        "container": (1, PredicateKind.Attribute),
        "reachable": (1, PredicateKind.Attribute),
        "opened": (1, PredicateKind.Attribute),
    }
    STATIC_ATTRIBUTES = frozenset({"pickable", "container", "reachable"})
    SUPPORT = frozenset({"on", "inside", "held"})

    @classmethod
    def kind(cls, predicate: str) -> PredicateKind:
        if predicate not in cls.PREDICATES:
            raise VocabularyException("Unknown predicate: %r" % predicate)
        return cls.PREDICATES[predicate][1]

    @classmethod
    def validate(cls, lit: Literal) -> Literal:
        """Check a literal against the vocabulary, returning it unchanged.

        Raises:
            VocabularyException: On an unknown predicate or an arity mismatch.
        """
        if lit.predicate not in cls.PREDICATES:
            raise VocabularyException("Unknown predicate: %r" % lit.predicate)
        arity = cls.PREDICATES[lit.predicate][0]
        if len(lit.args) != arity:
            raise VocabularyException(
                "Arity mismatch for %r: expected %d argument(s), got %d"
                % (lit.predicate, arity, len(lit.args))
            )
        return lit

    @classmethod
    def validate_all(cls, lits: Iterable[Literal]) -> list[Literal]:
        return [cls.validate(lit) for lit in lits]

    @classmethod
    def is_derived_negation(cls, lit: Literal) -> bool:
        """True for the derived forms the planner grounds before matching skills."""
        return (lit.predicate == "occupied" and lit.negated) or (
            lit.predicate == "hand_empty" and not lit.negated
        )


def unify(pattern: Literal, ground: Literal, binding: Mapping[str, str] | None = None) -> Binding | None:
    """Match a pattern literal against a ground literal.

    Args:
        pattern (Literal): Literal that may hold variables and wildcards.
        ground (Literal): Fully ground literal.
        binding (Mapping[str, str], optional): Bindings already fixed by the caller.

    Returns:
        Binding | None: The extended binding, or None if the two do not unify.
    """
    if pattern.predicate != ground.predicate or pattern.negated != ground.negated:
        return None
    if len(pattern.args) != len(ground.args):
        return None
    result: Binding = dict(binding or {})
    for p, g in zip(pattern.args, ground.args):
        match p.kind:
            case TermKind.Wildcard:
                continue
            case TermKind.Constant:
                if p.name != g.name:
                    return None
            case TermKind.Variable:
                if result.setdefault(p.name, g.name) != g.name:
                    return None
    return result
