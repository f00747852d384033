"""
Verdicts: the structured detection / identification / correction answer to one check.

    failure_detected: true
    identification:
      skill: place_inside
      culprit: ~occupied(green_hole)
      cause: green_hole is occupied by black_cube
    correction:
      type: add-precondition
      skill: place_inside
      literal: ~occupied(green_hole)

The same record is the response schema reasoners must reply with.
"""

from abc import abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, ClassVar

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

from recoverbt.lexer import LexerException
from recoverbt.literals import Literal, VocabularyException
from recoverbt.parser import ParserException, parse_literal
from recoverbt.skills import SuggestedSkillSpec


class VerdictException(Exception):
    pass


class CheckKind(Enum):
    PreExecution = "pre-execution"
    PreconditionVerify = "precondition-verify"
    PostconditionVerify = "postcondition-verify"
    PreconditionSuggest = "precondition-suggest"
    SkillSuggest = "skill-suggest"


def _literal(text: Any) -> Literal:
    if not isinstance(text, str):
        raise VerdictException("Literal must be a string, got %r" % text)
    try:
        return parse_literal(text)
    except (LexerException, ParserException, VocabularyException) as e:
        raise VerdictException("Invalid literal %r: %s" % (text, e))


def skill_name(reference: str) -> str:
    """`place_inside(blue_peg, green_hole)` or `place_inside` -> `place_inside`."""
    return reference.split("(", 1)[0].strip()


class Correction:
    """Trait and registry for correction variants, keyed by the "type" field of the reply."""

    _registry: ClassVar[dict[str, type["Correction"]]] = {}
    type: ClassVar[str]

    @classmethod
    def register(cls, name: str):
        """Register a subclass of Correction with the specified name in the _registry."""

        def decorator(subclass):
            subclass.type = name
            cls._registry[name] = subclass
            return subclass

        return decorator

    @abstractmethod
    def dict(self) -> dict: ...

    @classmethod
    def fromdict(cls, d: Any) -> "Correction":
        """Parse a correction record.

        Raises:
            VerdictException: On an unknown type, a missing field or an invalid literal.
        """
        if not isinstance(d, dict):
            raise VerdictException("Correction must be an object, got %r" % d)
        if d.get("type") not in cls._registry:
            raise VerdictException("Unrecognized correction type: %r" % d.get("type"))
        try:
            return cls._registry[d["type"]]._fromdict(d)
        except KeyError as e:
            raise VerdictException("Correction %r is missing field %s" % (d["type"], e))

    @classmethod
    @abstractmethod
    def _fromdict(cls, d: dict) -> Self: ...


@Correction.register("add-precondition")
@dataclass(frozen=True)
class AddPrecondition(Correction):
    skill: str
    literal: Literal

    def dict(self) -> dict:
        return {"type": self.type, "skill": self.skill, "literal": str(self.literal)}

    @classmethod
    def _fromdict(cls, d):
        if not isinstance(d["skill"], str) or not d["skill"]:
            raise VerdictException("add-precondition needs a skill name, got %r" % d["skill"])
        return cls(d["skill"], _literal(d["literal"]))


@Correction.register("mark-unsatisfied")
@dataclass(frozen=True)
class MarkUnsatisfied(Correction):
    literals: tuple[Literal, ...]

    def dict(self) -> dict:
        return {"type": self.type, "literals": [str(lit) for lit in self.literals]}

    @classmethod
    def _fromdict(cls, d):
        if not isinstance(d["literals"], list) or not d["literals"]:
            raise VerdictException("mark-unsatisfied needs a non-empty literal list")
        return cls(tuple(map(_literal, d["literals"])))


@Correction.register("report-skill-failure")
@dataclass(frozen=True)
class ReportSkillFailure(Correction):
    def dict(self) -> dict:
        return {"type": self.type}

    @classmethod
    def _fromdict(cls, d):
        return cls()


@Correction.register("add-skill")
@dataclass(frozen=True)
class AddSkill(Correction):
    spec: SuggestedSkillSpec

    def dict(self) -> dict:
        return {"type": self.type, "skill": self.spec.dict()}

    @classmethod
    def _fromdict(cls, d):
        if not isinstance(d["skill"], dict) or not d["skill"].get("name"):
            raise VerdictException("add-skill needs a skill record with a name")
        spec = SuggestedSkillSpec.fromdict(d["skill"])
        for text in spec.preconditions + spec.postconditions:
            _literal(text)
        return cls(spec)


ALLOWED: dict[CheckKind, tuple[type[Correction], ...]] = {
    CheckKind.PreExecution: (AddPrecondition, AddSkill),
    CheckKind.PreconditionVerify: (MarkUnsatisfied,),
    CheckKind.PostconditionVerify: (ReportSkillFailure,),
    CheckKind.PreconditionSuggest: (AddPrecondition,),
    CheckKind.SkillSuggest: (AddSkill,),
}


@dataclass(frozen=True)
class Identification:
    skill: str
    culprit: str
    cause: str = ""

    def dict(self) -> dict:
        return {"skill": self.skill, "culprit": self.culprit, "cause": self.cause}

    @classmethod
    def fromdict(cls, d: Any) -> "Identification":
        if not isinstance(d, dict):
            raise VerdictException("Identification must be an object, got %r" % d)
        for key in ("skill", "culprit"):
            if not isinstance(d.get(key), str) or not d[key]:
                raise VerdictException("Identification needs a non-empty %r" % key)
        return cls(skill_name(d["skill"]), d["culprit"], str(d.get("cause", "")))


@dataclass(frozen=True)
class Verdict:
    kind: CheckKind
    failure_detected: bool = False
    identification: Identification | None = None
    correction: Correction | None = None

    def __post_init__(self):
        if not self.failure_detected:
            if self.identification is not None or self.correction is not None:
                raise VerdictException("A verdict without a detected failure carries no diagnosis")
            return
        if self.identification is None:
            raise VerdictException("A detected failure needs an identification")
        if self.correction is None:
            raise VerdictException("A detected %s failure needs a correction" % self.kind.value)
        if not isinstance(self.correction, ALLOWED[self.kind]):
            raise VerdictException(
                "Correction %r is not allowed for %s checks" % (self.correction.type, self.kind.value)
            )

    @classmethod
    def clear(cls, kind: CheckKind) -> "Verdict":
        return cls(kind)

    @classmethod
    def detected(cls, kind: CheckKind, identification: Identification, correction: Correction) -> "Verdict":
        return cls(kind, True, identification, correction)

    def dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind.value, "failure_detected": self.failure_detected}
        if self.identification is not None:
            d["identification"] = self.identification.dict()
        if self.correction is not None:
            d["correction"] = self.correction.dict()
        return d

    @classmethod
    def fromdict(cls, d: Any, kind: CheckKind | None = None) -> "Verdict":
        """Parse a reply record. Identification and correction of a not-detected reply are
        ignored; a detected postcondition failure defaults to report-skill-failure.

        Raises:
            VerdictException: When the record violates the response schema.
        """
        if not isinstance(d, dict):
            raise VerdictException("Verdict must be an object, got %r" % d)
        if kind is None:
            try:
                kind = CheckKind(d.get("kind"))
            except ValueError:
                raise VerdictException("Unknown check kind: %r" % d.get("kind"))
        detected = d.get("failure_detected")
        if not isinstance(detected, bool):
            raise VerdictException("failure_detected must be a boolean, got %r" % detected)
        if not detected:
            return cls.clear(kind)
        identification = Identification.fromdict(d.get("identification"))
        if d.get("correction") is None and kind == CheckKind.PostconditionVerify:
            correction: Correction = ReportSkillFailure()
        else:
            correction = Correction.fromdict(d.get("correction"))
        return cls(kind, True, identification, correction)


RESPONSE_SCHEMA: dict = {
    "type": "object",
    "required": ["failure_detected"],
    "properties": {
        "failure_detected": {"type": "boolean"},
        "identification": {
            "type": "object",
            "properties": {
                "skill": {"type": "string"},
                "culprit": {"type": "string"},
                "cause": {"type": "string"},
            },
        },
        "correction": {
            "type": "object",
            "properties": {
                "type": {"enum": sorted(Correction._registry)},
                "skill": {},
                "literal": {"type": "string"},
                "literals": {"type": "array", "items": {"type": "string"}},
            },
        },
    },
}
