"""
Deterministic tabletop world: rule-based skill effects and a scripted fault schedule.

Effect rules are looked up by name (a skill template's `effect`) and receive the skill's
positional arguments, so scenario-declared skills can reuse them under other parameter names.
"""

import logging
from abc import abstractmethod
from dataclasses import dataclass, field
from typing import ClassVar

from recoverbt.literals import Literal
from recoverbt.skills import GroundSkill
from recoverbt.tree import Status
from recoverbt.world import (
    AddRelation,
    RemoveRelation,
    SceneEdit,
    SceneException,
    SceneGraph,
    SetAttribute,
    apply_edits,
    evaluate,
)

logger = logging.getLogger(__name__)


class SimulatorException(Exception):
    pass


def lit(text: str, *args: str, negated: bool = False) -> Literal:
    return Literal.make(text, *args, negated=negated)


class EffectRule:
    """Registry of skill physics, keyed by effect name.

    Subclasses declare the literals the physical world needs (`requirements`), the edits of a
    nominal execution (`effects`) and what happens otherwise (`degraded`).
    """

    _registry: ClassVar[dict[str, type["EffectRule"]]] = {}
    name: ClassVar[str]
    arity: ClassVar[int]

    @classmethod
    def register(cls, name: str, arity: int):
        """Register a subclass of EffectRule with the specified name in the _registry."""

        def decorator(subclass):
            subclass.name = name
            subclass.arity = arity
            cls._registry[name] = subclass
            return subclass

        return decorator

    @classmethod
    def lookup(cls, name: str) -> "EffectRule":
        if name not in cls._registry:
            raise SimulatorException("Unknown effect rule: %r" % name)
        return cls._registry[name]()

    @classmethod
    def names(cls) -> list[str]:
        return sorted(cls._registry)

    @abstractmethod
    def requirements(self, args: tuple[str, ...], g: SceneGraph) -> list[Literal]: ...

    @abstractmethod
    def effects(self, args: tuple[str, ...], g: SceneGraph) -> list[SceneEdit]: ...

    def degraded(
        self, args: tuple[str, ...], g: SceneGraph, violated: list[Literal]
    ) -> tuple[Status, list[SceneEdit]]:
        """Default degradation: the skill fails and nothing moves."""
        return Status.Failure, []


def _clear_support(obj: str, g: SceneGraph) -> list[SceneEdit]:
    edits: list[SceneEdit] = []
    if (support := g.support(obj)) is not None and support.predicate != "held":
        edits.append(RemoveRelation(support))
    if (zone := g.zone_of(obj)) is not None:
        edits.append(RemoveRelation(zone))
    return edits


@EffectRule.register("grasp", 1)
class Grasp(EffectRule):
    def requirements(self, args, g):
        (x,) = args
        return [lit("hand_empty"), lit("reachable", x), lit("pickable", x)]

    def effects(self, args, g):
        (x,) = args
        return _clear_support(x, g) + [AddRelation(lit("held", x))]


@EffectRule.register("place_on", 2)
class PlaceOn(EffectRule):
    def requirements(self, args, g):
        return [lit("held", args[0])]

    def effects(self, args, g):
        return [AddRelation(lit("on", *args))]


@EffectRule.register("place_inside", 2)
class PlaceInside(EffectRule):
    """Insertion; an occupied container or a closed drawer leaves the object on top of it."""

    def requirements(self, args, g):
        x, y = args
        needed = [lit("held", x), lit("occupied", y, negated=True)]
        if g.has(y) and g.object(y).cls == "drawer":
            needed.append(lit("opened", y))
        return needed

    def effects(self, args, g):
        return [AddRelation(lit("inside", *args))]

    def degraded(self, args, g, violated):
        if lit("held", args[0]) in violated:
            return Status.Failure, []
        return Status.Success, [AddRelation(lit("on", *args))]


class DrawerRule(EffectRule):
    opened: ClassVar[bool]

    def requirements(self, args, g):
        return [lit("hand_empty"), lit("reachable", args[0])]

    def effects(self, args, g):
        return [SetAttribute(args[0], "opened", self.opened)]


@EffectRule.register("open_drawer", 1)
class OpenDrawer(DrawerRule):
    opened = True


@EffectRule.register("close_drawer", 1)
class CloseDrawer(DrawerRule):
    opened = False


@EffectRule.register("push", 2)
class Push(EffectRule):
    def requirements(self, args, g):
        return [lit("hand_empty"), lit("reachable", args[0])]

    def effects(self, args, g):
        x, z = args
        edits: list[SceneEdit] = []
        if (support := g.support(x)) is not None:
            edits.append(RemoveRelation(support))
        return edits + [AddRelation(lit("at", x, z))]


def physical_violations(skill: GroundSkill, g: SceneGraph) -> list[Literal]:
    """Physical requirements of executing `skill` in `g` that are currently false."""
    rule = EffectRule.lookup(skill.effect)
    violated = []
    for needed in rule.requirements(skill.args, g):
        try:
            if not evaluate(needed, g):
                violated.append(needed)
        except SceneException:
            violated.append(needed)
    return violated


@dataclass(frozen=True)
class Trigger:
    """When a fault fires: pre-execution, after-precheck k, after-execution k or at-tick t."""

    KINDS: ClassVar[tuple[str, ...]] = ("pre-execution", "after-precheck", "after-execution", "at-tick")

    kind: str
    index: int = 0

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SimulatorException("Unknown fault trigger: %r" % self.kind)
        if self.kind != "pre-execution" and self.index < 1:
            raise SimulatorException("Trigger %r needs a positive index, got %r" % (self.kind, self.index))

    def __str__(self) -> str:
        return self.kind if self.kind == "pre-execution" else "%s:%d" % (self.kind, self.index)

    def dict(self) -> dict | str:
        return self.kind if self.kind == "pre-execution" else {self.kind: self.index}


@dataclass(frozen=True)
class OutcomeOverride:
    """Replacement effects for the next execution of one ground skill."""

    skill: str
    edits: tuple[SceneEdit, ...] = ()
    outcome: Status = Status.Success

    def dict(self) -> dict:
        return {
            "skill": self.skill,
            "outcome": self.outcome.value,
            "edits": [e.dict() for e in self.edits],
        }


@dataclass(frozen=True)
class AttributeFlip:
    obj_id: str
    attribute: str

    def dict(self) -> dict:
        return {"id": self.obj_id, "attribute": self.attribute}


@dataclass(frozen=True)
class FaultEvent:
    trigger: Trigger
    edits: tuple[SceneEdit, ...] = ()
    override: OutcomeOverride | None = None
    flips: tuple[AttributeFlip, ...] = ()
    description: str = ""

    def dict(self) -> dict:
        d: dict = {"trigger": self.trigger.dict()}
        if self.description:
            d["description"] = self.description
        if self.edits:
            d["edits"] = [e.dict() for e in self.edits]
        if self.override is not None:
            d["override"] = self.override.dict()
        if self.flips:
            d["flip"] = [f.dict() for f in self.flips]
        return d


@dataclass
class ExecutionResult:
    outcome: Status
    edits: list[SceneEdit] = field(default_factory=list)
    overridden: bool = False
    violated: list[Literal] = field(default_factory=list)


class World:
    """The simulated ground truth for one run.

    Attributes:
        scene (SceneGraph): Current true scene.
        faults (list[FaultEvent]): Schedule, in declaration order.
        fired (set[int]): Indices of events that already fired.
        armed (list[OutcomeOverride]): Overrides waiting for their skill's next execution.
    """

    def __init__(self, scene: SceneGraph, faults: list[FaultEvent] | None = None):
        self.scene = scene
        self.faults = list(faults or [])
        self.fired: set[int] = set()
        self.armed: list[OutcomeOverride] = []

    def _apply(self, edits: list[SceneEdit]) -> bool:
        try:
            self.scene = apply_edits(self.scene, edits)
            return True
        except SceneException as e:
            logger.warning("world rejected edits %s: %s", [x.dict() for x in edits], e)
            return False

    def fire_faults(self, trigger: Trigger) -> list[SceneEdit]:
        """Fire every unfired event scheduled for `trigger`, in declaration order.

        Returns:
            list[SceneEdit]: Edits applied to the scene (overrides are only armed).
        """
        applied: list[SceneEdit] = []
        for idx, event in enumerate(self.faults):
            if idx in self.fired or event.trigger != trigger:
                continue
            self.fired.add(idx)
            edits = list(event.edits)
            for flip in event.flips:
                current = getattr(self.scene.object(flip.obj_id), flip.attribute)
                edits.append(SetAttribute(flip.obj_id, flip.attribute, not current))
            if edits and self._apply(edits):
                applied += edits
            if event.override is not None:
                self.armed.append(event.override)
            logger.info("fault fired at %s: %s", trigger, event.description or event.dict())
        return applied

    def execute(self, skill: GroundSkill) -> ExecutionResult:
        """Run a ground skill against the true scene. Never raises for physical problems: an
        armed override wins, then degraded physics, then nominal effects."""
        for override in self.armed:
            if override.skill == str(skill):
                self.armed.remove(override)
                edits = list(override.edits)
                if not self._apply(edits):
                    edits = []
                logger.info("execute %s: override -> %s", skill, override.outcome.value)
                return ExecutionResult(override.outcome, edits, overridden=True)
        try:
            rule = EffectRule.lookup(skill.effect)
        except SimulatorException as e:
            logger.warning("execute %s: %s", skill, e)
            return ExecutionResult(Status.Failure)
        if len(skill.args) != rule.arity:
            logger.warning("execute %s: effect %r takes %d argument(s)", skill, rule.name, rule.arity)
            return ExecutionResult(Status.Failure)
        violated = physical_violations(skill, self.scene)
        if violated:
            outcome, edits = rule.degraded(skill.args, self.scene, violated)
        else:
            outcome, edits = Status.Success, rule.effects(skill.args, self.scene)
        if edits and not self._apply(edits):
            outcome, edits = Status.Failure, []
        logger.info("execute %s -> %s %s", skill, outcome.value, [str(v) for v in violated])
        return ExecutionResult(outcome, edits, violated=violated)
