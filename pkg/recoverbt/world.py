"""
The scene graph world model: objects with attributes, base relations between them, and the
edits and diffs that move it from one revision to the next.

The graph is immutable; `apply_edit` and `apply_diff` return new revisions. Derived predicates
(`occupied`, `hand_empty`) are evaluated on demand and never stored.
"""

import logging
from abc import abstractmethod
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, ClassVar, Iterable

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

from recoverbt.literals import Literal, PredicateKind, Vocabulary
from recoverbt.parser import parse_literal

logger = logging.getLogger(__name__)


class SceneException(Exception):
    pass


OBJECT_CLASSES = ("cube", "peg", "hole", "drawer", "bin", "zone")
ATTRIBUTES = ("pickable", "container", "reachable", "opened")


@dataclass(frozen=True, order=True)
class SceneObject:
    id: str
    cls: str
    color: str = "none"
    pickable: bool = False
    container: bool = False
    reachable: bool = True
    opened: bool = False

    def dict(self) -> dict:
        return {
            "id": self.id,
            "class": self.cls,
            "color": self.color,
            "pickable": self.pickable,
            "container": self.container,
            "reachable": self.reachable,
            "opened": self.opened,
        }

    @classmethod
    def fromdict(cls, d: dict) -> "SceneObject":
        if d.get("class") not in OBJECT_CLASSES:
            raise SceneException("Unknown object class: %r" % d.get("class"))
        if not isinstance(d.get("id"), str) or not d["id"]:
            raise SceneException("Object id must be a non-empty string: %r" % d.get("id"))
        return cls(
            id=d["id"],
            cls=d["class"],
            color=str(d.get("color", "none")),
            pickable=bool(d.get("pickable", False)),
            container=bool(d.get("container", False)),
            reachable=bool(d.get("reachable", True)),
            opened=bool(d.get("opened", False)),
        )

    def describe(self) -> str:
        flags = " ".join("%s=%s" % (a, str(getattr(self, a)).lower()) for a in ATTRIBUTES)
        return "object %s class=%s color=%s %s" % (self.id, self.cls, self.color, flags)


def check_invariants(objects: dict[str, SceneObject], relations: Iterable[Literal]) -> None:
    """Raise SceneException unless the object/relation sets form a valid scene graph."""
    supports: dict[str, Literal] = {}
    zones: dict[str, Literal] = {}
    holder: str | None = None
    for rel in relations:
        if Vocabulary.kind(rel.predicate) != PredicateKind.Base:
            raise SceneException("Only base relations can be stored: %s" % rel)
        if rel.negated or not rel.is_ground:
            raise SceneException("Stored relations must be positive and ground: %s" % rel)
        for name in rel.names:
            if name not in objects:
                raise SceneException("Relation %s names unknown object %r" % (rel, name))
        subject = rel.names[0]
        if rel.predicate in Vocabulary.SUPPORT:
            if subject in supports:
                raise SceneException(
                    "Support exclusivity violated for %r: %s and %s"
                    % (subject, supports[subject], rel)
                )
            supports[subject] = rel
            if rel.predicate == "held":
                if holder is not None:
                    raise SceneException(
                        "Single gripper: %r and %r both held" % (holder, subject)
                    )
                holder = subject
            elif rel.names[1] == subject:
                raise SceneException("Object cannot support itself: %s" % rel)
        elif rel.predicate == "at":
            if objects[rel.names[1]].cls != "zone":
                raise SceneException("at/2 must name a zone: %s" % rel)
            if subject in zones:
                raise SceneException("Object %r is at two zones" % subject)
            zones[subject] = rel

    for start in supports:
        seen = {start}
        cursor = supports.get(start)
        while cursor is not None and cursor.predicate != "held":
            parent = cursor.names[1]
            if parent in seen:
                raise SceneException("Support cycle through %r" % parent)
            seen.add(parent)
            cursor = supports.get(parent)


@dataclass(frozen=True)
class SceneGraph:
    """Objects plus ground base relations at a given revision.

    Attributes:
        objects (tuple[SceneObject, ...]): Scene objects ordered by id.
        relations (frozenset[Literal]): Positive ground base literals.
        revision (int): Monotone counter, incremented by every accepted edit.
    """

    objects: tuple[SceneObject, ...] = ()
    relations: frozenset[Literal] = frozenset()
    revision: int = 0

    @classmethod
    def build(
        cls,
        objects: Iterable[SceneObject],
        relations: Iterable[Literal] = (),
        revision: int = 0,
    ) -> "SceneGraph":
        """Construct a validated graph.

        Raises:
            SceneException: When ids collide or any invariant fails.
        """
        by_id: dict[str, SceneObject] = {}
        for obj in objects:
            if obj.id in by_id:
                raise SceneException("Duplicate object id: %r" % obj.id)
            by_id[obj.id] = obj
        rels = frozenset(relations)
        check_invariants(by_id, rels)
        return cls(tuple(sorted(by_id.values())), rels, revision)

    @cached_property
    def index(self) -> dict[str, SceneObject]:
        return {o.id: o for o in self.objects}

    @property
    def ids(self) -> list[str]:
        return [o.id for o in self.objects]

    def has(self, obj_id: str) -> bool:
        return obj_id in self.index

    def object(self, obj_id: str) -> SceneObject:
        if obj_id not in self.index:
            raise SceneException("Unknown object id: %r" % obj_id)
        return self.index[obj_id]

    def holding(self) -> str | None:
        for rel in self.relations:
            if rel.predicate == "held":
                return rel.names[0]
        return None

    def support(self, obj_id: str) -> Literal | None:
        for rel in self.relations:
            if rel.predicate in Vocabulary.SUPPORT and rel.names[0] == obj_id:
                return rel
        return None

    def zone_of(self, obj_id: str) -> Literal | None:
        for rel in self.relations:
            if rel.predicate == "at" and rel.names[0] == obj_id:
                return rel
        return None

    def occupants(self, container: str) -> list[tuple[str, Literal]]:
        """Objects resting on or inside `container`, sorted by id, with the relation used."""
        return sorted(
            (rel.names[0], rel)
            for rel in self.relations
            if rel.predicate in ("on", "inside") and rel.names[1] == container
        )

    def same_state(self, other: "SceneGraph") -> bool:
        """Equality of object and relation sets, ignoring the revision counter."""
        return self.objects == other.objects and self.relations == other.relations

    def dict(self) -> dict:
        return {
            "revision": self.revision,
            "objects": [o.dict() for o in self.objects],
            "relations": [str(r) for r in sorted(self.relations)],
        }

    @classmethod
    def fromdict(cls, d: dict) -> "SceneGraph":
        return cls.build(
            map(SceneObject.fromdict, d.get("objects", [])),
            map(parse_literal, d.get("relations", [])),
            int(d.get("revision", 0)),
        )


class SceneEdit:
    """Trait and registry for scene edits, mirroring their dict isomorphism by a "type" key.

    Class vars:
    - _registry: A mapping of string -> type[SceneEdit], looked up by the "type" key of a dict.
    """

    _registry: ClassVar[dict[str, type["SceneEdit"]]] = {}
    type: ClassVar[str]

    @classmethod
    def register(cls, name: str):
        """Register a subclass of SceneEdit with the specified name in the _registry."""

        def decorator(subclass):
            subclass.type = name
            cls._registry[name] = subclass
            return subclass

        return decorator

    @abstractmethod
    def apply(self, objects: dict[str, SceneObject], relations: set[Literal]) -> None:
        """Mutate working copies of the graph contents, raising SceneException if impossible."""

    @abstractmethod
    def dict(self) -> dict: ...

    @classmethod
    def fromdict(cls, d: dict) -> "SceneEdit":
        """Construct a SceneEdit from its dict representation.

        Raises:
            SceneException: When the "type" key is not registered or the payload is malformed.
        """
        if d.get("type") not in cls._registry:
            raise SceneException("Unrecognized scene edit type: %r" % d.get("type"))
        try:
            return cls._registry[d["type"]]._fromdict(d)
        except KeyError as e:
            raise SceneException("Scene edit %r is missing field %s" % (d["type"], e))

    @classmethod
    @abstractmethod
    def _fromdict(cls, d: dict) -> Self: ...


@SceneEdit.register("add-object")
@dataclass(frozen=True)
class AddObject(SceneEdit):
    obj: SceneObject

    def apply(self, objects, relations):
        if self.obj.id in objects:
            raise SceneException("Object already exists: %r" % self.obj.id)
        objects[self.obj.id] = self.obj

    def dict(self) -> dict:
        return {"type": self.type, "object": self.obj.dict()}

    @classmethod
    def _fromdict(cls, d):
        return cls(SceneObject.fromdict(d["object"]))


@SceneEdit.register("remove-object")
@dataclass(frozen=True)
class RemoveObject(SceneEdit):
    obj_id: str

    def apply(self, objects, relations):
        if self.obj_id not in objects:
            raise SceneException("Unknown object id: %r" % self.obj_id)
        del objects[self.obj_id]
        for rel in [r for r in relations if self.obj_id in r.names]:
            relations.discard(rel)

    def dict(self) -> dict:
        return {"type": self.type, "id": self.obj_id}

    @classmethod
    def _fromdict(cls, d):
        return cls(d["id"])


@SceneEdit.register("add-relation")
@dataclass(frozen=True)
class AddRelation(SceneEdit):
    """Add a base relation. A new support (held/on/inside) replaces the subject's previous
    support, and a new at/2 replaces the previous zone."""

    literal: Literal

    def apply(self, objects, relations):
        lit = Vocabulary.validate(self.literal)
        if Vocabulary.kind(lit.predicate) != PredicateKind.Base or lit.negated:
            raise SceneException("Only positive base relations can be added: %s" % lit)
        for name in lit.names:
            if name not in objects:
                raise SceneException("Relation %s names unknown object %r" % (lit, name))
        subject = lit.names[0]
        if lit.predicate in Vocabulary.SUPPORT:
            if lit.predicate == "held":
                for rel in relations:
                    if rel.predicate == "held" and rel.names[0] != subject:
                        raise SceneException(
                            "Single gripper: %r already held" % rel.names[0]
                        )
            replaced = {
                r
                for r in relations
                if r.predicate in Vocabulary.SUPPORT and r.names[0] == subject
            }
        else:
            replaced = {r for r in relations if r.predicate == "at" and r.names[0] == subject}
        relations.difference_update(replaced)
        relations.add(lit)

    def dict(self) -> dict:
        return {"type": self.type, "literal": str(self.literal)}

    @classmethod
    def _fromdict(cls, d):
        return cls(parse_literal(d["literal"]))


@SceneEdit.register("remove-relation")
@dataclass(frozen=True)
class RemoveRelation(SceneEdit):
    literal: Literal

    def apply(self, objects, relations):
        if self.literal not in relations:
            raise SceneException("Relation not present: %s" % self.literal)
        relations.discard(self.literal)

    def dict(self) -> dict:
        return {"type": self.type, "literal": str(self.literal)}

    @classmethod
    def _fromdict(cls, d):
        return cls(parse_literal(d["literal"]))


@SceneEdit.register("set-attribute")
@dataclass(frozen=True)
class SetAttribute(SceneEdit):
    obj_id: str
    attribute: str
    value: Any = True

    def apply(self, objects, relations):
        if self.obj_id not in objects:
            raise SceneException("Unknown object id: %r" % self.obj_id)
        if self.attribute not in ATTRIBUTES + ("color",):
            raise SceneException("Unknown attribute: %r" % self.attribute)
        value = str(self.value) if self.attribute == "color" else bool(self.value)
        objects[self.obj_id] = replace(objects[self.obj_id], **{self.attribute: value})

    def dict(self) -> dict:
        return {"type": self.type, "id": self.obj_id, "attribute": self.attribute, "value": self.value}

    @classmethod
    def _fromdict(cls, d):
        return cls(d["id"], d["attribute"], d.get("value", True))


def apply_edit(g: SceneGraph, e: SceneEdit) -> SceneGraph:
    """Apply one edit, returning the next revision.

    Raises:
        SceneException: When the edit is malformed or would break an invariant; `g` is unchanged.
    """
    objects = dict(g.index)
    relations = set(g.relations)
    e.apply(objects, relations)
    result = SceneGraph.build(objects.values(), relations, g.revision + 1)
    logger.debug("scene r%d -> r%d: %s", g.revision, result.revision, e.dict())
    return result


def apply_edits(g: SceneGraph, edits: Iterable[SceneEdit]) -> SceneGraph:
    """Apply a list of edits atomically: either all are accepted or `g` is returned untouched
    by raising on the first rejection."""
    for e in edits:
        g = apply_edit(g, e)
    return g


def evaluate(lit: Literal, g: SceneGraph) -> bool:
    """Truth of a ground literal in `g`.

    Raises:
        SceneException: When the literal names an unknown object or is not ground.
    """
    if not lit.is_ground:
        raise SceneException("Cannot evaluate non-ground literal: %s" % lit)
    for name in lit.names:
        g.object(name)
    match Vocabulary.kind(lit.predicate):
        case PredicateKind.Base:
            value = lit.positive() in g.relations
        case PredicateKind.Attribute:
            value = bool(getattr(g.object(lit.names[0]), lit.predicate))
        case PredicateKind.Derived if lit.predicate == "occupied":
            value = bool(g.occupants(lit.names[0]))
        case PredicateKind.Derived:
            value = g.holding() is None
    return value != lit.negated


def ground_derived_negation(lit: Literal, g: SceneGraph) -> list[Literal]:
    """Ground base literals whose conjunction is equivalent to `lit` in the current scene.

    `~occupied(c)` becomes one negated on/inside literal per current occupant, `hand_empty`
    becomes `~held(o)` for the held object; both are empty when already satisfied.
    """
    if lit.predicate == "occupied" and lit.negated:
        return [rel.negate() for _, rel in g.occupants(lit.names[0])]
    if lit.predicate == "hand_empty" and not lit.negated:
        held = g.holding()
        return [] if held is None else [Literal.make("held", held, negated=True)]
    raise SceneException("Not a derived negation: %s" % lit)


@dataclass(frozen=True)
class SceneDiff:
    """Difference between two revisions of a scene graph.

    `objects_changed` holds the after-state of objects whose attributes differ.
    """

    added: frozenset[Literal] = frozenset()
    removed: frozenset[Literal] = frozenset()
    objects_added: tuple[SceneObject, ...] = ()
    objects_removed: tuple[str, ...] = ()
    objects_changed: tuple[SceneObject, ...] = ()
    from_revision: int = 0
    to_revision: int = 0

    @property
    def is_empty(self) -> bool:
        return not (
            self.added
            or self.removed
            or self.objects_added
            or self.objects_removed
            or self.objects_changed
        )

    def dict(self) -> dict:
        d: dict[str, Any] = {"from": self.from_revision, "to": self.to_revision}
        if self.added:
            d["added"] = [str(r) for r in sorted(self.added)]
        if self.removed:
            d["removed"] = [str(r) for r in sorted(self.removed)]
        if self.objects_added:
            d["objects_added"] = [o.dict() for o in self.objects_added]
        if self.objects_removed:
            d["objects_removed"] = list(self.objects_removed)
        if self.objects_changed:
            d["objects_changed"] = [o.dict() for o in self.objects_changed]
        return d

    @classmethod
    def fromdict(cls, d: dict) -> "SceneDiff":
        return cls(
            added=frozenset(map(parse_literal, d.get("added", []))),
            removed=frozenset(map(parse_literal, d.get("removed", []))),
            objects_added=tuple(map(SceneObject.fromdict, d.get("objects_added", []))),
            objects_removed=tuple(d.get("objects_removed", [])),
            objects_changed=tuple(map(SceneObject.fromdict, d.get("objects_changed", []))),
            from_revision=int(d.get("from", 0)),
            to_revision=int(d.get("to", 0)),
        )


def diff(before: SceneGraph, after: SceneGraph) -> SceneDiff:
    """Compute the diff taking `before` to `after`."""
    b, a = before.index, after.index
    return SceneDiff(
        added=after.relations - before.relations,
        removed=before.relations - after.relations,
        objects_added=tuple(a[i] for i in sorted(a.keys() - b.keys())),
        objects_removed=tuple(sorted(b.keys() - a.keys())),
        objects_changed=tuple(a[i] for i in sorted(a.keys() & b.keys()) if a[i] != b[i]),
        from_revision=before.revision,
        to_revision=after.revision,
    )


def apply_diff(g: SceneGraph, d: SceneDiff) -> SceneGraph:
    """Apply a diff, yielding the graph at `d.to_revision`.

    Raises:
        SceneException: When the diff does not fit `g` or the result breaks an invariant.
    """
    objects = dict(g.index)
    relations = set(g.relations)
    if not d.removed <= relations:
        raise SceneException("Diff removes absent relations: %s" % sorted(d.removed - relations))
    relations -= d.removed
    for obj_id in d.objects_removed:
        if objects.pop(obj_id, None) is None:
            raise SceneException("Diff removes unknown object %r" % obj_id)
    for obj in d.objects_added:
        if obj.id in objects:
            raise SceneException("Diff adds existing object %r" % obj.id)
        objects[obj.id] = obj
    for obj in d.objects_changed:
        if obj.id not in objects:
            raise SceneException("Diff changes unknown object %r" % obj.id)
        objects[obj.id] = obj
    relations |= d.added
    return SceneGraph.build(objects.values(), relations, d.to_revision)


def diff_edits(d: SceneDiff) -> list[SceneEdit]:
    """Express a diff as an edit list (removals first) for incremental application."""
    edits: list[SceneEdit] = [RemoveRelation(r) for r in sorted(d.removed)]
    edits += [RemoveObject(i) for i in d.objects_removed]
    edits += [AddObject(o) for o in d.objects_added]
    for obj in d.objects_changed:
        edits += [SetAttribute(obj.id, a, getattr(obj, a)) for a in ATTRIBUTES + ("color",)]
    edits += [AddRelation(r) for r in sorted(d.added)]
    return edits


def serialize_scene(g: SceneGraph) -> str:
    """Canonical text: a header, one line per object (by id), one line per relation (sorted)."""
    lines = ["scene revision=%d objects=%d relations=%d" % (g.revision, len(g.objects), len(g.relations))]
    lines += [o.describe() for o in g.objects]
    lines += [str(r) for r in sorted(g.relations)]
    return "\n".join(lines)
