"""
Behavior Tree nodes and the reactive tick.

    type: sequence
    id: n1
    children:
    - type: fallback
      id: n2
      children:
      - type: condition
        id: n3
        literal: inside(blue_peg, green_hole)
        expanded: true
      - ...

Actions never run a skill during a tick: the first Action reached registers itself as the
pending action and reports Running, and the execution loop resolves it.
"""

import logging
from abc import abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, ClassVar, Iterator

from recoverbt.literals import Literal
from recoverbt.parser import parse_literal
from recoverbt.skills import GroundSkill
from recoverbt.world import SceneException, SceneGraph, evaluate

logger = logging.getLogger(__name__)


class TreeException(Exception):
    pass


class Status(Enum):
    Success = "success"
    Failure = "failure"
    Running = "running"


class DictIsomorphism:
    """Trait for defining a dict-isomorphism for a class."""

    @abstractmethod
    def dict(self) -> dict: ...

    @classmethod
    @abstractmethod
    def fromdict(cls, d: "dict"): ...


@dataclass
class TickContext:
    """Per-tick inputs and outputs of the engine.

    Attributes:
        scene (SceneGraph): Belief the condition nodes are evaluated against.
        marks (set[Literal]): Literals forced to fail regardless of the scene.
        pending (Action | None): The action selected by the last tick, if any.
        failed (list[tuple[int, Condition]]): Failed conditions with their depth, in tick order.
    """

    scene: SceneGraph
    marks: set[Literal] = field(default_factory=set)
    pending: "Action | None" = None
    failed: list[tuple[int, "Condition"]] = field(default_factory=list)


class BTNode(DictIsomorphism):
    """BTNode is a factory registry managing the dict isomorphism of tree nodes, using the correct
    class for the "type" key in the dict.

    Class vars:
    - _registry: A mapping of string -> type[BTNode], looked up by the "type" key of a dict.

    Attributes:
    - id: str (unique within a tree, "n<int>")
    - children: list[BTNode] (control nodes only)
    """

    _registry: ClassVar[dict[str, type["BTNode"]]] = {}
    type: ClassVar[str]
    id: str
    children: list["BTNode"]

    @classmethod
    def register(cls, name: str):
        """Register a subclass of BTNode with the specified name in the _registry."""

        def decorator(subclass):
            subclass.type = name
            cls._registry[name] = subclass
            return subclass

        return decorator

    @abstractmethod
    def tick(self, ctx: TickContext, depth: int) -> Status: ...

    def walk(self) -> Iterator["BTNode"]:
        """Pre-order traversal."""
        yield self
        for child in self.children:
            yield from child.walk()

    def find(self, node_id: str) -> "BTNode":
        for node in self.walk():
            if node.id == node_id:
                return node
        raise TreeException("Unknown node id: %r" % node_id)

    @classmethod
    def fromdict(cls, d: "dict") -> "BTNode":
        """Construct a BTNode from its dict representation.

        Raises:
            TreeException: When the "type" key is not registered.
        """
        if d.get("type") not in cls._registry:
            raise TreeException("Unrecognized type in dict BTNode: %r" % d.get("type"))
        return cls._registry[d["type"]]._fromdict(d)

    @classmethod
    @abstractmethod
    def _fromdict(cls, d: dict) -> "BTNode": ...

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BTNode):
            return NotImplemented
        return self.dict() == other.dict()


class ControlNode(BTNode):
    def __init__(self, id: str, children: list[BTNode]):
        if not children:
            raise TreeException("%s %s needs at least one child" % (self.type, id))
        self.id = id
        self.children = list(children)

    def with_children(self, children: list[BTNode]) -> "ControlNode":
        return type(self)(self.id, children)

    def dict(self) -> dict:
        return {"type": self.type, "id": self.id, "children": [c.dict() for c in self.children]}

    @classmethod
    def _fromdict(cls, d):
        return cls(d["id"], [BTNode.fromdict(c) for c in d.get("children", [])])


@BTNode.register("sequence")
class Sequence(ControlNode):
    def tick(self, ctx, depth):
        for child in self.children:
            if (status := child.tick(ctx, depth + 1)) != Status.Success:
                return status
        return Status.Success


@BTNode.register("fallback")
class Fallback(ControlNode):
    def tick(self, ctx, depth):
        for child in self.children:
            if (status := child.tick(ctx, depth + 1)) != Status.Failure:
                return status
        return Status.Failure


@BTNode.register("condition")
class Condition(BTNode):
    literal: Literal
    expanded: bool

    def __init__(self, id: str, literal: Literal, expanded: bool = False):
        self.id = id
        self.literal = literal
        self.expanded = expanded
        self.children = []

    def tick(self, ctx, depth):
        try:
            holds = evaluate(self.literal, ctx.scene) and self.literal not in ctx.marks
        except SceneException as e:
            logger.warning("condition %s %s cannot be evaluated: %s", self.id, self.literal, e)
            holds = False
        if holds:
            return Status.Success
        ctx.failed.append((depth, self))
        return Status.Failure

    def dict(self) -> dict:
        d: dict[str, Any] = {"type": self.type, "id": self.id, "literal": str(self.literal)}
        if self.expanded:
            d["expanded"] = True
        return d

    @classmethod
    def _fromdict(cls, d):
        return cls(d["id"], parse_literal(d["literal"]), bool(d.get("expanded", False)))


@BTNode.register("action")
class Action(BTNode):
    skill: GroundSkill

    def __init__(self, id: str, skill: GroundSkill):
        self.id = id
        self.skill = skill
        self.children = []

    def tick(self, ctx, depth):
        if ctx.pending is not None and ctx.pending is not self:
            raise TreeException("Second pending action %s in one tick" % self.id)
        ctx.pending = self
        return Status.Running

    def dict(self) -> dict:
        return {"type": self.type, "id": self.id, "skill": self.skill.dict()}

    @classmethod
    def _fromdict(cls, d):
        return cls(d["id"], GroundSkill.fromdict(d["skill"]))


def tick(root: BTNode, ctx: TickContext) -> Status:
    """Tick the tree once from the root, memoryless.

    Args:
        root (BTNode): Tree to tick.
        ctx (TickContext): Scene and marks in; pending action and failed conditions out. Outputs
            from a previous tick are cleared first.

    Returns:
        Status: Root status. `ctx.pending` is set exactly when it is Running.
    """
    ctx.pending = None
    ctx.failed = []
    status = root.tick(ctx, 0)
    if status != Status.Running:
        ctx.pending = None
    logger.debug("tick -> %s (pending=%s)", status.value, ctx.pending and ctx.pending.skill)
    return status


def node_ids(root: BTNode) -> list[str]:
    return [n.id for n in root.walk()]


def next_id(root: BTNode) -> int:
    """Smallest integer above every "n<int>" id in the tree."""
    numbers = [int(i[1:]) for i in node_ids(root) if i[:1] == "n" and i[1:].isdigit()]
    return max(numbers, default=0) + 1


def check_tree(root: BTNode) -> None:
    """Raise TreeException if node ids collide."""
    seen: set[str] = set()
    for node_id in node_ids(root):
        if node_id in seen:
            raise TreeException("Duplicate node id: %r" % node_id)
        seen.add(node_id)


def parent_of(root: BTNode, node_id: str) -> tuple[ControlNode, int] | None:
    """The parent of `node_id` and the node's index in it, or None for the root."""
    if root.id == node_id:
        return None
    for node in root.walk():
        for idx, child in enumerate(node.children):
            if child.id == node_id:
                return node, idx  # type: ignore[return-value]
    raise TreeException("Unknown node id: %r" % node_id)


def replace_node(root: BTNode, node_id: str, subtree: BTNode) -> BTNode:
    """Swap the node `node_id` (and its descendants) for `subtree`.

    Nodes off the path to `node_id` are shared with the input tree.

    Raises:
        TreeException: On an unknown id or when `subtree` reuses an id of the remaining tree.
    """
    target = root.find(node_id)
    removed = set(node_ids(target))
    remaining = set(node_ids(root)) - removed
    if collisions := remaining & set(node_ids(subtree)):
        raise TreeException("Subtree ids collide with the tree: %r" % sorted(collisions))
    check_tree(subtree)
    return _rebuild(root, node_id, subtree)


def _rebuild(node: BTNode, node_id: str, subtree: BTNode) -> BTNode:
    if node.id == node_id:
        return subtree
    if not isinstance(node, ControlNode):
        return node
    children = [_rebuild(c, node_id, subtree) for c in node.children]
    if all(a is b for a, b in zip(children, node.children)):
        return node
    return node.with_children(children)


def actions(root: BTNode) -> list[Action]:
    return [n for n in root.walk() if isinstance(n, Action)]
