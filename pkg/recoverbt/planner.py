"""
Backchaining planner: grows a Behavior Tree from its goal conditions through skill pre- and
postconditions, repairs it when conditions fail at runtime, and prunes redundant checks.

A failed condition `inside(blue_peg, green_hole)` is expanded into

    Fallback [n2]
      Condition* [n3] inside(blue_peg, green_hole)
      Sequence [n4]
        Condition [n5] held(blue_peg)
        Action [n6] place_inside(blue_peg, green_hole)

Derived conditions (`~occupied(c)`, `hand_empty`) are first grounded against the current scene
into base literals followed by the original condition as an expanded guard.
"""

import logging
from dataclasses import dataclass

from recoverbt.literals import Literal, Vocabulary
from recoverbt.skills import GroundSkill, SkillCatalog, SkillException, achievers, progress
from recoverbt.tree import (
    Action,
    BTNode,
    Condition,
    ControlNode,
    Fallback,
    Sequence,
    Status,
    TickContext,
    next_id,
    parent_of,
    replace_node,
    tick,
)
from recoverbt.world import SceneGraph, ground_derived_negation

logger = logging.getLogger(__name__)


class PlannerException(Exception):
    pass


class NoAchiever(PlannerException):
    def __init__(self, literal: Literal):
        super().__init__("No achiever for %s" % literal)
        self.literal = literal


class ExpansionBudgetExhausted(PlannerException):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    max_expansions: int = 25
    prune_redundant: bool = True
    max_dry_run_ticks: int = 60

    def __post_init__(self):
        if self.max_expansions < 1:
            raise PlannerException("max_expansions must be >= 1, got %r" % self.max_expansions)
        if self.max_dry_run_ticks < 1:
            raise PlannerException("max_dry_run_ticks must be >= 1, got %r" % self.max_dry_run_ticks)

    @classmethod
    def fromdict(cls, d: dict) -> "PlannerConfig":
        return cls(
            max_expansions=int(d.get("max_expansions", 25)),
            prune_redundant=bool(d.get("prune_redundant", True)),
            max_dry_run_ticks=int(d.get("max_dry_run_ticks", 60)),
        )


@dataclass(frozen=True)
class PlanEvent:
    """Outcome of one replanning step: expanded, no-achiever, budget-exhausted or stuck."""

    kind: str
    literal: Literal | None = None
    node_id: str | None = None
    achievers: tuple[str, ...] = ()

    def dict(self) -> dict:
        d: dict = {"event": self.kind}
        if self.literal is not None:
            d["literal"] = str(self.literal)
        if self.node_id is not None:
            d["node"] = self.node_id
        if self.achievers:
            d["achievers"] = list(self.achievers)
        return d


def plan_initial(goals: list[Literal]) -> BTNode:
    """Root Sequence of unexpanded goal conditions, duplicates removed in order.

    Raises:
        PlannerException: On an empty goal list or a non-ground goal.
    """
    goals = list(dict.fromkeys(goals))
    if not goals:
        raise PlannerException("Cannot plan for an empty goal list")
    for goal in goals:
        Vocabulary.validate(goal)
        if not goal.is_ground:
            raise PlannerException("Goal %s is not ground" % goal)
    return Sequence("n1", [Condition("n%d" % i, goal) for i, goal in enumerate(goals, start=2)])


def is_derived_guard(node: BTNode) -> bool:
    return isinstance(node, Condition) and node.expanded and Vocabulary.is_derived_negation(node.literal)


def goal_literal(node: BTNode) -> Literal | None:
    """The literal a subtree is responsible for establishing, if it has a single one."""
    match node:
        case Condition():
            return node.literal
        case Fallback():
            return goal_literal(node.children[0])
        case Sequence() if is_derived_guard(node.children[-1]):
            return node.children[-1].literal
    return None


def expansion_subtree(
    node: Condition, catalog: SkillCatalog, g: SceneGraph, first_id: int
) -> tuple[BTNode, tuple[str, ...]]:
    """Build the subtree replacing a failed condition.

    Raises:
        NoAchiever: When a derived condition grounds to nothing or no active skill achieves the
            literal.
    """
    ids = iter(range(first_id, first_id + 10_000))

    def new_id() -> str:
        return "n%d" % next(ids)

    lit = node.literal
    if Vocabulary.is_derived_negation(lit):
        grounded = ground_derived_negation(lit, g)
        if not grounded:
            raise NoAchiever(lit)
        children: list[BTNode] = [Condition(new_id(), l) for l in grounded]
        children.append(Condition(node.id, lit, expanded=True))
        return Sequence(new_id(), children), tuple(str(l) for l in grounded)

    found = achievers(lit, catalog, g)
    if not found:
        raise NoAchiever(lit)
    branches: list[BTNode] = [Condition(node.id, lit, expanded=True)]
    for skill in found:
        steps: list[BTNode] = [Condition(new_id(), p) for p in skill.preconditions]
        steps.append(Action(new_id(), skill))
        branches.append(Sequence(new_id(), steps))
    return Fallback(new_id(), branches), tuple(str(s) for s in found)


def _can_succeed(node: BTNode) -> bool:
    match node:
        case Action():
            return False
        case Sequence():
            return all(_can_succeed(c) for c in node.children)
        case Fallback():
            return any(_can_succeed(c) for c in node.children)
    return True


def _goals(node: BTNode) -> set[Literal]:
    """Literals known true whenever `node` returns Success."""
    match node:
        case Condition():
            return {node.literal}
        case Sequence():
            return set().union(*(_goals(c) for c in node.children))
        case Fallback():
            possible = [_goals(c) for c in node.children if _can_succeed(c)]
            return set.intersection(*possible) if possible else set()
    return set()


def _guaranteed(node: BTNode, known: set[Literal]) -> bool:
    match node:
        case Condition():
            return node.literal in known
        case Fallback():
            return _guaranteed(node.children[0], known)
        case Sequence():
            return all(_guaranteed(c, known) for c in node.children)
    return False


def _prune(node: BTNode, known: set[Literal], is_root: bool) -> BTNode:
    if not isinstance(node, ControlNode):
        return node
    children: list[BTNode] = []
    if isinstance(node, Sequence):
        known = set(known)
        for child in node.children:
            if _guaranteed(child, known):
                continue
            child = _prune(child, known, False)
            known |= _goals(child)
            children.append(child)
        if not children:
            children = [node.children[0]]
    else:
        children = [_prune(c, known, False) for c in node.children]
    if len(children) == 1 and not is_root:
        return children[0]
    if all(a is b for a, b in zip(children, node.children)) and len(children) == len(node.children):
        return node
    return node.with_children(children)


def prune_redundant(root: BTNode) -> BTNode:
    """Drop conditions already guaranteed by an earlier sibling in an enclosing Sequence and
    collapse single-child control nodes below the root. Tick results are unchanged."""
    return _prune(root, set(), True)


class ReactivePlanner:
    """Stateful expansion driver for one plan: counts expansions against the budget and keeps
    the event log.

    Attributes:
        config (PlannerConfig): Budget and pruning switch.
        expansions (int): Expansions since the last `reset`.
        events (list[PlanEvent]): Every event emitted, across resets.
    """

    def __init__(self, config: PlannerConfig | None = None):
        self.config = config or PlannerConfig()
        self.expansions = 0
        self.total_expansions = 0
        self.events: list[PlanEvent] = []
        self.last_achievers: tuple[str, ...] = ()

    def reset(self):
        """Start the expansion budget over for a fresh plan."""
        self.expansions = 0

    def _emit(self, event: PlanEvent) -> PlanEvent:
        self.events.append(event)
        log = logger.debug if event.kind == "expanded" else logger.info
        log("planner: %s %s", event.kind, event.literal or "")
        return event

    def expand(self, root: BTNode, node: Condition, catalog: SkillCatalog, g: SceneGraph) -> BTNode:
        """Replace a failed condition with its expansion subtree.

        Raises:
            ExpansionBudgetExhausted: When the budget for this plan is spent.
            NoAchiever: When nothing can establish the condition.
        """
        if self.expansions >= self.config.max_expansions:
            raise ExpansionBudgetExhausted(
                "Expansion budget of %d exhausted at %s" % (self.config.max_expansions, node.literal)
            )
        subtree, self.last_achievers = expansion_subtree(node, catalog, g, next_id(root))
        root = replace_node(root, node.id, subtree)
        self.expansions += 1
        self.total_expansions += 1
        if self.config.prune_redundant:
            root = prune_redundant(root)
        return root

    def candidates(self, root: BTNode, ctx: TickContext) -> list[Condition]:
        """Failed conditions eligible for expansion, deepest first then in tick order."""
        eligible = [
            (depth, order, node)
            for order, (depth, node) in enumerate(ctx.failed)
            if not node.expanded or is_derived_guard(node)
        ]
        eligible.sort(key=lambda t: (-t[0], t[1]))
        return [node for _, _, node in eligible]

    def replan_step(
        self, root: BTNode, ctx: TickContext, catalog: SkillCatalog, g: SceneGraph
    ) -> tuple[BTNode, PlanEvent]:
        """Expand the deepest, leftmost failed condition of the last tick.

        Returns:
            tuple[BTNode, PlanEvent]: The (possibly unchanged) tree and what happened.
        """
        found = self.candidates(root, ctx)
        if not found:
            return root, self._emit(PlanEvent("stuck"))
        node = found[0]
        try:
            root = self.expand(root, node, catalog, g)
        except NoAchiever as e:
            return root, self._emit(PlanEvent("no-achiever", e.literal, node.id))
        except ExpansionBudgetExhausted:
            return root, self._emit(PlanEvent("budget-exhausted", node.literal, node.id))
        return root, self._emit(PlanEvent("expanded", node.literal, node.id, self.last_achievers))

    def expansion_pass(
        self, root: BTNode, catalog: SkillCatalog, g: SceneGraph
    ) -> tuple[BTNode, list[PlanEvent]]:
        """Grow the tree by a symbolic dry run: tick, expand on failure and progress the scene by
        the pending skill's declared postconditions, until Success or a non-expansion event."""
        events: list[PlanEvent] = []
        for _ in range(self.config.max_dry_run_ticks):
            ctx = TickContext(g)
            match tick(root, ctx):
                case Status.Success:
                    break
                case Status.Running:
                    try:
                        g = progress(g, ctx.pending.skill)
                    except SkillException as e:
                        logger.info("dry run stopped: %s", e)
                        break
                case Status.Failure:
                    root, event = self.replan_step(root, ctx, catalog, g)
                    events.append(event)
                    if event.kind != "expanded":
                        break
        return root, events

    def refresh_preconditions(
        self, root: BTNode, skill_name: str, catalog: SkillCatalog
    ) -> tuple[BTNode, list[Literal]]:
        """Re-ground every action of `skill_name` against the catalog and insert condition nodes
        for preconditions its enclosing Sequence does not check yet.

        Raises:
            PlannerException: When no action of that skill is in the tree.

        Returns:
            tuple[BTNode, list[Literal]]: The new tree and the inserted literals.
        """
        targets = [n for n in root.walk() if isinstance(n, Action) and n.skill.template == skill_name]
        if not targets:
            raise PlannerException("No action of skill %r in the tree" % skill_name)
        inserted: list[Literal] = []
        for action in targets:
            fresh = catalog.ground(skill_name, action.skill.bindings)
            for extra in action.skill.postconditions:
                fresh = fresh.with_postcondition(extra)
            located = parent_of(root, action.id)
            siblings = located[0].children if located and isinstance(located[0], Sequence) else [action]
            checked = {lit for c in siblings if (lit := goal_literal(c)) is not None}
            missing = [p for p in fresh.preconditions if p not in checked]
            first = next_id(root)
            new_conds: list[BTNode] = [Condition("n%d" % (first + i), p) for i, p in enumerate(missing)]
            new_action = Action(action.id, fresh)
            if located and isinstance(located[0], Sequence):
                parent = located[0]
                children = [new_action if c is action else c for c in parent.children]
                root = replace_node(root, parent.id, parent.with_children(new_conds + children))
            elif new_conds:
                wrapper = Sequence("n%d" % (first + len(new_conds)), new_conds + [new_action])
                root = replace_node(root, action.id, wrapper)
            else:
                root = replace_node(root, action.id, new_action)
            inserted += missing
        logger.info("refreshed %s: inserted %s", skill_name, [str(l) for l in inserted])
        return root, inserted


def ground_skills(root: BTNode) -> list[GroundSkill]:
    """Distinct ground skills of the tree's actions, in tree order."""
    seen: dict[str, GroundSkill] = {}
    for node in root.walk():
        if isinstance(node, Action):
            seen.setdefault(str(node.skill), node.skill)
    return list(seen.values())
