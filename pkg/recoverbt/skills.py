"""
Parameterized skills, the active/latent catalog, achiever search and symbolic progression.

A template such as

    place_inside(X: cube|peg, Y: hole|drawer|bin)
        pre  held(X)
        post inside(X, Y), hand_empty

is grounded by a binding {X: blue_peg, Y: green_hole}. Catalogs are values: every mutating
operation returns a new catalog.
"""

import logging
from dataclasses import dataclass, field, replace
from itertools import permutations
from typing import Iterable, Mapping

from recoverbt.lexer import LexerException
from recoverbt.literals import (
    Binding,
    Literal,
    PredicateKind,
    Term,
    TermKind,
    Vocabulary,
    VocabularyException,
    unify,
)
from recoverbt.parser import ParserException, parse_literal
from recoverbt.world import (
    AddRelation,
    RemoveRelation,
    SceneException,
    SceneGraph,
    SetAttribute,
    apply_edit,
    evaluate,
)

logger = logging.getLogger(__name__)

MOVABLE = ("cube", "peg")
CONTAINERS = ("hole", "drawer", "bin")
ZONES = ("zone",)


class SkillException(Exception):
    pass


def _literals(texts: Iterable[str], where: str) -> tuple[Literal, ...]:
    try:
        return tuple(parse_literal(t) for t in texts)
    except (LexerException, ParserException, VocabularyException) as e:
        raise SkillException("Bad literal in %s: %s" % (where, e))


@dataclass(frozen=True)
class Param:
    """A skill parameter with its object-class filter (empty means any class)."""

    name: str
    classes: tuple[str, ...] = ()

    def admits(self, cls: str) -> bool:
        return not self.classes or cls in self.classes


@dataclass(frozen=True)
class SkillTemplate:
    name: str
    params: tuple[Param, ...]
    preconditions: tuple[Literal, ...]
    postconditions: tuple[Literal, ...]
    effect: str
    description: str = ""

    def __post_init__(self):
        if not self.postconditions:
            raise SkillException("Skill %r must declare at least one postcondition" % self.name)
        names = self.param_names
        if len(set(names)) != len(names):
            raise SkillException("Skill %r repeats a parameter name" % self.name)
        for lit in self.preconditions + self.postconditions:
            try:
                Vocabulary.validate(lit)
            except VocabularyException as e:
                raise SkillException("Skill %r: %s" % (self.name, e))
            if unknown := [v for v in lit.variables if v not in names]:
                raise SkillException(
                    "Skill %r: variable(s) %r in %s are not parameters" % (self.name, unknown, lit)
                )
        for lit in self.preconditions:
            if lit.has_wildcard:
                raise SkillException("Skill %r: wildcard in precondition %s" % (self.name, lit))

    @property
    def param_names(self) -> list[str]:
        return [p.name for p in self.params]

    def signature(self) -> str:
        return "%s(%s)" % (self.name, ", ".join(self.param_names))

    def dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "params": {p.name: list(p.classes) for p in self.params},
            "preconditions": [str(lit) for lit in self.preconditions],
            "postconditions": [str(lit) for lit in self.postconditions],
            "effect": self.effect,
        }

    @classmethod
    def fromdict(cls, d: dict) -> "SkillTemplate":
        """Build a template from its scenario-file form.

        Raises:
            SkillException: On a missing name, malformed literal or invariant violation.
        """
        if not isinstance(name := d.get("name"), str) or not name:
            raise SkillException("Skill needs a name: %r" % d)
        params = d.get("params") or {}
        if not isinstance(params, dict):
            raise SkillException("Skill %r params must be a mapping: %r" % (name, params))
        return cls(
            name=name,
            params=tuple(Param(p, tuple(c or ())) for p, c in params.items()),
            preconditions=_literals(d.get("preconditions", []), "%s preconditions" % name),
            postconditions=_literals(d.get("postconditions", []), "%s postconditions" % name),
            effect=str(d.get("effect", name)),
            description=str(d.get("description", "")),
        )


@dataclass(frozen=True)
class GroundSkill:
    template: str
    args: tuple[str, ...]
    binding: tuple[tuple[str, str], ...]
    preconditions: tuple[Literal, ...]
    postconditions: tuple[Literal, ...]
    effect: str

    @property
    def bindings(self) -> Binding:
        return dict(self.binding)

    def __str__(self) -> str:
        return "%s(%s)" % (self.template, ", ".join(self.args))

    def with_postcondition(self, lit: Literal) -> "GroundSkill":
        if lit in self.postconditions:
            return self
        return replace(self, postconditions=self.postconditions + (lit,))

    def dict(self) -> dict:
        return {
            "skill": str(self),
            "binding": dict(self.binding),
            "preconditions": [str(lit) for lit in self.preconditions],
            "postconditions": [str(lit) for lit in self.postconditions],
            "effect": self.effect,
        }

    @classmethod
    def fromdict(cls, d: dict) -> "GroundSkill":
        name = str(d["skill"]).split("(", 1)[0].strip()
        binding = dict(d.get("binding", {}))
        return cls(
            template=name,
            args=tuple(binding.values()),
            binding=tuple(binding.items()),
            preconditions=_literals(d.get("preconditions", []), "%s preconditions" % name),
            postconditions=_literals(d.get("postconditions", []), "%s postconditions" % name),
            effect=str(d.get("effect", name)),
        )


def instantiate(t: SkillTemplate, b: Mapping[str, str], g: SceneGraph | None = None) -> GroundSkill:
    """Substitute a binding into a template.

    Postconditions still holding a wildcard after substitution describe side effects and are left
    out of the ground skill.

    Args:
        t (SkillTemplate): Template to ground.
        b (Mapping[str, str]): Parameter -> object id.
        g (SceneGraph, optional): When given, bound objects must exist and pass class filters.

    Raises:
        SkillException: On a missing or ill-typed binding entry.
    """
    for p in t.params:
        if p.name not in b:
            raise SkillException("Binding for %s misses parameter %r" % (t.signature(), p.name))
        value = b[p.name]
        if Term.of(value).kind != TermKind.Constant:
            raise SkillException("Parameter %r must bind an object id, got %r" % (p.name, value))
        if g is not None:
            try:
                cls = g.object(value).cls
            except SceneException as e:
                raise SkillException(str(e))
            if not p.admits(cls):
                raise SkillException(
                    "Parameter %r of %r does not admit %r (class %s)" % (p.name, t.name, value, cls)
                )
    pre = tuple(dict.fromkeys(lit.substitute(b) for lit in t.preconditions))
    post = tuple(
        dict.fromkeys(
            ground for lit in t.postconditions if not (ground := lit.substitute(b)).has_wildcard
        )
    )
    return GroundSkill(
        template=t.name,
        args=tuple(b[p] for p in t.param_names),
        binding=tuple((p, b[p]) for p in t.param_names),
        preconditions=pre,
        postconditions=post,
        effect=t.effect,
    )


@dataclass(frozen=True)
class SuggestedSkillSpec:
    name: str
    description: str = ""
    preconditions: tuple[str, ...] = ()
    postconditions: tuple[str, ...] = ()

    def dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "preconditions": list(self.preconditions),
            "postconditions": list(self.postconditions),
        }

    @classmethod
    def fromdict(cls, d: dict) -> "SuggestedSkillSpec":
        return cls(
            name=str(d.get("name", "")),
            description=str(d.get("description", "")),
            preconditions=tuple(map(str, d.get("preconditions", []) or [])),
            postconditions=tuple(map(str, d.get("postconditions", []) or [])),
        )


@dataclass(frozen=True)
class SkillCatalog:
    """Active and latent templates plus task-scoped precondition overrides.

    Attributes:
        active (dict[str, SkillTemplate]): Skills the planner may use.
        latent (dict[str, SkillTemplate]): Executable skills unlocked only by admit_latent.
        overrides (dict[str, tuple[Literal, ...]]): Extra preconditions per skill name, over the
            skill's parameters; they are prepended to the template's own preconditions.
    """

    active: dict[str, SkillTemplate] = field(default_factory=dict)
    latent: dict[str, SkillTemplate] = field(default_factory=dict)
    overrides: dict[str, tuple[Literal, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if both := self.active.keys() & self.latent.keys():
            raise SkillException("Skills both active and latent: %r" % sorted(both))

    @classmethod
    def of(cls, active: Iterable[SkillTemplate], latent: Iterable[SkillTemplate] = ()) -> "SkillCatalog":
        return cls({t.name: t for t in active}, {t.name: t for t in latent})

    def template(self, name: str) -> SkillTemplate:
        """The active template `name` with its overrides applied."""
        if name not in self.active:
            raise SkillException("Unknown active skill: %r" % name)
        t = self.active[name]
        if extra := self.overrides.get(name):
            pre = tuple(dict.fromkeys(extra + t.preconditions))
            return replace(t, preconditions=pre)
        return t

    def ground(self, name: str, b: Mapping[str, str], g: SceneGraph | None = None) -> GroundSkill:
        return instantiate(self.template(name), b, g)

    def templates(self) -> list[SkillTemplate]:
        return [self.template(name) for name in sorted(self.active)]

    def dict(self) -> dict:
        return {
            "active": sorted(self.active),
            "latent": sorted(self.latent),
            "overrides": {
                name: [str(lit) for lit in lits] for name, lits in sorted(self.overrides.items())
            },
        }


def lift(lit: Literal, skill: GroundSkill) -> Literal:
    """Rewrite constants bound by `skill` back into its parameter names.

    `~occupied(green_hole)` for `place_inside(blue_peg, green_hole)` becomes `~occupied(Y)`.
    """
    reverse = {value: param for param, value in skill.binding}
    return Literal(
        lit.predicate,
        tuple(Term.var(reverse[t.name]) if t.is_ground and t.name in reverse else t for t in lit.args),
        lit.negated,
    )


def add_precondition_override(catalog: SkillCatalog, skill_name: str, lit: Literal) -> SkillCatalog:
    """Record an extra precondition for every future instantiation of `skill_name`.

    Raises:
        SkillException: On an unknown skill, a vocabulary violation or a non-parameter variable.
    """
    if skill_name not in catalog.active:
        raise SkillException("Cannot override unknown skill %r" % skill_name)
    try:
        Vocabulary.validate(lit)
    except VocabularyException as e:
        raise SkillException("Rejected precondition for %r: %s" % (skill_name, e))
    if lit.has_wildcard:
        raise SkillException("Rejected precondition for %r: wildcard in %s" % (skill_name, lit))
    params = catalog.active[skill_name].param_names
    if unknown := [v for v in lit.variables if v not in params]:
        raise SkillException("Rejected precondition %s: %r are not parameters of %r" % (lit, unknown, skill_name))
    current = catalog.overrides.get(skill_name, ())
    if lit in current:
        return catalog
    logger.info("override: %s gains precondition %s", skill_name, lit)
    return replace(catalog, overrides={**catalog.overrides, skill_name: current + (lit,)})


def admit_latent(spec: SuggestedSkillSpec, catalog: SkillCatalog) -> SkillCatalog:
    """Move the latent template named by a suggestion into the active set.

    Raises:
        SkillException: When no latent template has that name or the suggestion's literals fall
            outside the vocabulary.
    """
    _literals(spec.preconditions, "suggested %s preconditions" % spec.name)
    _literals(spec.postconditions, "suggested %s postconditions" % spec.name)
    if spec.name not in catalog.latent:
        raise SkillException("Capability absent: no latent skill named %r" % spec.name)
    latent = dict(catalog.latent)
    t = latent.pop(spec.name)
    logger.info("admitted latent skill %s", t.signature())
    return replace(catalog, active={**catalog.active, t.name: t}, latent=latent)


def _static_ok(t: SkillTemplate, b: Binding, g: SceneGraph) -> bool:
    for lit in t.preconditions:
        if lit.predicate in Vocabulary.STATIC_ATTRIBUTES and not evaluate(lit.substitute(b), g):
            return False
    return True


def _complete(t: SkillTemplate, partial: Binding, g: SceneGraph) -> list[Binding]:
    """Enumerate full, distinct-valued, class-respecting extensions of a partial binding."""
    for p in t.params:
        if p.name in partial and not (g.has(partial[p.name]) and p.admits(g.object(partial[p.name]).cls)):
            return []
    if len(set(partial.values())) != len(partial):
        return []
    free = [p for p in t.params if p.name not in partial]
    used = set(partial.values())
    pools = [[o.id for o in g.objects if p.admits(o.cls) and o.id not in used] for p in free]
    candidates = sorted({v for pool in pools for v in pool})
    results: list[Binding] = []
    for values in permutations(candidates, len(free)):
        if all(v in pool for v, pool in zip(values, pools)):
            results.append({**partial, **{p.name: v for p, v in zip(free, values)}})
    return results


def achievers(goal: Literal, catalog: SkillCatalog, g: SceneGraph) -> list[GroundSkill]:
    """Ground active skills with a postcondition unifying with `goal`.

    Free parameters are enumerated over scene objects; distinct parameters bind distinct objects
    and bindings that falsify a static attribute precondition are dropped. Ordered by template
    name, then binding.

    Args:
        goal (Literal): Ground goal literal (derived negations must already be grounded).
        catalog (SkillCatalog): Catalog whose active set is searched.
        g (SceneGraph): Scene used for enumeration and static pruning.

    Returns:
        list[GroundSkill]: Possibly empty.
    """
    found: dict[str, tuple[tuple, GroundSkill]] = {}
    for t in catalog.templates():
        for post in t.postconditions:
            if (partial := unify(post, goal)) is None:
                continue
            for b in _complete(t, partial, g):
                if not _static_ok(t, b, g):
                    continue
                skill = instantiate(t, b)
                if post.has_wildcard:
                    skill = skill.with_postcondition(goal)
                if (prior := found.get(str(skill))) is not None:
                    skill = prior[1].with_postcondition(goal) if post.has_wildcard else prior[1]
                found[str(skill)] = ((t.name, skill.args), skill)
    result = [skill for _, skill in sorted(found.values(), key=lambda kv: kv[0])]
    logger.debug("achievers of %s: %s", goal, [str(s) for s in result])
    return result


def progress(g: SceneGraph, skill: GroundSkill) -> SceneGraph:
    """Apply a skill's declared postconditions to a scene, STRIPS style: deletions, then additions.

    Raises:
        SkillException: When a postcondition cannot be applied to `g`.
    """
    negatives = [lit for lit in skill.postconditions if lit.negated or lit.predicate == "hand_empty"]
    positives = [lit for lit in skill.postconditions if lit not in negatives]
    try:
        for lit in negatives:
            for edit in _removals(lit, g):
                g = apply_edit(g, edit)
        for lit in positives:
            match Vocabulary.kind(lit.predicate):
                case PredicateKind.Base:
                    if lit not in g.relations:
                        g = apply_edit(g, AddRelation(lit))
                case PredicateKind.Attribute:
                    g = apply_edit(g, SetAttribute(lit.names[0], lit.predicate, True))
                case _:
                    raise SkillException("Cannot progress derived postcondition %s" % lit)
    except SceneException as e:
        raise SkillException("Progressing %s: %s" % (skill, e))
    return g


def _removals(lit: Literal, g: SceneGraph) -> list:
    match Vocabulary.kind(lit.predicate):
        case PredicateKind.Base:
            positive = lit.positive()
            return [RemoveRelation(r) for r in sorted(g.relations) if unify(positive, r) is not None]
        case PredicateKind.Attribute:
            return [SetAttribute(lit.names[0], lit.predicate, False)]
        case PredicateKind.Derived if lit.predicate == "hand_empty":
            held = g.holding()
            return [] if held is None else [RemoveRelation(Literal.make("held", held))]
        case _:
            return [RemoveRelation(rel) for _, rel in g.occupants(lit.names[0])]


def _template(name, params, pre, post, effect=None, description="") -> SkillTemplate:
    return SkillTemplate(
        name=name,
        params=tuple(Param(p, c) for p, c in params),
        preconditions=tuple(map(parse_literal, pre)),
        postconditions=tuple(map(parse_literal, post)),
        effect=effect or name,
        description=description,
    )


def builtin_catalog() -> SkillCatalog:
    """Tabletop catalog: five active skills and `push` held back as latent."""
    active = [
        _template(
            "grasp",
            [("X", MOVABLE + CONTAINERS)],
            ["hand_empty", "reachable(X)", "pickable(X)"],
            ["held(X)", "~on(X, _)", "~inside(X, _)"],
            description="Pick up object X with the gripper.",
        ),
        _template(
            "place_on",
            [("X", MOVABLE), ("Y", ZONES)],
            ["held(X)"],
            ["on(X, Y)", "~held(X)"],
            description="Put the held object X down on zone Y.",
        ),
        _template(
            "place_inside",
            [("X", MOVABLE), ("Y", CONTAINERS)],
            ["held(X)"],
            ["inside(X, Y)", "hand_empty"],
            description="Insert the held object X into container Y.",
        ),
        _template(
            "open_drawer",
            [("D", ("drawer",))],
            ["hand_empty", "reachable(D)"],
            ["opened(D)"],
            description="Pull drawer D open.",
        ),
        _template(
            "close_drawer",
            [("D", ("drawer",))],
            ["hand_empty", "reachable(D)"],
            ["~opened(D)"],
            description="Push drawer D shut.",
        ),
    ]
    latent = [
        _template(
            "push",
            [("X", MOVABLE), ("Z", ZONES)],
            ["hand_empty", "reachable(X)"],
            ["at(X, Z)", "~on(X, _)"],
            description="Slide object X off its support into zone Z without grasping it.",
        ),
    ]
    return SkillCatalog.of(active, latent)
