"""
Scenario files: one YAML document per task instance.

    name: fig2a
    tags: [pre-detectable]
    objects:
      - {id: blue_peg, class: peg, color: blue, pickable: true}
    relations: [on(black_cube, green_hole)]
    goals: [inside(blue_peg, green_hole)]
    catalog:
      active: [grasp, place_on, place_inside]
      latent: [push]
      overrides: {place_inside: ["~occupied(Y)"]}
      skills: []
    faults:
      - trigger: {after-precheck: 1}
        edits: [{type: add-relation, literal: held(red_cube)}]
    expect: {skill: place_inside}

Errors name the field path and the line it was read from.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from recoverbt.lexer import LexerException, tokenize
from recoverbt.literals import Literal, VocabularyException
from recoverbt.parser import ParserException, parse_literal, parse_literal_tokens
from recoverbt.simulator import (
    AttributeFlip,
    EffectRule,
    FaultEvent,
    OutcomeOverride,
    SimulatorException,
    Trigger,
)
from recoverbt.skills import (
    SkillCatalog,
    SkillException,
    SkillTemplate,
    add_precondition_override,
    builtin_catalog,
)
from recoverbt.tree import Status
from recoverbt.world import SceneEdit, SceneException, SceneGraph, SceneObject

TAGS = ("pre-detectable", "runtime-only", "nominal")
LINE_KEY = "__line__"
ITEM_LINES_KEY = "__item_lines__"
META_KEYS = (LINE_KEY, ITEM_LINES_KEY)


class ScenarioException(Exception):
    pass


class LineLoader(yaml.SafeLoader):
    """SafeLoader that records the 1-based source line of every mapping under `__line__`, and
    the lines of the items of each list value under `__item_lines__`."""

    def construct_mapping(self, node, deep=False):
        mapping = super().construct_mapping(node, deep=deep)
        mapping[LINE_KEY] = node.start_mark.line + 1
        items = {
            key.value: [item.start_mark.line + 1 for item in value.value]
            for key, value in node.value
            if isinstance(key, yaml.ScalarNode) and isinstance(value, yaml.SequenceNode)
        }
        if items:
            mapping[ITEM_LINES_KEY] = items
        return mapping


def strip_lines(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: strip_lines(v) for k, v in value.items() if k not in META_KEYS}
    if isinstance(value, list):
        return [strip_lines(v) for v in value]
    return value


@dataclass(frozen=True)
class Expectation:
    """What a correct recovery looks like for metrics: the skill a reasoner should blame and,
    for missing-capability cases, the skill it should suggest."""

    skill: str | None = None
    requires_skill: str | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    scene: SceneGraph
    goals: tuple[Literal, ...]
    catalog: SkillCatalog
    faults: tuple[FaultEvent, ...] = ()
    tags: tuple[str, ...] = ()
    description: str = ""
    expect: Expectation = field(default_factory=Expectation)
    images: tuple[Path, ...] = ()
    source: Path | None = None

    @property
    def tag(self) -> str:
        return self.tags[0] if self.tags else "nominal"

    @property
    def failure_case(self) -> bool:
        return self.tag in ("pre-detectable", "runtime-only")


class _Reader:
    """Field access with path/line diagnostics."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, path: str, d: Any, message: str, line: int | None = None):
        if line is None and isinstance(d, dict):
            line = d.get(LINE_KEY)
        where = "%s:%s" % (self.source, line) if line else self.source
        raise ScenarioException("%s: %s: %s" % (where, path, message))

    @staticmethod
    def item_line(d: dict, key: str, index: int) -> int | None:
        """Source line of `d[key][index]`, when the document came from a file."""
        lines = d.get(ITEM_LINES_KEY, {}).get(key, [])
        return lines[index] if index < len(lines) else None

    def get(self, d: dict, key: str, path: str, kind: type | tuple, default: Any = ...) -> Any:
        if key not in d:
            if default is ...:
                self.fail(path, d, "missing required field %r" % key)
            return default
        if not isinstance(d[key], kind):
            self.fail("%s.%s" % (path, key), d, "expected %s, got %r" % (getattr(kind, "__name__", kind), d[key]))
        return d[key]

    def literal(self, text: Any, path: str, d: dict, line: int | None = None) -> Literal:
        if not isinstance(text, str):
            self.fail(path, d, "literal must be a string, got %r" % text, line)
        try:
            return parse_literal(text)
        except (LexerException, ParserException, VocabularyException) as e:
            self.fail(path, d, "bad literal %r: %s" % (text, e), line)

    def edit(self, d: Any, path: str, parent: dict) -> SceneEdit:
        if not isinstance(d, dict):
            self.fail(path, parent, "scene edit must be a mapping, got %r" % d)
        try:
            return SceneEdit.fromdict(strip_lines(d))
        except (SceneException, LexerException, ParserException, VocabularyException) as e:
            self.fail(path, d, str(e))

    def trigger(self, value: Any, path: str, d: dict) -> Trigger:
        try:
            if isinstance(value, str):
                return Trigger(value)
            if isinstance(value, dict):
                items = [(k, v) for k, v in value.items() if k not in META_KEYS]
                if len(items) == 1 and isinstance(items[0][1], int):
                    return Trigger(items[0][0], items[0][1])
        except SimulatorException as e:
            self.fail(path, d, str(e))
        self.fail(path, d, "trigger must be 'pre-execution' or {kind: index}, got %r" % strip_lines(value))


def _catalog(r: _Reader, d: dict) -> SkillCatalog:
    builtin = builtin_catalog()
    known = {**builtin.active, **builtin.latent}
    for i, sd in enumerate(r.get(d, "skills", "catalog", list, [])):
        path = "catalog.skills[%d]" % i
        if not isinstance(sd, dict):
            r.fail(path, d, "skill must be a mapping")
        try:
            t = SkillTemplate.fromdict(strip_lines(sd))
            EffectRule.lookup(t.effect)
        except (SkillException, SimulatorException) as e:
            r.fail(path, sd, str(e))
        known[t.name] = t
    custom = [sd["name"] for sd in d.get("skills", [])]
    explicit_active = r.get(d, "active", "catalog", list, None)
    latent_names = r.get(
        d, "latent", "catalog", list, [n for n in builtin.latent if n not in (explicit_active or [])]
    )
    active_names = explicit_active or [n for n in list(builtin.active) + custom if n not in latent_names]
    for name in active_names + latent_names:
        if name not in known:
            r.fail("catalog", d, "unknown skill name %r" % name)
    try:
        catalog = SkillCatalog.of([known[n] for n in active_names], [known[n] for n in latent_names])
    except SkillException as e:
        r.fail("catalog", d, str(e))
    overrides = r.get(d, "overrides", "catalog", dict, {})
    for name, lits in overrides.items():
        if name in META_KEYS:
            continue
        path = "catalog.overrides.%s" % name
        if not isinstance(lits, list):
            r.fail(path, overrides, "expected a list of literals")
        for j, text in enumerate(lits):
            line = r.item_line(overrides, name, j)
            try:
                catalog = add_precondition_override(catalog, name, r.literal(text, "%s[%d]" % (path, j), overrides, line))
            except SkillException as e:
                r.fail("%s[%d]" % (path, j), overrides, str(e), line)
    return catalog


def _skill_call(r: _Reader, text: str, path: str, d: dict) -> str:
    """Normalize a ground skill reference such as `place_inside(blue_peg,green_hole)`."""
    try:
        tokens = tokenize(text)
        call = parse_literal_tokens(tokens)
    except (LexerException, ParserException) as e:
        r.fail(path, d, "bad skill reference %r: %s" % (text, e))
    if tokens or call.negated or not call.is_ground:
        r.fail(path, d, "bad skill reference %r" % text)
    return "%s(%s)" % (call.predicate, ", ".join(call.names))


def _fault(r: _Reader, d: Any, path: str, parent: dict) -> FaultEvent:
    if not isinstance(d, dict):
        r.fail(path, parent, "fault must be a mapping")
    if "trigger" not in d:
        r.fail(path, d, "missing required field 'trigger'")
    trigger = r.trigger(d["trigger"], path + ".trigger", d)
    edits = tuple(r.edit(e, "%s.edits[%d]" % (path, i), d) for i, e in enumerate(r.get(d, "edits", path, list, [])))
    override = None
    if (od := r.get(d, "override", path, dict, None)) is not None:
        skill = r.get(od, "skill", path + ".override", str)
        outcome = r.get(od, "outcome", path + ".override", str, "success")
        if outcome not in ("success", "failure"):
            r.fail(path + ".override.outcome", od, "expected success or failure, got %r" % outcome)
        override = OutcomeOverride(
            skill=_skill_call(r, skill, path + ".override.skill", od),
            edits=tuple(
                r.edit(e, "%s.override.edits[%d]" % (path, i), od)
                for i, e in enumerate(r.get(od, "edits", path + ".override", list, []))
            ),
            outcome=Status(outcome),
        )
    flips = tuple(
        AttributeFlip(
            r.get(f, "id", "%s.flip[%d]" % (path, i), str),
            r.get(f, "attribute", "%s.flip[%d]" % (path, i), str),
        )
        for i, f in enumerate(r.get(d, "flip", path, list, []))
    )
    if not (edits or override or flips):
        r.fail(path, d, "fault has no effect")
    return FaultEvent(trigger, edits, override, flips, str(d.get("description", "")))


def scenario_fromdict(d: Any, source: str = "<scenario>", base: Path | None = None) -> Scenario:
    """Validate a loaded scenario document (with or without `__line__` keys).

    Raises:
        ScenarioException: On any schema violation, with field path and line.
    """
    r = _Reader(source)
    if not isinstance(d, dict):
        raise ScenarioException("%s: scenario must be a mapping" % source)
    name = r.get(d, "name", "scenario", str)
    tags = r.get(d, "tags", "scenario", list, ["nominal"])
    for i, tag in enumerate(tags):
        if tag not in TAGS:
            r.fail("tags[%d]" % i, d, "unknown tag %r (expected one of %s)" % (tag, ", ".join(TAGS)), r.item_line(d, "tags", i))

    objects = []
    for i, od in enumerate(r.get(d, "objects", "scenario", list)):
        if not isinstance(od, dict):
            r.fail("objects[%d]" % i, d, "object must be a mapping")
        try:
            objects.append(SceneObject.fromdict(strip_lines(od)))
        except SceneException as e:
            r.fail("objects[%d]" % i, od, str(e))
    relations = [
        r.literal(t, "relations[%d]" % i, d, r.item_line(d, "relations", i))
        for i, t in enumerate(r.get(d, "relations", "scenario", list, []))
    ]
    try:
        scene = SceneGraph.build(objects, relations)
    except SceneException as e:
        r.fail("relations", d, str(e))

    goals = [
        r.literal(t, "goals[%d]" % i, d, r.item_line(d, "goals", i))
        for i, t in enumerate(r.get(d, "goals", "scenario", list))
    ]
    if not goals:
        r.fail("goals", d, "at least one goal is required")
    for i, goal in enumerate(goals):
        if not goal.is_ground:
            r.fail("goals[%d]" % i, d, "goal %s must be ground" % goal, r.item_line(d, "goals", i))
        unknown = [n for n in goal.names if not scene.has(n)]
        if unknown:
            r.fail("goals[%d]" % i, d, "goal %s names unknown objects %r" % (goal, unknown), r.item_line(d, "goals", i))

    catalog = _catalog(r, r.get(d, "catalog", "scenario", dict, {}))
    faults = tuple(_fault(r, f, "faults[%d]" % i, d) for i, f in enumerate(r.get(d, "faults", "scenario", list, [])))
    expect = r.get(d, "expect", "scenario", dict, {})
    images = tuple((base / p if base else Path(p)) for p in r.get(d, "images", "scenario", list, []))
    return Scenario(
        name=name,
        scene=scene,
        goals=tuple(goals),
        catalog=catalog,
        faults=faults,
        tags=tuple(tags),
        description=str(d.get("description", "")).strip(),
        expect=Expectation(expect.get("skill"), expect.get("requires_skill")),
        images=images,
        source=Path(source) if source != "<scenario>" else None,
    )


def load_scenario(path: Path | str) -> Scenario:
    """Load and validate a scenario file.

    Raises:
        ScenarioException: On unreadable YAML or any schema violation.
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioException("Could not find scenario file: %s" % path)
    try:
        d = yaml.load(path.read_text(), Loader=LineLoader)
    except yaml.YAMLError as e:
        raise ScenarioException("%s: invalid YAML: %s" % (path, e))
    return scenario_fromdict(d, str(path), path.parent)


def load_suite(directory: Path | str) -> list[Scenario]:
    """Every `*.yml` scenario in a directory, sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ScenarioException("Not a scenario directory: %s" % directory)
    return [load_scenario(p) for p in sorted(directory.glob("*.yml"))]
