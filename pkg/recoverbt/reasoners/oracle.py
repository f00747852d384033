"""
Ground-truth reasoner: answers every check with rules evaluated against the simulator's true
scene. It sees the world as it is now, never the faults scheduled for later.
"""

import logging

from recoverbt.literals import Literal, Vocabulary, unify
from recoverbt.planner import PlannerConfig, ReactivePlanner
from recoverbt.reasoners.base import Reasoner, ReasonerInput
from recoverbt.simulator import World, physical_violations
from recoverbt.skills import GroundSkill, SkillCatalog, SuggestedSkillSpec, achievers, instantiate
from recoverbt.tree import Status, TickContext, tick
from recoverbt.verdict import (
    AddPrecondition,
    AddSkill,
    CheckKind,
    Identification,
    MarkUnsatisfied,
    ReportSkillFailure,
    Verdict,
)
from recoverbt.world import SceneGraph, evaluate

logger = logging.getLogger(__name__)


def describe(lit: Literal, g: SceneGraph) -> str:
    """Plain-language reason why `lit` is false in `g`."""
    match lit.predicate, lit.negated:
        case "occupied", True:
            occupants = ", ".join(obj for obj, _ in g.occupants(lit.names[0]))
            return "%s is occupied by %s" % (lit.names[0], occupants)
        case "opened", False:
            return "%s is closed" % lit.names[0]
        case "hand_empty", False:
            return "the gripper is holding %s" % g.holding()
        case "pickable", False:
            return "%s is not pickable" % lit.names[0]
        case "reachable", False:
            return "%s is out of reach" % lit.names[0]
        case ("held" | "inside" | "on" | "at"), False:
            support = g.support(lit.names[0])
            where = "held" if support and support.predicate == "held" else str(support) if support else "unsupported"
            return "%s does not hold, observed %s" % (lit, where)
    return "%s does not hold" % lit


def spec_of(catalog: SkillCatalog, name: str) -> SuggestedSkillSpec:
    t = catalog.latent[name]
    return SuggestedSkillSpec(
        name=t.name,
        description=t.description,
        preconditions=tuple(map(str, t.preconditions)),
        postconditions=tuple(map(str, t.postconditions)),
    )


def missing_capability(lit: Literal, catalog: SkillCatalog, g: SceneGraph) -> Verdict | None:
    """AddSkill for a latent skill able to achieve `lit`, blaming the active skill a static
    attribute rules out (e.g. grasp of a non-pickable object)."""
    unlocked = SkillCatalog({**catalog.active, **catalog.latent}, {}, catalog.overrides)
    candidates = [s for s in achievers(lit, unlocked, g) if s.template in catalog.latent]
    if not candidates:
        return None
    suggested = candidates[0].template
    blamed, culprit, cause = suggested, str(lit), "no available skill achieves %s" % lit
    for t in catalog.templates():
        for post in t.postconditions:
            if (b := unify(post, lit)) is None or set(b) != set(t.param_names):
                continue
            blocked = [
                p.substitute(b)
                for p in t.preconditions
                if p.predicate in Vocabulary.STATIC_ATTRIBUTES and not evaluate(p.substitute(b), g)
            ]
            if blocked:
                skill = instantiate(t, b)
                blamed, culprit = t.name, str(blocked[0])
                cause = "%s, so %s cannot achieve %s" % (describe(blocked[0], g), skill, lit)
                break
        if blamed != suggested:
            break
    return Verdict.detected(
        CheckKind.SkillSuggest,
        Identification(blamed, culprit, cause),
        AddSkill(spec_of(catalog, suggested)),
    )


class OracleReasoner(Reasoner):
    """Deterministic stand-in for the vision-language reasoner.

    Args:
        world (World): Simulator whose current true scene the rules read.
    """

    name = "oracle"

    def __init__(self, world: World):
        self.world = world

    @property
    def truth(self) -> SceneGraph:
        return self.world.scene

    def judge(self, data: ReasonerInput) -> Verdict:
        match data.kind:
            case CheckKind.PreExecution:
                return self.pre_execution(data)
            case CheckKind.PreconditionVerify:
                return self.verify(data, data.pending.preconditions, CheckKind.PreconditionVerify)
            case CheckKind.PostconditionVerify:
                return self.verify(data, data.pending.postconditions, CheckKind.PostconditionVerify)
            case CheckKind.PreconditionSuggest:
                return self.suggest_precondition(data.pending, CheckKind.PreconditionSuggest)
            case CheckKind.SkillSuggest:
                return self.suggest_skill(data)

    def verify(self, data: ReasonerInput, literals: tuple[Literal, ...], kind: CheckKind) -> Verdict:
        violated = [lit for lit in literals if not evaluate(lit, self.truth)]
        if not violated:
            return Verdict.clear(kind)
        identification = Identification(
            data.pending.template, str(violated[0]), describe(violated[0], self.truth)
        )
        if kind == CheckKind.PreconditionVerify:
            return Verdict.detected(kind, identification, MarkUnsatisfied(tuple(violated)))
        return Verdict.detected(kind, identification, ReportSkillFailure())

    def suggest_precondition(self, skill: GroundSkill, kind: CheckKind, g: SceneGraph | None = None) -> Verdict:
        g = g or self.truth
        uncovered = [v for v in physical_violations(skill, g) if v not in skill.preconditions]
        if not uncovered:
            return Verdict.clear(kind)
        lit = uncovered[0]
        return Verdict.detected(
            kind,
            Identification(skill.template, str(lit), describe(lit, g)),
            AddPrecondition(skill.template, lit),
        )

    def suggest_skill(self, data: ReasonerInput) -> Verdict:
        if data.unachievable is not None:
            return missing_capability(data.unachievable, data.catalog, self.truth) or Verdict.clear(
                CheckKind.SkillSuggest
            )
        if data.pending is not None:
            static = [
                v for v in physical_violations(data.pending, self.truth) if v.predicate in Vocabulary.STATIC_ATTRIBUTES
            ]
            for post in data.pending.postconditions if static else ():
                if verdict := missing_capability(post, data.catalog, self.truth):
                    return verdict
        return Verdict.clear(CheckKind.SkillSuggest)

    def pre_execution(self, data: ReasonerInput) -> Verdict:
        """Dry-run the plan against the true scene with simulator physics, growing it like the
        runtime planner would, and report the first failure current knowledge misses."""
        kind = CheckKind.PreExecution
        scratch = World(self.truth)
        planner = ReactivePlanner(PlannerConfig(prune_redundant=False))
        root = data.root
        for _ in range(planner.config.max_dry_run_ticks):
            ctx = TickContext(scratch.scene)
            match tick(root, ctx):
                case Status.Success:
                    return Verdict.clear(kind)
                case Status.Running:
                    skill = ctx.pending.skill
                    verdict = self.suggest_precondition(skill, kind, scratch.scene)
                    if verdict.failure_detected:
                        return verdict
                    if scratch.execute(skill).outcome != Status.Success:
                        return Verdict.clear(kind)
                case Status.Failure:
                    root, event = planner.replan_step(root, ctx, data.catalog, scratch.scene)
                    if event.kind == "no-achiever":
                        found = missing_capability(event.literal, data.catalog, scratch.scene)
                        if found is None:
                            logger.warning("oracle: nothing can achieve %s", event.literal)
                            return Verdict.clear(kind)
                        return Verdict.detected(kind, found.identification, found.correction)
                    if event.kind != "expanded":
                        return Verdict.clear(kind)
        return Verdict.clear(kind)
