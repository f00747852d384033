import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

from recoverbt.format import render
from recoverbt.literals import Literal
from recoverbt.skills import GroundSkill, SkillCatalog
from recoverbt.tree import BTNode
from recoverbt.verdict import CheckKind, Verdict
from recoverbt.world import SceneGraph, serialize_scene

logger = logging.getLogger(__name__)


class ReasonerException(Exception):
    """A check the reasoner could not answer.

    Attributes:
        variant (str): transport, malformed-response, schema-violation or budget-exceeded.
    """

    VARIANTS = ("transport", "malformed-response", "schema-violation", "budget-exceeded")

    def __init__(self, variant: str, detail: str):
        if variant not in self.VARIANTS:
            raise ValueError("Unknown reasoner error variant: %r" % variant)
        super().__init__("%s: %s" % (variant, detail))
        self.variant = variant
        self.detail = detail

    def dict(self) -> dict:
        return {"variant": self.variant, "detail": self.detail}


def catalog_listing(catalog: SkillCatalog) -> str:
    """One block per skill: signature, preconditions, postconditions; latent skills last."""
    lines = []
    for t in catalog.templates():
        lines.append("%s: %s" % (t.signature(), t.description or "no description"))
        lines.append("  pre:  %s" % ", ".join(map(str, t.preconditions)) if t.preconditions else "  pre:  (none)")
        lines.append("  post: %s" % ", ".join(map(str, t.postconditions)))
    if catalog.latent:
        lines.append("executable but not yet available to the planner:")
        for name in sorted(catalog.latent):
            t = catalog.latent[name]
            lines.append("  %s: %s" % (t.signature(), t.description or "no description"))
    return "\n".join(lines)


@dataclass
class ReasonerInput:
    """Everything a check shows the reasoner. Text views are produced by the canonical
    serializers on demand; the structured values are kept for rule-based reasoners.

    Attributes:
        kind (CheckKind): Which of the five checks is asked.
        root (BTNode): Current tree.
        scene (SceneGraph): The pipeline's belief at the time of the check.
        catalog (SkillCatalog): Active/latent skills with overrides applied.
        goals (tuple[Literal, ...]): Task goals.
        history (list[dict]): Most recent history entries, oldest first.
        pending (GroundSkill | None): Skill about to run, or just executed for postcondition checks.
        before (SceneGraph | None): Belief before the execution (postcondition checks).
        unachievable (Literal | None): Literal the planner found no achiever for (skill checks).
        images (tuple[Path, ...]): Scenario image attachments.
    """

    kind: CheckKind
    root: BTNode
    scene: SceneGraph
    catalog: SkillCatalog
    goals: tuple[Literal, ...]
    history: list[dict] = field(default_factory=list)
    pending: GroundSkill | None = None
    before: SceneGraph | None = None
    unachievable: Literal | None = None
    images: tuple[Path, ...] = ()

    @property
    def tree_text(self) -> str:
        return render(self.root)

    @property
    def scene_text(self) -> str:
        return serialize_scene(self.scene)

    @property
    def catalog_text(self) -> str:
        return catalog_listing(self.catalog)


class Reasoner(ABC):
    """The contract behind all five checks."""

    name: str = "reasoner"

    @abstractmethod
    def judge(self, data: ReasonerInput) -> Verdict:
        """Answer one check.

        Raises:
            ReasonerException: When no well-formed verdict can be produced.
        """


class CountingReasoner(Reasoner):
    """Wraps a reasoner, counting queries and enforcing an optional per-run budget."""

    def __init__(self, inner: Reasoner, max_queries: int | None = None):
        self.inner = inner
        self.name = inner.name
        self.max_queries = max_queries
        self.queries = 0

    def judge(self, data: ReasonerInput) -> Verdict:
        if self.max_queries is not None and self.queries >= self.max_queries:
            raise ReasonerException("budget-exceeded", "query budget of %d spent" % self.max_queries)
        self.queries += 1
        verdict = self.inner.judge(data)
        if verdict.kind != data.kind:
            raise ReasonerException(
                "schema-violation", "asked %s, answered %s" % (data.kind.value, verdict.kind.value)
            )
        logger.debug("%s %s -> detected=%s", self.name, data.kind.value, verdict.failure_detected)
        return verdict
