"""
Recovery pipeline: plans a scenario's task, optionally verifies the plan before execution, then
ticks the tree against the simulator while monitoring every skill activation.

Modes:
    pre       plan, pre-execution check, then open-loop execution (the belief follows the
              executed skills' declared postconditions).
    reactive  plan online; every activation runs precondition verification, precondition
              suggestion and skill suggestion, every execution runs postcondition verification.
    combined  both; skills whose plan passed the pre-execution check skip skill suggestion.

The pipeline owns the belief scene graph. With runtime monitoring it is kept in sync with the
simulator's truth by applying the observed diff as edits.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import yaml

from recoverbt.format import render
from recoverbt.literals import Literal
from recoverbt.planner import PlannerConfig, PlannerException, ReactivePlanner, ground_skills, plan_initial
from recoverbt.reasoners.base import CountingReasoner, Reasoner, ReasonerException, ReasonerInput
from recoverbt.scenario import Scenario
from recoverbt.simulator import Trigger, World
from recoverbt.skills import (
    GroundSkill,
    SkillCatalog,
    SkillException,
    add_precondition_override,
    admit_latent,
    lift,
    progress,
)
from recoverbt.tree import (
    Action,
    BTNode,
    Condition,
    Fallback,
    Sequence,
    Status,
    TickContext,
    parent_of,
    replace_node,
    tick,
)
from recoverbt.verdict import (
    AddPrecondition,
    AddSkill,
    CheckKind,
    Correction,
    MarkUnsatisfied,
    Verdict,
)
from recoverbt.world import SceneDiff, SceneException, SceneGraph, apply_edits, diff, diff_edits, evaluate

logger = logging.getLogger(__name__)

MODES = ("pre", "reactive", "combined")
SCHEMA_VERSION = 1

ReasonerFactory = Callable[[World], Reasoner]


class PipelineException(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    max_ticks: int = 100
    history_window: int = 5
    pre_rounds: int = 3
    max_consecutive_failures: int = 3
    max_queries: int | None = None
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def __post_init__(self):
        if self.max_ticks < 1:
            raise PipelineException("max_ticks must be >= 1, got %r" % self.max_ticks)
        if self.pre_rounds < 1:
            raise PipelineException("pre_rounds must be >= 1, got %r" % self.pre_rounds)
        if self.max_consecutive_failures < 1:
            raise PipelineException(
                "max_consecutive_failures must be >= 1, got %r" % self.max_consecutive_failures
            )


def summary(verdict: Verdict) -> dict:
    """Compact verdict record kept in history entries."""
    d: dict[str, Any] = {"kind": verdict.kind.value, "detected": verdict.failure_detected}
    if verdict.identification is not None:
        d["culprit"] = verdict.identification.culprit
    return d


@dataclass
class HistoryEntry:
    """One change of the belief: a skill execution or an observed disturbance.

    Attributes:
        kind (str): "skill" or "observation".
        tick (int): Tick the change happened in.
        timestamp (float): Monotonic clock reading.
        diff (SceneDiff): Belief revision before -> after.
        skill (GroundSkill | None): Executed skill, skill entries only.
        outcome (str | None): Simulator outcome, skill entries only.
        precheck (list[dict]): Verdict summaries of the activation's checks.
        postcheck (dict | None): Postcondition verdict summary.
    """

    kind: str
    tick: int
    timestamp: float
    diff: SceneDiff
    skill: GroundSkill | None = None
    outcome: str | None = None
    precheck: list[dict] = field(default_factory=list)
    postcheck: dict | None = None

    def dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "tick": self.tick, "timestamp": self.timestamp}
        if self.skill is not None:
            d["skill"] = str(self.skill)
            d["outcome"] = self.outcome
            d["precheck"] = self.precheck
            d["postcheck"] = self.postcheck
        d["diff"] = self.diff.dict()
        return d

    def prompt_view(self) -> dict:
        """The entry as shown to reasoners: no timestamps, diff literals only."""
        d = {k: v for k, v in self.dict().items() if k not in ("timestamp", "diff")}
        if self.diff.added:
            d["added"] = sorted(map(str, self.diff.added))
        if self.diff.removed:
            d["removed"] = sorted(map(str, self.diff.removed))
        return d


@dataclass
class AppliedCorrection:
    tick: int
    check: CheckKind
    correction: Correction
    applied: bool
    note: str = ""

    def dict(self) -> dict:
        d = {
            "tick": self.tick,
            "check": self.check.value,
            "correction": self.correction.dict(),
            "applied": self.applied,
        }
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class ExecutionHistory:
    """Append-only log of belief changes and corrections."""

    entries: list[HistoryEntry] = field(default_factory=list)
    corrections: list[AppliedCorrection] = field(default_factory=list)

    def append(self, entry: HistoryEntry):
        if self.entries and entry.tick < self.entries[-1].tick:
            raise PipelineException("Entry at tick %d after tick %d" % (entry.tick, self.entries[-1].tick))
        skills = [e for e in self.entries if e.kind == "skill"]
        if entry.kind == "skill" and skills and entry.tick <= skills[-1].tick:
            raise PipelineException("Skill entry at tick %d after tick %d" % (entry.tick, skills[-1].tick))
        self.entries.append(entry)

    def recent(self, window: int) -> list[dict]:
        return [e.prompt_view() for e in self.entries[-window:]] if window else []


@dataclass
class CheckCounter:
    detected: int = 0
    identified: int = 0
    corrected: int = 0

    def dict(self) -> dict:
        return {"detected": self.detected, "identified": self.identified, "corrected": self.corrected}


@dataclass
class RunReport:
    """Outcome of one `run_task`.

    `detections` lists every detected verdict in order with the tick and pending skill;
    `errors` lists reasoner failures. Counters are recounted from these by `check_counters`.
    """

    scenario: str
    mode: str
    reasoner: str
    success: bool = False
    reason: str = ""
    ticks: int = 0
    skills_executed: int = 0
    queries: int = 0
    expansions: int = 0
    plan_events: list[dict] = field(default_factory=list)
    counters: dict[CheckKind, CheckCounter] = field(default_factory=lambda: {k: CheckCounter() for k in CheckKind})
    detections: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    history: ExecutionHistory = field(default_factory=ExecutionHistory)
    initial_scene: SceneGraph | None = None
    final_scene: SceneGraph | None = None
    final_tree: str = ""
    expected_skill: str | None = None
    required_skill: str | None = None

    @property
    def failure_detected(self) -> bool:
        return bool(self.detections)

    @property
    def first_detection(self) -> dict | None:
        return self.detections[0] if self.detections else None

    @property
    def identification_correct(self) -> bool:
        first = self.first_detection
        if first is None:
            return False
        return self.expected_skill is None or first["verdict"]["identification"]["skill"] == self.expected_skill

    @property
    def suggested_skills(self) -> list[str]:
        return [
            c.correction.spec.name for c in self.history.corrections if c.applied and isinstance(c.correction, AddSkill)
        ]

    def dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "mode": self.mode,
            "reasoner": self.reasoner,
            "success": self.success,
            "reason": self.reason,
            "ticks": self.ticks,
            "skills_executed": self.skills_executed,
            "queries": self.queries,
            "expansions": self.expansions,
            "plan": self.plan_events,
            "expect": {"skill": self.expected_skill, "requires_skill": self.required_skill},
            "counters": {k.value: c.dict() for k, c in self.counters.items()},
            "detections": self.detections,
            "corrections": [c.dict() for c in self.history.corrections],
            "errors": self.errors,
            "history": [e.dict() for e in self.history.entries],
            "initial_scene": self.initial_scene.dict() if self.initial_scene else None,
            "final_scene": self.final_scene.dict() if self.final_scene else None,
            "final_tree": self.final_tree,
        }

    def yaml(self) -> str:
        return yaml.safe_dump(self.dict(), sort_keys=False)


def normalize(d: Any) -> Any:
    """A report record with timestamps removed, for determinism comparisons."""
    if isinstance(d, dict):
        return {k: normalize(v) for k, v in d.items() if k != "timestamp"}
    if isinstance(d, list):
        return [normalize(v) for v in d]
    return d


def check_counters(d: dict) -> bool:
    """Whether a report record's counters equal a recount from its detections and corrections."""
    expected = {k.value: {"detected": 0, "identified": 0, "corrected": 0} for k in CheckKind}
    for det in d["detections"]:
        expected[det["kind"]]["detected"] += 1
        if d["expect"]["skill"] in (None, det["verdict"]["identification"]["skill"]):
            expected[det["kind"]]["identified"] += 1
    for c in d["corrections"]:
        if c["applied"]:
            expected[c["check"]]["corrected"] += 1
    return expected == d["counters"]


class RecoveryPipeline:
    """State of one run. Use `run_task` rather than driving this directly.

    Args:
        scenario (Scenario): Task to run.
        mode (str): pre, reactive or combined.
        reasoner (Reasoner): Reasoner answering the checks; wrapped for query counting.
        world (World): Simulator holding the truth; faults fire into it.
        config (RunConfig): Budgets.
    """

    def __init__(self, scenario: Scenario, mode: str, reasoner: Reasoner, world: World, config: RunConfig):
        if mode not in MODES:
            raise PipelineException("Unknown mode %r (expected one of %s)" % (mode, ", ".join(MODES)))
        self.scenario = scenario
        self.mode = mode
        self.reasoner = CountingReasoner(reasoner, config.max_queries)
        self.world = world
        self.config = config
        self.catalog: SkillCatalog = scenario.catalog
        self.belief: SceneGraph = world.scene
        self.planner = ReactivePlanner(config.planner)
        self.root: BTNode | None = None
        self.marks: set[Literal] = set()
        self.verified: set[str] = set()
        self.tick_no = 0
        self.activations = 0
        self.executions = 0
        self.failures: dict[str, int] = {}
        self.prechecks: list[dict] = []
        self.report = RunReport(
            scenario=scenario.name,
            mode=mode,
            reasoner=reasoner.name,
            expected_skill=scenario.expect.skill,
            required_skill=scenario.expect.requires_skill,
        )

    @property
    def monitored(self) -> bool:
        return self.mode in ("reactive", "combined")

    @property
    def history(self) -> ExecutionHistory:
        return self.report.history

    def ask(self, kind: CheckKind, **fields: Any) -> Verdict:
        """One reasoner query. Errors are recorded and read as a clear verdict."""
        data = ReasonerInput(
            kind=kind,
            root=self.root,
            scene=self.belief,
            catalog=self.catalog,
            goals=self.scenario.goals,
            history=self.history.recent(self.config.history_window),
            images=self.scenario.images,
            **fields,
        )
        try:
            verdict = self.reasoner.judge(data)
        except ReasonerException as e:
            logger.warning("%s check at tick %d failed: %s", kind.value, self.tick_no, e)
            self.report.errors.append({"tick": self.tick_no, "kind": kind.value, **e.dict()})
            return Verdict.clear(kind)
        if verdict.failure_detected:
            counter = self.report.counters[kind]
            counter.detected += 1
            if self.scenario.expect.skill in (None, verdict.identification.skill):
                counter.identified += 1
            pending = fields.get("pending")
            self.report.detections.append(
                {
                    "tick": self.tick_no,
                    "kind": kind.value,
                    "pending": str(pending) if pending is not None else None,
                    "verdict": verdict.dict(),
                }
            )
            logger.info(
                "%s detected at tick %d: %s (%s)",
                kind.value,
                self.tick_no,
                verdict.identification.culprit,
                verdict.identification.cause,
            )
        return verdict

    def record(self, kind: CheckKind, correction: Correction, applied: bool, note: str = ""):
        self.history.corrections.append(AppliedCorrection(self.tick_no, kind, correction, applied, note))
        if applied:
            self.report.counters[kind].corrected += 1
            logger.info("applied %s from %s check", correction.type, kind.value)
        else:
            logger.warning("rejected %s from %s check: %s", correction.type, kind.value, note)

    # Belief maintenance

    def observe(self, kind: str = "observation", **entry: Any) -> SceneDiff:
        """Bring the belief in line with the truth by applying the observed diff as edits."""
        before = self.belief
        observed = diff(before, self.world.scene)
        if not observed.is_empty:
            self.belief = apply_edits(before, diff_edits(observed))
        change = diff(before, self.belief)
        if kind == "skill" or not change.is_empty:
            self.history.append(HistoryEntry(kind, self.tick_no, time.monotonic(), change, **entry))
        return change

    def assume(self, progressed: GroundSkill | None, **entry: Any):
        """Open-loop belief update from the declared postconditions of `progressed`; None for a
        skill the robot reported as failed. `entry` holds the history fields of the execution."""
        before = self.belief
        if progressed is not None:
            try:
                self.belief = progress(before, progressed)
            except SkillException as e:
                logger.warning("belief not progressed: %s", e)
        self.history.append(HistoryEntry("skill", self.tick_no, time.monotonic(), diff(before, self.belief), **entry))

    # Planning

    def plan(self):
        self.planner.reset()
        self.root = plan_initial(list(self.scenario.goals))
        if self.mode != "reactive":
            self.root, events = self.planner.expansion_pass(self.root, self.catalog, self.belief)
            logger.debug("expansion pass: %s", [e.dict() for e in events])

    def apply_add_precondition(self, kind: CheckKind, correction: AddPrecondition) -> bool:
        """Lift the literal into the skill's parameters against a matching action of the tree,
        record it as an override and insert the new condition nodes."""
        candidates = [n.skill for n in self.root.walk() if isinstance(n, Action) and n.skill.template == correction.skill]
        lifted = [lift(correction.literal, s) for s in candidates]
        fitting = [l for l in lifted if not any(self.belief.has(n) for n in l.names)]
        if not candidates or not fitting:
            self.record(kind, correction, False, "no action of %s in the tree matches %s" % (correction.skill, correction.literal))
            return False
        try:
            self.catalog = add_precondition_override(self.catalog, correction.skill, fitting[0])
        except SkillException as e:
            self.record(kind, correction, False, str(e))
            return False
        self.record(kind, correction, True)
        return True

    def apply_add_skill(self, kind: CheckKind, correction: AddSkill) -> bool:
        try:
            self.catalog = admit_latent(correction.spec, self.catalog)
        except SkillException as e:
            self.record(kind, correction, False, str(e))
            return False
        self.record(kind, correction, True)
        return True

    # Checks

    def pre_execution_check(self) -> Verdict:
        """Verify the planned tree against the initial belief; apply an AddPrecondition or AddSkill
        correction and replan, up to `pre_rounds` corrections."""
        verdict = Verdict.clear(CheckKind.PreExecution)
        for _ in range(self.config.pre_rounds):
            verdict = self.ask(CheckKind.PreExecution)
            if not verdict.failure_detected:
                break
            applied = False
            match verdict.correction:
                case AddPrecondition():
                    applied = self.apply_add_precondition(CheckKind.PreExecution, verdict.correction)
                case AddSkill():
                    applied = self.apply_add_skill(CheckKind.PreExecution, verdict.correction)
            if not applied:
                break
            self.plan()
        else:
            verdict = self.ask(CheckKind.PreExecution)
        if not verdict.failure_detected:
            self.verified = {str(s) for s in ground_skills(self.root)}
        return verdict

    def verify_preconditions(self, pending: GroundSkill) -> Verdict:
        verdict = self.ask(CheckKind.PreconditionVerify, pending=pending)
        if verdict.failure_detected and isinstance(verdict.correction, MarkUnsatisfied):
            self.marks |= set(verdict.correction.literals)
            self.record(CheckKind.PreconditionVerify, verdict.correction, True)
        return verdict

    def suggest_precondition(self, pending: GroundSkill) -> Verdict:
        verdict = self.ask(CheckKind.PreconditionSuggest, pending=pending)
        if not verdict.failure_detected:
            return verdict
        correction = verdict.correction
        if self.apply_add_precondition(CheckKind.PreconditionSuggest, correction):
            self.root, _ = self.planner.refresh_preconditions(self.root, correction.skill, self.catalog)
            try:
                if not evaluate(correction.literal, self.belief):
                    self.marks.add(correction.literal)
            except SceneException:
                pass
        return verdict

    def suggest_skill(self, pending: GroundSkill | None = None, unachievable: Literal | None = None) -> Verdict:
        verdict = self.ask(CheckKind.SkillSuggest, pending=pending, unachievable=unachievable)
        if not verdict.failure_detected or not self.apply_add_skill(CheckKind.SkillSuggest, verdict.correction):
            return verdict
        if pending is not None:
            self.reexpand(pending)
        return verdict

    def verify_postconditions(self, executed: GroundSkill, before: SceneGraph) -> Verdict:
        return self.ask(CheckKind.PostconditionVerify, pending=executed, before=before)

    def reexpand(self, pending: GroundSkill):
        """Put back the plain condition behind the Fallback that chose `pending`, so the next
        failing tick expands it again with the current catalog and belief."""
        action = next((n for n in self.root.walk() if isinstance(n, Action) and n.skill == pending), None)
        located = parent_of(self.root, action.id) if action is not None else None
        if located and isinstance(located[0], Sequence):
            located = parent_of(self.root, located[0].id)
        if not located or not isinstance(located[0], Fallback):
            return
        fallback = located[0]
        guard = fallback.children[0]
        self.root = replace_node(self.root, fallback.id, Condition(guard.id, guard.literal))
        logger.info("re-expanding %s with the admitted skill", guard.literal)

    # Loop

    def activate(self, action: Action) -> bool:
        """Runtime checks for a pending action, first detection wins. False defers execution."""
        skill = action.skill
        self.activations += 1
        self.prechecks = []
        self.world.fire_faults(Trigger("after-precheck", self.activations))
        if not self.monitored:
            return True
        self.observe()
        checks = [self.verify_preconditions, self.suggest_precondition]
        if not (self.mode == "combined" and str(skill) in self.verified):
            checks.append(lambda s: self.suggest_skill(pending=s))
        for check in checks:
            verdict = check(skill)
            self.prechecks.append(summary(verdict))
            if verdict.failure_detected:
                return False
        return True

    def execute(self, action: Action):
        skill = action.skill
        result = self.world.execute(skill)
        self.executions += 1
        self.report.skills_executed += 1
        self.world.fire_faults(Trigger("after-execution", self.executions))
        before = self.belief
        entry = {"skill": skill, "outcome": result.outcome.value, "precheck": self.prechecks}
        failed = result.outcome != Status.Success
        if self.monitored:
            self.observe("skill", **entry)
            verdict = self.verify_postconditions(skill, before)
            self.history.entries[-1].postcheck = summary(verdict)
            if verdict.failure_detected:
                self.record(CheckKind.PostconditionVerify, verdict.correction, True)
                failed = True
        else:
            self.assume(None if failed else skill, **entry)
        key = str(skill)
        self.failures[key] = self.failures.get(key, 0) + 1 if failed else 0
        self.marks.clear()

    def run(self) -> RunReport:
        self.world.fire_faults(Trigger("pre-execution"))
        self.belief = self.world.scene
        self.report.initial_scene = self.belief
        try:
            self.plan()
        except PlannerException as e:
            return self.finish(False, "planning failed: %s" % e)
        if self.mode != "reactive":
            self.pre_execution_check()

        while self.tick_no < self.config.max_ticks:
            self.tick_no += 1
            self.world.fire_faults(Trigger("at-tick", self.tick_no))
            if self.monitored:
                self.observe()
            ctx = TickContext(self.belief, set(self.marks))
            match tick(self.root, ctx):
                case Status.Success:
                    return self.finish(True, "goals reached")
                case Status.Running:
                    action = ctx.pending
                    if not self.activate(action):
                        continue
                    self.execute(action)
                    if (count := self.failures[str(action.skill)]) >= self.config.max_consecutive_failures:
                        return self.finish(False, "%s failed %d times in a row" % (action.skill, count))
                case Status.Failure:
                    self.root, event = self.planner.replan_step(self.root, ctx, self.catalog, self.belief)
                    match event.kind:
                        case "expanded":
                            continue
                        case "no-achiever" if self.monitored:
                            catalog = self.catalog
                            self.suggest_skill(unachievable=event.literal)
                            if self.catalog is catalog:
                                return self.finish(False, "no skill achieves %s" % event.literal)
                        case _:
                            return self.finish(False, "%s at %s" % (event.kind, event.literal or "root"))
        return self.finish(False, "tick budget of %d spent" % self.config.max_ticks)

    def finish(self, reached: bool, reason: str) -> RunReport:
        report = self.report
        goals_hold = all(evaluate(goal, self.world.scene) for goal in self.scenario.goals)
        report.success = reached and goals_hold
        report.reason = reason if reached == report.success else "belief reached the goals, the world did not"
        report.ticks = self.tick_no
        report.queries = self.reasoner.queries
        report.expansions = self.planner.total_expansions
        report.plan_events = [e.dict() for e in self.planner.events]
        report.final_scene = self.belief
        report.final_tree = render(self.root) if self.root is not None else ""
        logger.info(
            "%s [%s] %s after %d ticks, %d queries: %s",
            report.scenario,
            self.mode,
            "succeeded" if report.success else "failed",
            report.ticks,
            report.queries,
            report.reason,
        )
        return report


def run_task(
    scenario: Scenario, mode: str, reasoner_factory: ReasonerFactory, config: RunConfig | None = None
) -> RunReport:
    """Run one scenario end to end. Domain failures are report outcomes; only an unknown mode or
    a broken reasoner factory raise.

    Args:
        scenario (Scenario): Task to run; its scene and faults seed a fresh simulator.
        mode (str): pre, reactive or combined.
        reasoner_factory (ReasonerFactory): Builds the reasoner for the run's simulator.
        config (RunConfig, optional): Budgets; defaults apply when omitted.

    Returns:
        RunReport: The filled report.
    """
    config = config or RunConfig()
    world = World(scenario.scene, list(scenario.faults))
    return RecoveryPipeline(scenario, mode, reasoner_factory(world), world, config).run()
