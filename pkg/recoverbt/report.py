"""
Suite runs and their aggregate grid: task success, failure detection, identification and
correction rates, skill-suggestion accuracy and mean cost per mode.

Rates are taken over failure-tagged scenarios (pre-detectable, runtime-only). Nominal scenarios
only feed the false-positive count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from recoverbt.pipeline import MODES, SCHEMA_VERSION, ReasonerFactory, RunConfig, RunReport, normalize, run_task
from recoverbt.scenario import Scenario, ScenarioException, load_scenario

logger = logging.getLogger(__name__)


class ReportException(Exception):
    pass


def expected_success(scenario: Scenario, mode: str) -> bool:
    """Whether a mode is expected to recover a scenario: runtime disturbances are out of reach
    of pre-execution verification alone."""
    return mode != "pre" or scenario.tag != "runtime-only"


def rate(hits: int, cases: int) -> float | None:
    return hits / cases if cases else None


@dataclass
class ModeAggregate:
    mode: str
    cases: int = 0
    successes: int = 0
    detected: int = 0
    identified: int = 0
    corrected: int = 0
    skill_cases: int = 0
    skill_hits: int = 0
    queries: int = 0
    ticks: int = 0
    nominal_runs: int = 0
    false_positives: int = 0

    @property
    def task_success_rate(self) -> float | None:
        return rate(self.successes, self.cases)

    @property
    def detection_rate(self) -> float | None:
        return rate(self.detected, self.cases)

    @property
    def identification_rate(self) -> float | None:
        return rate(self.identified, self.detected)

    @property
    def correction_rate(self) -> float | None:
        return rate(self.corrected, self.detected)

    @property
    def skill_suggestion_accuracy(self) -> float | None:
        return rate(self.skill_hits, self.skill_cases)

    def add(self, report: RunReport, tag: str):
        if tag == "nominal":
            self.nominal_runs += 1
            self.false_positives += len(report.detections)
            return
        self.cases += 1
        self.queries += report.queries
        self.ticks += report.ticks
        self.successes += report.success
        if report.failure_detected:
            self.detected += 1
            self.identified += report.identification_correct
            self.corrected += report.success
        if report.required_skill is not None:
            self.skill_cases += 1
            self.skill_hits += report.required_skill in report.suggested_skills

    def dict(self) -> dict:
        return {
            "mode": self.mode,
            "cases": self.cases,
            "task_success_rate": self.task_success_rate,
            "failure_detection_rate": self.detection_rate,
            "failure_identification_rate": self.identification_rate,
            "correction_success_rate": self.correction_rate,
            "skill_suggestion_accuracy": self.skill_suggestion_accuracy,
            "mean_queries": rate(self.queries, self.cases),
            "mean_ticks": rate(self.ticks, self.cases),
            "counts": {
                "successes": self.successes,
                "detected": self.detected,
                "identified": self.identified,
                "corrected": self.corrected,
                "skill_cases": self.skill_cases,
                "skill_hits": self.skill_hits,
            },
            "nominal_runs": self.nominal_runs,
            "false_positives": self.false_positives,
        }


@dataclass
class SuiteCase:
    scenario: Scenario
    mode: str
    report: RunReport
    repetitions: int
    deterministic: bool

    @property
    def expected(self) -> bool:
        return expected_success(self.scenario, self.mode)

    def dict(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "tag": self.scenario.tag,
            "mode": self.mode,
            "expected_success": self.expected,
            "repetitions": self.repetitions,
            "deterministic": self.deterministic,
            "report": self.report.dict(),
        }


@dataclass
class SuiteReport:
    modes: tuple[str, ...]
    reasoner: str
    repetitions: int
    cases: list[SuiteCase] = field(default_factory=list)
    errored: list[dict] = field(default_factory=list)

    def aggregates(self) -> dict[str, ModeAggregate]:
        """Aggregate grid recomputed from the per-case reports; independent of case order."""
        grid = {mode: ModeAggregate(mode) for mode in self.modes}
        for case in self.cases:
            grid[case.mode].add(case.report, case.scenario.tag)
        return grid

    @property
    def ok(self) -> bool:
        return all(case.report.success for case in self.cases if case.expected) and all(
            case.deterministic for case in self.cases
        )

    def dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "reasoner": self.reasoner,
            "modes": list(self.modes),
            "repetitions": self.repetitions,
            "aggregates": {mode: agg.dict() for mode, agg in self.aggregates().items()},
            "errored": self.errored,
            "cases": [case.dict() for case in self.cases],
        }

    def yaml(self) -> str:
        return yaml.safe_dump(self.dict(), sort_keys=False)

    def table(self) -> str:
        """Plain-text grid, one row per metric and one column per mode."""
        grid = self.aggregates()
        rows: list[tuple[str, str]] = [
            ("Task success", "task_success_rate"),
            ("Failure detection", "detection_rate"),
            ("Failure identification", "identification_rate"),
            ("Correction success", "correction_rate"),
            ("Skill suggestion", "skill_suggestion_accuracy"),
        ]

        def cell(value: Any) -> str:
            return "n/a" if value is None else "%.2f%%" % (100 * value)

        lines = ["%-24s" % "" + "".join("%12s" % m for m in self.modes)]
        for label, attr in rows:
            lines.append("%-24s" % label + "".join("%12s" % cell(getattr(grid[m], attr)) for m in self.modes))
        lines.append(
            "%-24s" % "Mean queries"
            + "".join("%12s" % ("n/a" if grid[m].cases == 0 else "%.1f" % (grid[m].queries / grid[m].cases)) for m in self.modes)
        )
        lines.append("%-24s" % "False positives" + "".join("%12d" % grid[m].false_positives for m in self.modes))
        return "\n".join(lines)


def run_case(
    scenario: Scenario, mode: str, factory: ReasonerFactory, config: RunConfig, repetitions: int
) -> SuiteCase:
    """Run one scenario under one mode `repetitions` times; runs must agree apart from timestamps."""
    first = run_task(scenario, mode, factory, config)
    reference = normalize(first.dict())
    deterministic = True
    for _ in range(repetitions - 1):
        if normalize(run_task(scenario, mode, factory, config).dict()) != reference:
            logger.warning("%s [%s] is not deterministic", scenario.name, mode)
            deterministic = False
    return SuiteCase(scenario, mode, first, repetitions, deterministic)


def run_suite(
    directory: Path | str,
    modes: tuple[str, ...] | list[str],
    factory: ReasonerFactory,
    reasoner: str = "oracle",
    config: RunConfig | None = None,
    repetitions: int = 10,
    workers: int = 1,
) -> SuiteReport:
    """Run every scenario of a directory under every mode.

    Scenario files that fail to load are recorded as errored cases and the suite continues.

    Raises:
        ScenarioException: When the directory is missing or holds no scenario files.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ScenarioException("Not a scenario directory: %s" % directory)
    paths = sorted(directory.glob("*.yml"))
    if not paths:
        raise ScenarioException("No scenario files in %s" % directory)
    if unknown := [m for m in modes if m not in MODES]:
        raise ScenarioException("Unknown modes %r" % unknown)
    if repetitions < 1:
        raise ScenarioException("repetitions must be >= 1, got %r" % repetitions)
    config = config or RunConfig()
    suite = SuiteReport(tuple(modes), reasoner, repetitions)

    scenarios: list[Scenario] = []
    for path in paths:
        try:
            scenarios.append(load_scenario(path))
        except ScenarioException as e:
            logger.error("skipping %s: %s", path, e)
            suite.errored.append({"scenario": str(path), "error": str(e)})

    jobs = [(s, m) for s in scenarios for m in modes]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {executor.submit(run_case, s, m, factory, config, repetitions): (s, m) for s, m in jobs}
        for future in as_completed(futures):
            scenario, mode = futures[future]
            try:
                suite.cases.append(future.result())
            except Exception as e:
                logger.error("%s [%s] errored: %s", scenario.name, mode, e)
                suite.errored.append({"scenario": scenario.name, "mode": mode, "error": str(e)})
    order = {(s.name, m): i for i, (s, m) in enumerate(jobs)}
    suite.cases.sort(key=lambda c: order[(c.scenario.name, c.mode)])
    return suite


REPORT_KEYS = ("schema_version", "scenario", "mode", "success", "history", "detections", "corrections", "final_tree")


def narrate(d: Any) -> str:
    """Human-readable account of a run report record: belief changes, detections and
    corrections in tick order, then the final tree.

    Raises:
        ReportException: When the record is not a run report of a known schema version.
    """
    if not isinstance(d, dict) or (missing := [k for k in REPORT_KEYS if k not in d]):
        raise ReportException("Not a run report, missing %r" % (missing if isinstance(d, dict) else list(REPORT_KEYS)))
    if d["schema_version"] != SCHEMA_VERSION:
        raise ReportException("Unsupported report schema version: %r" % d["schema_version"])
    events: list[tuple[int, int, str]] = []
    for entry in d["history"]:
        changes = ["+%s" % r for r in entry["diff"].get("added", [])] + ["-%s" % r for r in entry["diff"].get("removed", [])]
        changes += ["~%s" % o["id"] for o in entry["diff"].get("objects_changed", [])]
        if entry["kind"] == "skill":
            text = "executed %s -> %s  %s" % (entry["skill"], entry["outcome"], " ".join(changes) or "(no change)")
        else:
            text = "observed %s" % " ".join(changes)
        events.append((entry["tick"], 1, text))
    for det in d["detections"]:
        ident = det["verdict"]["identification"]
        on = " on %s" % det["pending"] if det.get("pending") else ""
        text = "FAILURE %s%s: skill %s, culprit %s" % (det["kind"], on, ident["skill"], ident["culprit"])
        if ident.get("cause"):
            text += " (%s)" % ident["cause"]
        events.append((det["tick"], 0, text))
    for c in d["corrections"]:
        correction = c["correction"]
        detail = correction.get("literal") or ", ".join(correction.get("literals", [])) or correction.get("skill", "")
        if isinstance(detail, dict):
            detail = detail.get("name", "")
        verb = "applied" if c["applied"] else "REJECTED"
        text = "%s %s %s" % (verb, correction["type"], detail)
        if c.get("note"):
            text += " (%s)" % c["note"]
        events.append((c["tick"], 0, text.rstrip()))
    for err in d.get("errors", []):
        events.append((err["tick"], 0, "reasoner error in %s: %s: %s" % (err["kind"], err["variant"], err["detail"])))

    lines = [
        "%s [%s] with %s: %s after %s ticks, %s skills, %s queries"
        % (
            d["scenario"],
            d["mode"],
            d.get("reasoner", "?"),
            "SUCCESS" if d["success"] else "FAILURE",
            d.get("ticks", "?"),
            d.get("skills_executed", "?"),
            d.get("queries", "?"),
        )
    ]
    if d.get("reason"):
        lines.append("  %s" % d["reason"])
    for tick_no, _, text in sorted(events, key=lambda e: (e[0], e[1])):
        lines.append("tick %3d  %s" % (tick_no, text))
    lines.append("final tree:")
    lines += ["  %s" % line for line in d["final_tree"].splitlines()]
    return "\n".join(lines)
