import pytest

from recoverbt.config import EndpointConfig
from recoverbt.pipeline import (
    MODES,
    ExecutionHistory,
    HistoryEntry,
    PipelineException,
    RunConfig,
    check_counters,
    normalize,
    run_task,
)
from recoverbt.reasoners import OracleReasoner, make_reasoner_factory
from recoverbt.reasoners.base import Reasoner, ReasonerInput
from recoverbt.report import expected_success
from recoverbt.scenario import load_scenario
from recoverbt.verdict import AddPrecondition, CheckKind, Identification, Verdict
from recoverbt.world import SceneDiff, SceneGraph, apply_diff, evaluate, serialize_scene
from tests.conftest import FIXTURES, SCENARIOS, lit


@pytest.mark.parametrize(
    "name,kind,skill,correction",
    [
        pytest.param("fig2a", "pre-execution", "place_inside", "add-precondition"),
        pytest.param("fig2b", "precondition-verify", "grasp", "mark-unsatisfied"),
        pytest.param("fig2c", "postcondition-verify", "place_inside", "report-skill-failure"),
        pytest.param("fig4a", "precondition-suggest", "place_inside", "add-precondition"),
        pytest.param("fig4b", "pre-execution", "grasp", "add-skill"),
        pytest.param("fig4c", "skill-suggest", "grasp", "add-skill"),
    ],
)
def test_combined_first_detection(scenario, name: str, kind: str, skill: str, correction: str):
    report = run_task(scenario(name), "combined", OracleReasoner)
    assert report.success, report.reason
    first = report.first_detection
    assert first["kind"] == kind
    assert first["verdict"]["identification"]["skill"] == skill
    assert first["verdict"]["correction"]["type"] == correction
    assert report.identification_correct
    assert check_counters(report.dict())


@pytest.mark.parametrize(
    "name,culprit,cause,correction",
    [
        pytest.param(
            "fig2a",
            "~occupied(green_hole)",
            "green_hole is occupied by black_cube",
            {"type": "add-precondition", "skill": "place_inside", "literal": "~occupied(green_hole)"},
        ),
        pytest.param(
            "fig2b",
            "hand_empty",
            "the gripper is holding red_cube",
            {"type": "mark-unsatisfied", "literals": ["hand_empty"]},
        ),
        pytest.param("fig2c", "inside(blue_peg, green_hole)", None, {"type": "report-skill-failure"}),
        pytest.param(
            "fig4a",
            "~occupied(green_hole)",
            "green_hole is occupied by red_cube",
            {"type": "add-precondition", "skill": "place_inside", "literal": "~occupied(green_hole)"},
        ),
    ],
)
def test_combined_first_verdict(scenario, name: str, culprit: str, cause: str | None, correction: dict):
    verdict = run_task(scenario(name), "combined", OracleReasoner).first_detection["verdict"]
    assert verdict["failure_detected"]
    assert verdict["identification"]["culprit"] == culprit
    if cause is not None:
        assert verdict["identification"]["cause"] == cause
    assert verdict["correction"] == correction


@pytest.mark.parametrize("name", ["fig4b", "fig4c"])
def test_combined_blames_unpickable_grasp(scenario, name: str):
    verdict = run_task(scenario(name), "combined", OracleReasoner).first_detection["verdict"]
    identification = verdict["identification"]
    assert identification["skill"] == "grasp"
    assert identification["culprit"] == "pickable(red_cube)"
    assert identification["cause"].startswith("red_cube is not pickable, so grasp(red_cube) cannot achieve ")
    assert verdict["correction"]["type"] == "add-skill"
    assert verdict["correction"]["skill"]["name"] == "push"
    assert "at(X, Z)" in verdict["correction"]["skill"]["postconditions"]


def test_fig2a_correction_lifted(scenario):
    report = run_task(scenario("fig2a"), "combined", OracleReasoner)
    first = report.first_detection
    assert first["verdict"]["correction"]["literal"] == "~occupied(green_hole)"
    assert first["pending"] is None
    (applied,) = [c for c in report.history.corrections if c.applied]
    assert applied.tick == 0
    assert "~occupied(green_hole)" in report.final_tree


def test_fig2b_marks_and_retries(scenario):
    report = run_task(scenario("fig2b"), "combined", OracleReasoner)
    assert report.first_detection["pending"] == "grasp(blue_peg)"
    assert report.first_detection["verdict"]["correction"]["literals"] == ["hand_empty"]
    skills = [e.skill for e in report.history.entries if e.kind == "skill"]
    assert str(skills[0]) == "place_on(red_cube, table)"
    assert evaluate(lit("inside(blue_peg, green_hole)"), report.final_scene)


@pytest.mark.parametrize("name", ["fig4b", "fig4c"])
@pytest.mark.parametrize("mode", ["combined", "reactive"])
def test_missing_skill_admitted(scenario, name: str, mode: str):
    report = run_task(scenario(name), mode, OracleReasoner)
    assert report.success, report.reason
    assert report.suggested_skills == ["push"]
    assert "push(red_cube, table)" in report.final_tree


def test_reactive_detects_at_runtime(scenario):
    report = run_task(scenario("fig2a"), "reactive", OracleReasoner)
    assert report.success
    assert report.first_detection["kind"] == "precondition-suggest"
    assert report.first_detection["pending"] == "place_inside(blue_peg, green_hole)"


def test_combined_cheaper_than_reactive(scenario):
    s = scenario("fig2a")
    combined = run_task(s, "combined", OracleReasoner)
    reactive = run_task(s, "reactive", OracleReasoner)
    assert combined.queries < reactive.queries


def test_pre_mode_open_loop(scenario):
    report = run_task(scenario("fig2b"), "pre", OracleReasoner)
    assert not report.success
    assert report.reason == "grasp(blue_peg) failed 3 times in a row"
    assert report.detections == []
    assert report.queries == 1
    assert [e.outcome for e in report.history.entries] == ["failure"] * 3
    assert all(e.diff.is_empty for e in report.history.entries)


def test_pre_mode_recovers_pre_detectable(scenario):
    report = run_task(scenario("fig2a"), "pre", OracleReasoner)
    assert report.success
    assert report.dict()["counters"]["pre-execution"] == {"detected": 1, "identified": 1, "corrected": 1}


def test_pre_mode_trusts_declared_effects(scenario):
    report = run_task(scenario("fig2c"), "pre", OracleReasoner)
    assert not report.success
    assert report.reason == "belief reached the goals, the world did not"
    assert evaluate(lit("inside(blue_peg, green_hole)"), report.final_scene)


@pytest.mark.parametrize("name", ["fig2a", "fig4b", "drawer_closed", "peg_two_blockers", "sorting_blocked_bin"])
def test_pre_mode_recovers_every_pre_detectable(scenario, name: str):
    s = scenario(name)
    assert s.tag == "pre-detectable"
    report = run_task(s, "pre", OracleReasoner)
    assert report.success, report.reason
    assert report.first_detection["kind"] == "pre-execution"
    assert [e["kind"] for e in report.detections] == ["pre-execution"] * len(report.detections)
    skills = [e for e in report.history.entries if e.kind == "skill"]
    assert skills and all(e.skill is not None for e in skills)


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.yml")), ids=lambda p: p.stem)
def test_outcome_matches_tag(path, mode: str):
    s = load_scenario(path)
    report = run_task(s, mode, OracleReasoner)
    assert report.success == expected_success(s, mode), report.reason


@pytest.mark.parametrize("name", ["nominal_peg", "nominal_sorting", "nominal_drawer"])
@pytest.mark.parametrize("mode", ["pre", "reactive", "combined"])
def test_nominal_no_false_positives(scenario, name: str, mode: str):
    report = run_task(scenario(name), mode, OracleReasoner)
    assert report.success, report.reason
    assert report.detections == [] and report.errors == []


@pytest.mark.parametrize("name", ["fig2a", "fig2b", "fig4a", "fig4c", "sorting_obstruction"])
@pytest.mark.parametrize("mode", ["pre", "combined"])
def test_history_replays_to_final_scene(scenario, name: str, mode: str):
    d = run_task(scenario(name), mode, OracleReasoner).dict()
    g = SceneGraph.fromdict(d["initial_scene"])
    for entry in d["history"]:
        g = apply_diff(g, SceneDiff.fromdict(entry["diff"]))
    assert serialize_scene(g).splitlines()[1:] == serialize_scene(SceneGraph.fromdict(d["final_scene"])).splitlines()[1:]
    ticks = [e["tick"] for e in d["history"] if e["kind"] == "skill"]
    assert ticks == sorted(set(ticks))


@pytest.mark.parametrize("mode", ["pre", "reactive", "combined"])
def test_deterministic(scenario, mode: str):
    s = scenario("sorting_handover")
    first = normalize(run_task(s, mode, OracleReasoner).dict())
    assert normalize(run_task(s, mode, OracleReasoner).dict()) == first
    assert "timestamp" not in str(first)


def test_check_counters_detects_tampering(scenario):
    d = run_task(scenario("fig2a"), "combined", OracleReasoner).dict()
    assert check_counters(d)
    d["counters"]["pre-execution"]["corrected"] += 1
    assert not check_counters(d)


def test_query_budget_recorded(scenario):
    report = run_task(scenario("fig2a"), "combined", OracleReasoner, RunConfig(max_queries=1))
    assert report.queries == 1
    assert report.errors
    assert {e["variant"] for e in report.errors} == {"budget-exceeded"}
    assert report.success


def test_tick_budget(scenario):
    report = run_task(scenario("nominal_sorting"), "combined", OracleReasoner, RunConfig(max_ticks=2))
    assert not report.success
    assert report.reason == "tick budget of 2 spent"
    assert report.ticks == 2


@pytest.mark.parametrize(
    "values",
    [
        pytest.param({"max_ticks": 0}, id="MaxTicks"),
        pytest.param({"pre_rounds": 0}, id="PreRounds"),
        pytest.param({"max_consecutive_failures": 0}, id="ConsecutiveFailures"),
    ],
)
def test_run_config__rejected(values: dict):
    with pytest.raises(PipelineException):
        RunConfig(**values)


def test_unknown_mode(scenario):
    with pytest.raises(PipelineException):
        run_task(scenario("fig2a"), "optimistic", OracleReasoner)


def test_history_rejects_time_travel():
    history = ExecutionHistory()
    history.append(HistoryEntry("skill", 3, 0.0, SceneDiff()))
    history.append(HistoryEntry("observation", 3, 0.0, SceneDiff()))
    with pytest.raises(PipelineException):
        history.append(HistoryEntry("skill", 3, 0.0, SceneDiff()))


def test_history_rejects_stale_observation():
    history = ExecutionHistory()
    history.append(HistoryEntry("skill", 3, 0.0, SceneDiff()))
    with pytest.raises(PipelineException) as e:
        history.append(HistoryEntry("observation", 2, 0.0, SceneDiff()))
    assert str(e.value) == "Entry at tick 2 after tick 3"
    assert len(history.entries) == 1


@pytest.mark.parametrize("name", ["fig2b", "fig4a", "sorting_handover", "sorting_obstruction"])
@pytest.mark.parametrize("mode", ["reactive", "combined"])
def test_history_ticks_never_decrease(scenario, name: str, mode: str):
    entries = run_task(scenario(name), mode, OracleReasoner).dict()["history"]
    assert "observation" in {e["kind"] for e in entries}
    ticks = [e["tick"] for e in entries]
    assert ticks == sorted(ticks)


@pytest.mark.parametrize("name", ["fig2a", "fig4a"])
def test_vlm_fixture_reproduces_oracle(scenario, name: str):
    s = scenario(name)
    factory = make_reasoner_factory("vlm", EndpointConfig(fixture=FIXTURES / ("%s.yml" % name)))
    vlm = normalize(run_task(s, "combined", factory).dict())
    oracle = normalize(run_task(s, "combined", OracleReasoner).dict())
    del vlm["reasoner"], oracle["reasoner"]
    assert vlm == oracle
    assert vlm["success"]


def test_report_yaml(scenario):
    text = run_task(scenario("fig2a"), "combined", OracleReasoner).yaml()
    assert text.startswith("schema_version: 1\nscenario: fig2a\nmode: combined\nreasoner: oracle\n")


def test_report_records_achiever_choice(scenario):
    d = run_task(scenario("fig2a"), "combined", OracleReasoner).dict()
    first = d["plan"][0]
    assert first["event"] == "expanded"
    assert first["literal"] == "inside(blue_peg, green_hole)"
    assert "place_inside(blue_peg, green_hole)" in first["achievers"]
    assert len(d["plan"]) >= d["expansions"]


class Misguided(Reasoner):
    """Blames a skill the plan never uses."""

    name = "misguided"

    def __init__(self, world):
        pass

    def judge(self, data: ReasonerInput) -> Verdict:
        if data.kind != CheckKind.PreExecution:
            return Verdict.clear(data.kind)
        return Verdict.detected(
            data.kind,
            Identification("push", "hand_empty", "gripper busy"),
            AddPrecondition("push", lit("hand_empty")),
        )


def test_precondition_for_absent_skill_rejected(scenario):
    report = run_task(scenario("nominal_peg"), "pre", Misguided)
    assert report.success
    (rejected,) = report.history.corrections
    assert not rejected.applied
    assert rejected.note == "no action of push in the tree matches hand_empty"
    assert report.dict()["counters"]["pre-execution"] == {"detected": 1, "identified": 1, "corrected": 0}
    assert "push" not in report.final_tree
