import shutil
from pathlib import Path

import pytest

from recoverbt.pipeline import MODES, run_task
from recoverbt.reasoners import OracleReasoner
from recoverbt.report import ModeAggregate, ReportException, SuiteReport, expected_success, narrate, run_suite
from recoverbt.scenario import ScenarioException
from tests.conftest import SCENARIOS


@pytest.fixture(scope="module")
def suite() -> SuiteReport:
    return run_suite(SCENARIOS, MODES, OracleReasoner, repetitions=2)


def test_suite_grid(suite: SuiteReport):
    grid = suite.aggregates()
    pre = grid["pre"]
    assert (pre.cases, pre.successes, pre.detected) == (16, 5, 5)
    assert pre.task_success_rate == 0.3125
    assert pre.detection_rate == 0.3125
    assert pre.identification_rate == 1.0
    assert pre.correction_rate == 1.0
    assert pre.skill_suggestion_accuracy == 0.5
    for mode in ("reactive", "combined"):
        agg = grid[mode]
        assert agg.cases == 16
        assert agg.task_success_rate == 1.0
        assert agg.detection_rate == 1.0
        assert agg.identification_rate == 1.0
        assert agg.correction_rate == 1.0
        assert agg.skill_suggestion_accuracy == 1.0
    for agg in grid.values():
        assert agg.nominal_runs == 3
        assert agg.false_positives == 0


def test_suite_ok_and_ordered(suite: SuiteReport):
    assert suite.ok
    assert suite.errored == []
    assert all(case.deterministic for case in suite.cases)
    names = sorted(p.stem for p in SCENARIOS.glob("*.yml"))
    assert [(c.scenario.name, c.mode) for c in suite.cases] == [(n, m) for n in names for m in MODES]


def test_combined_spends_fewer_queries(suite: SuiteReport):
    queries = {mode: 0 for mode in MODES}
    for case in suite.cases:
        if case.scenario.tag == "pre-detectable":
            queries[case.mode] += case.report.queries
    assert queries["combined"] < queries["reactive"]


def test_suite_table(suite: SuiteReport):
    lines = suite.table().splitlines()
    assert lines[0].split() == ["pre", "reactive", "combined"]
    assert lines[1].split() == ["Task", "success", "31.25%", "100.00%", "100.00%"]
    assert lines[5].split() == ["Skill", "suggestion", "50.00%", "100.00%", "100.00%"]
    assert lines[-1].split() == ["False", "positives", "0", "0", "0"]


def test_suite_dict(suite: SuiteReport):
    d = suite.dict()
    assert d["schema_version"] == 1
    assert d["aggregates"]["pre"]["failure_detection_rate"] == 0.3125
    assert len(d["cases"]) == 19 * 3
    case = d["cases"][0]
    assert case["repetitions"] == 2 and case["report"]["scenario"] == case["scenario"]


def test_aggregate_without_cases():
    agg = ModeAggregate("pre")
    assert agg.task_success_rate is None
    assert agg.dict()["mean_queries"] is None


@pytest.mark.parametrize(
    "name,mode,expected",
    [
        pytest.param("fig2b", "pre", False),
        pytest.param("fig2b", "reactive", True),
        pytest.param("fig2a", "pre", True),
        pytest.param("nominal_peg", "pre", True),
    ],
)
def test_expected_success(scenario, name: str, mode: str, expected: bool):
    assert expected_success(scenario(name), mode) is expected


def test_run_suite_records_broken_scenarios(tmp_path: Path):
    shutil.copy(SCENARIOS / "fig2a.yml", tmp_path)
    (tmp_path / "broken.yml").write_text("name: broken\nobjects: []\ngoals: []\n")
    suite = run_suite(tmp_path, ["combined"], OracleReasoner, repetitions=1)
    assert [c.scenario.name for c in suite.cases] == ["fig2a"]
    (errored,) = suite.errored
    assert errored["scenario"] == str(tmp_path / "broken.yml")
    assert "at least one goal" in errored["error"]
    assert suite.ok


def test_run_suite_records_failing_runs(tmp_path: Path):
    shutil.copy(SCENARIOS / "fig2a.yml", tmp_path)

    def broken(world):
        raise RuntimeError("reasoner unavailable")

    suite = run_suite(tmp_path, ["pre"], broken, repetitions=1)
    assert suite.cases == []
    assert suite.errored == [{"scenario": "fig2a", "mode": "pre", "error": "reasoner unavailable"}]


def test_run_suite_workers(tmp_path: Path):
    for name in ("fig2a", "fig2b", "nominal_peg"):
        shutil.copy(SCENARIOS / ("%s.yml" % name), tmp_path)
    serial = run_suite(tmp_path, MODES, OracleReasoner, repetitions=1)
    parallel = run_suite(tmp_path, MODES, OracleReasoner, repetitions=1, workers=4)
    assert [(c.scenario.name, c.mode) for c in parallel.cases] == [(c.scenario.name, c.mode) for c in serial.cases]
    assert parallel.dict()["aggregates"] == serial.dict()["aggregates"]


@pytest.mark.parametrize(
    "setup,kwargs",
    [
        pytest.param("missing", {}, id="MissingDirectory"),
        pytest.param("empty", {}, id="NoScenarios"),
        pytest.param("one", {"modes": ["optimistic"]}, id="UnknownMode"),
        pytest.param("one", {"repetitions": 0}, id="NoRepetitions"),
    ],
)
def test_run_suite__rejected(tmp_path: Path, setup: str, kwargs: dict):
    directory = tmp_path / "missing" if setup == "missing" else tmp_path
    if setup == "one":
        shutil.copy(SCENARIOS / "fig2a.yml", tmp_path)
    options = {"modes": ["pre"], **kwargs}
    with pytest.raises(ScenarioException):
        run_suite(directory, options.pop("modes"), OracleReasoner, **options)


def test_narrate(scenario):
    text = narrate(run_task(scenario("fig2a"), "combined", OracleReasoner).dict())
    lines = text.splitlines()
    assert lines[0].startswith("fig2a [combined] with oracle: SUCCESS after ")
    assert "tick   0  FAILURE pre-execution: skill place_inside, culprit ~occupied(green_hole) (green_hole is occupied by black_cube)" in lines
    assert "tick   0  applied add-precondition ~occupied(green_hole)" in lines
    assert any(line.startswith("tick   1  executed grasp(black_cube) -> success") for line in lines)
    assert "final tree:" in lines
    assert lines[-1].startswith("  ")


def test_narrate__errors_and_rejections(scenario):
    d = run_task(scenario("fig2a"), "combined", OracleReasoner).dict()
    d["errors"] = [{"tick": 2, "kind": "precondition-verify", "variant": "transport", "detail": "timeout"}]
    d["corrections"].append(
        {"tick": 3, "check": "skill-suggest", "correction": {"type": "add-skill", "skill": {"name": "teleport"}}, "applied": False, "note": "absent"}
    )
    text = narrate(d)
    assert "tick   2  reasoner error in precondition-verify: transport: timeout" in text
    assert "tick   3  REJECTED add-skill teleport (absent)" in text


@pytest.mark.parametrize(
    "d",
    [
        pytest.param([], id="NotAMapping"),
        pytest.param({"scenario": "fig2a"}, id="MissingKeys"),
    ],
)
def test_narrate__rejected(d):
    with pytest.raises(ReportException):
        narrate(d)


def test_narrate__schema_version(scenario):
    d = run_task(scenario("fig2a"), "pre", OracleReasoner).dict()
    d["schema_version"] = 2
    with pytest.raises(ReportException):
        narrate(d)
