import pytest

from recoverbt.verdict import (
    ALLOWED,
    RESPONSE_SCHEMA,
    AddPrecondition,
    AddSkill,
    CheckKind,
    Correction,
    Identification,
    MarkUnsatisfied,
    ReportSkillFailure,
    Verdict,
    VerdictException,
    skill_name,
)
from tests.conftest import lit

FIG2A = {
    "failure_detected": True,
    "identification": {
        "skill": "place_inside(blue_peg, green_hole)",
        "culprit": "~occupied(green_hole)",
        "cause": "green_hole is occupied by black_cube",
    },
    "correction": {"type": "add-precondition", "skill": "place_inside", "literal": "~occupied(green_hole)"},
}


def test_fromdict_fig2a():
    verdict = Verdict.fromdict(FIG2A, CheckKind.PreExecution)
    assert verdict.failure_detected
    assert verdict.identification == Identification(
        "place_inside", "~occupied(green_hole)", "green_hole is occupied by black_cube"
    )
    assert verdict.correction == AddPrecondition("place_inside", lit("~occupied(green_hole)"))
    assert Verdict.fromdict(verdict.dict()) == verdict


@pytest.mark.parametrize(
    "d,correction",
    [
        pytest.param(
            {"type": "mark-unsatisfied", "literals": ["hand_empty"]},
            MarkUnsatisfied((lit("hand_empty"),)),
            id="MarkUnsatisfied",
        ),
        pytest.param({"type": "report-skill-failure"}, ReportSkillFailure(), id="ReportSkillFailure"),
        pytest.param(
            {"type": "add-skill", "skill": {"name": "push", "postconditions": ["at(X, Z)"]}},
            None,
            id="AddSkill",
        ),
    ],
)
def test_correction_fromdict(d: dict, correction: Correction | None):
    parsed = Correction.fromdict(d)
    assert parsed.type == d["type"]
    if correction is not None:
        assert parsed == correction
    assert Correction.fromdict(parsed.dict()) == parsed


def test_add_skill_spec():
    parsed = Correction.fromdict({"type": "add-skill", "skill": {"name": "push", "postconditions": ["at(X, Z)"]}})
    assert isinstance(parsed, AddSkill)
    assert parsed.spec.name == "push"
    assert parsed.spec.postconditions == ("at(X, Z)",)


@pytest.mark.parametrize(
    "d",
    [
        pytest.param("add-precondition", id="NotAnObject"),
        pytest.param({"type": "retry"}, id="UnknownType"),
        pytest.param({"type": "add-precondition", "skill": "place_inside"}, id="MissingLiteral"),
        pytest.param({"type": "add-precondition", "skill": "", "literal": "hand_empty"}, id="EmptySkill"),
        pytest.param({"type": "add-precondition", "skill": "grasp", "literal": "blocked(X)"}, id="Vocabulary"),
        pytest.param({"type": "mark-unsatisfied", "literals": []}, id="NoLiterals"),
        pytest.param({"type": "mark-unsatisfied", "literals": [3]}, id="LiteralNotString"),
        pytest.param({"type": "add-skill", "skill": {"postconditions": ["at(X, Z)"]}}, id="SkillWithoutName"),
        pytest.param({"type": "add-skill", "skill": {"name": "slide", "postconditions": ["slid(X)"]}}, id="SkillVocabulary"),
    ],
)
def test_correction_fromdict__rejected(d):
    with pytest.raises(VerdictException):
        Correction.fromdict(d)


def test_not_detected_ignores_diagnosis():
    verdict = Verdict.fromdict({**FIG2A, "failure_detected": False}, CheckKind.PreExecution)
    assert verdict == Verdict.clear(CheckKind.PreExecution)
    assert verdict.dict() == {"kind": "pre-execution", "failure_detected": False}


def test_postcondition_defaults_to_skill_failure():
    d = {"failure_detected": True, "identification": {"skill": "place_inside", "culprit": "inside(blue_peg, green_hole)"}}
    verdict = Verdict.fromdict(d, CheckKind.PostconditionVerify)
    assert verdict.correction == ReportSkillFailure()
    with pytest.raises(VerdictException):
        Verdict.fromdict(d, CheckKind.PreExecution)


@pytest.mark.parametrize(
    "d,kind",
    [
        pytest.param([], CheckKind.PreExecution, id="NotAnObject"),
        pytest.param({"failure_detected": "yes"}, CheckKind.PreExecution, id="DetectedNotBool"),
        pytest.param({"failure_detected": False}, None, id="UnknownKind"),
        pytest.param({"failure_detected": True, "correction": FIG2A["correction"]}, CheckKind.PreExecution, id="NoIdentification"),
        pytest.param(
            {**FIG2A, "identification": {"skill": "place_inside", "culprit": ""}},
            CheckKind.PreExecution,
            id="EmptyCulprit",
        ),
        pytest.param(FIG2A, CheckKind.PreconditionVerify, id="CorrectionNotAllowed"),
        pytest.param(FIG2A, CheckKind.SkillSuggest, id="AddPreconditionOnSkillSuggest"),
    ],
)
def test_verdict_fromdict__rejected(d, kind: CheckKind | None):
    with pytest.raises(VerdictException):
        Verdict.fromdict(d, kind)


def test_clear_verdict_rejects_diagnosis():
    with pytest.raises(VerdictException):
        Verdict(CheckKind.PreExecution, False, correction=ReportSkillFailure())


@pytest.mark.parametrize("kind", list(CheckKind))
def test_every_kind_allows_a_correction(kind: CheckKind):
    assert ALLOWED[kind]


def test_response_schema_lists_corrections():
    assert RESPONSE_SCHEMA["properties"]["correction"]["properties"]["type"]["enum"] == [
        "add-precondition",
        "add-skill",
        "mark-unsatisfied",
        "report-skill-failure",
    ]


@pytest.mark.parametrize(
    "reference,name",
    [
        pytest.param("place_inside(blue_peg, green_hole)", "place_inside"),
        pytest.param("grasp", "grasp"),
        pytest.param(" grasp (red_cube)", "grasp"),
    ],
)
def test_skill_name(reference: str, name: str):
    assert skill_name(reference) == name
