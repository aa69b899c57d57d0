import json
from pathlib import Path

import pytest

from dualloop.memory import ExperienceRecord
from dualloop.prompts import (
    DECOMPOSE,
    DECOMPOSE_RULES,
    FLAT_PLAN,
    PLAN_GRAMMAR,
    REACT_RULES,
    REACT_STEP,
    SUBTASK_PLAN,
    DigestEntry,
    Observation,
    PlannerRequest,
    build_prompt,
)

GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


def exemplar(instruction, plan):
    return ExperienceRecord(signature={"x": 1}, plan=plan, outcome="success", instruction=instruction)


def test_subtask_prompt_matches_golden(registry):
    request = PlannerRequest(
        kind=SUBTASK_PLAN,
        task_id="T001",
        instruction="Detect objects in clip_03.",
        system_prompt="You are the Video-Agent.",
        role="Video-Agent",
        context=(DigestEntry(1, "Map-Agent", "ok", (("locate_incident", "tok-1"),)),),
        few_shots=(exemplar("Detect objects in clip_07.", '1. detect_objects(video="clip_07")'),),
        allowed_tools=(registry.get("detect_objects"), registry.get("classify_anomaly")),
        feedback=("Attempt 1: the plan was rejected: line 1: expected '('",),
    )
    with open(GOLDEN_DIR / "subtask_prompt.json", "r", encoding="utf-8") as f:
        expected = json.load(f)
    assert list(build_prompt(request).messages) == expected


def test_few_shots_keep_retrieval_order():
    shots = (exemplar("second", "1. b(x=1)"), exemplar("first", "1. a(x=1)"))
    request = PlannerRequest(kind=SUBTASK_PLAN, task_id="T001", instruction="x", few_shots=shots)
    messages = build_prompt(request).messages
    assert [m["role"] for m in messages] == ["system", "user", "user", "user"]
    assert messages[1]["content"].startswith("Example task: second")
    assert messages[2]["content"].startswith("Example task: first")


def test_decomposition_prompt_lists_roles():
    request = PlannerRequest(
        kind=DECOMPOSE,
        task_id="T001",
        instruction="Handle the fire.",
        roles=("Video-Agent", "Map-Agent"),
    )
    system = build_prompt(request).messages[0]["content"]
    assert DECOMPOSE_RULES in system
    assert system.endswith("Available roles:\n- Video-Agent\n- Map-Agent")
    assert build_prompt(request).messages[-1]["content"] == "Task: Handle the fire.\n\nContext:\n(none)"


def test_react_prompt_renders_trajectory(registry):
    request = PlannerRequest(
        kind=REACT_STEP,
        task_id="T001",
        instruction="Handle the fire.",
        allowed_tools=(registry.get("fetch_weather"),),
        trajectory=(Observation("fetch_weather", "ok", "tok-1"), Observation("plan_route", "fault")),
    )
    messages = build_prompt(request).messages
    assert REACT_RULES in messages[0]["content"]
    assert messages[-1]["content"].endswith("Trajectory:\nStep 1: fetch_weather -> tok-1\nStep 2: plan_route -> fault")


def test_digest_without_outputs():
    assert DigestEntry(2, "Report-Agent", "failed").render() == "[round 2] Report-Agent failed: no outputs"


def test_prompt_length_counts_characters():
    request = PlannerRequest(kind=SUBTASK_PLAN, task_id="T001", instruction="x")
    prompt = build_prompt(request)
    assert prompt.length == sum(len(m["content"]) for m in prompt.messages)


def test_request_validation():
    with pytest.raises(ValueError):
        PlannerRequest(kind="chat", task_id="T001", instruction="x")
    shots = tuple(exemplar(str(i), "1. a(x=1)") for i in range(4))
    with pytest.raises(ValueError):
        PlannerRequest(kind=SUBTASK_PLAN, task_id="T001", instruction="x", few_shots=shots)


@pytest.mark.parametrize("kind", [SUBTASK_PLAN, FLAT_PLAN, REACT_STEP])
def test_planning_prompts_carry_the_grammar(kind):
    system = build_prompt(PlannerRequest(kind=kind, task_id="T001", instruction="x")).messages[0]["content"]
    assert PLAN_GRAMMAR in system
    assert 'line  := INT "." SP IDENT "(" [arg ("," SP? arg)*] ")" ;' in system


def test_decomposition_prompt_has_no_plan_grammar():
    request = PlannerRequest(kind=DECOMPOSE, task_id="T001", instruction="x", roles=("Video-Agent",))
    assert PLAN_GRAMMAR not in build_prompt(request).messages[0]["content"]
