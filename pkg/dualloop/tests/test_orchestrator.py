import pytest

from dualloop.corpus import generate_taskset
from dualloop.exceptions import AuthFailure, PlannerMalformedOutput, SubTaskFailed, TransportError, UnknownTask
from dualloop.execution import ExecutionRequest, Executor
from dualloop.memory import MemoryBank
from dualloop.netsim import FAULT, OK, FailureModel
from dualloop.orchestrator import (
    BUDGET_EXHAUSTED,
    DUAL_LOOP,
    EARLY_STOP,
    EXECUTION_FAILURE,
    FLAT,
    GLOBAL_AGENT,
    PLANNING_FAILURE,
    REACT,
    SUCCESS_OUTCOME,
    Budgets,
    PlanningAccount,
    PlanningBudgetExhausted,
    RoleProfile,
    RunContext,
    SubTask,
    decompose,
    parse_decomposition,
    run_inner_loop,
    run_task,
)
from dualloop.plan import parse_plan
from dualloop.planners import ErrorModel, Planner, ScriptedPlanner
from dualloop.scheduling import TIME_TOLERANCE
from dualloop.tests.conftest import REPORT_CHAIN, VIDEO_PAIR, StaticPlanner

ROLE_NAMES = ("Video-Agent", "Keyframe-Agent", "Meteorology-Agent", "Map-Agent", "Report-Agent")


def scripted(registry, *tasks, **kwargs):
    return ScriptedPlanner(tasks, registry, **kwargs)


class RaisingPlanner(Planner):
    name = "raising"

    def __init__(self, error):
        self.error = error

    def plan(self, request):
        raise self.error


class TestDualLoop:
    def test_single_role_task_finishes_in_one_round(self, registry, make_task, make_context):
        task = make_task(VIDEO_PAIR)
        result = run_task(DUAL_LOOP, task, scripted(registry, task), make_context())
        assert result.outcome == SUCCESS_OUTCOME
        assert result.rounds == 1
        # decompose, plan, decompose again (DONE)
        assert result.planning_invocations == 3
        assert [s.subtask.id for s in result.subtasks] == ["T001.r1.video"]
        assert result.executed_tools() == ["classify_anomaly", "detect_objects"]
        assert result.failure_class is None

    def test_dependent_roles_run_in_later_rounds(self, registry, make_task, make_context):
        task = make_task(REPORT_CHAIN)
        result = run_task(DUAL_LOOP, task, scripted(registry, task), make_context())
        assert result.outcome == SUCCESS_OUTCOME
        assert result.rounds == 2
        assert [s.subtask.id for s in result.subtasks] == ["T001.r1.video", "T001.r1.meteorology", "T001.r2.report"]
        report = next(c for c in result.calls if c.tool == "write_report")
        first_round_end = max(c.finish_s for c in result.calls if c.tool != "write_report")
        assert report.start_s >= first_round_end
        assert result.execution_latency_s == pytest.approx(report.finish_s)

    def test_zero_rounds_exhausts_budget_without_planning(self, registry, make_task, make_context):
        task = make_task(VIDEO_PAIR)
        result = run_task(DUAL_LOOP, task, scripted(registry, task), make_context(max_rounds=0))
        assert result.outcome == BUDGET_EXHAUSTED
        assert result.planning_invocations == 0
        assert result.calls == []

    def test_remaining_work_after_last_round_exhausts_budget(self, registry, make_task, make_context):
        task = make_task(REPORT_CHAIN)
        result = run_task(DUAL_LOOP, task, scripted(registry, task), make_context(max_rounds=1))
        assert result.outcome == BUDGET_EXHAUSTED
        assert result.rounds == 1

    def test_certain_errors_are_a_planning_failure(self, registry, make_task, make_context):
        task = make_task(REPORT_CHAIN)
        planner = scripted(registry, task, error_model=ErrorModel(eps=1.0))
        result = run_task(DUAL_LOOP, task, planner, make_context())
        assert result.outcome == PLANNING_FAILURE
        assert not result.success

    def test_forced_fault_is_replanned_and_recovered(self, registry, make_task, make_context):
        task = make_task(VIDEO_PAIR)
        ctx = make_context()
        ctx.failure_model = FailureModel(injections={("T001", "T001.r1.video.2")})
        result = run_task(DUAL_LOOP, task, scripted(registry, task), ctx)
        assert result.outcome == SUCCESS_OUTCOME
        subtask = result.subtasks[0]
        assert subtask.planning_invocations == 2
        assert [(c.tool, c.status, c.attempt) for c in subtask.calls] == [
            ("detect_objects", OK, 1),
            ("classify_anomaly", FAULT, 1),
            ("classify_anomaly", OK, 2),
        ]
        # only the faulted call ran again
        assert len(subtask.executions[1].request.dag) == 1

    def test_persistent_fault_is_an_execution_failure(self, registry, make_task, make_context):
        task = make_task(VIDEO_PAIR)
        ctx = make_context(max_replans=1)
        ctx.failure_model = FailureModel(p_tool={"detect_objects": 1.0})
        result = run_task(DUAL_LOOP, task, scripted(registry, task), ctx)
        assert result.outcome == EXECUTION_FAILURE
        assert result.subtasks[0].planning_invocations == 2

    def test_local_mode_stays_on_the_home_terminal(self, registry, make_task, make_context):
        task = make_task(REPORT_CHAIN, home_terminal="terminal-04")
        result = run_task(DUAL_LOOP, task, scripted(registry, task), make_context(mode="local"))
        assert result.success
        assert {c.device for c in result.calls} == {"terminal-04"}

    def test_collab_is_not_slower_than_local(self, registry, make_task, make_context):
        task = make_task(REPORT_CHAIN)
        planner = scripted(registry, task)
        collab = run_task(DUAL_LOOP, task, planner, make_context(mode="collab"))
        local = run_task(DUAL_LOOP, task, planner, make_context(mode="local"))
        assert collab.execution_latency_s <= local.execution_latency_s

    def test_memory_records_experiences(self, registry, make_task, make_context):
        task = make_task(VIDEO_PAIR)
        ctx = make_context(memory=True)
        run_task(DUAL_LOOP, task, scripted(registry, task), ctx)
        video = ctx.memory.store_for("Video-Agent").long_term
        assert [r.plan for r in video] == [VIDEO_PAIR]
        assert ctx.memory.store_for(GLOBAL_AGENT).long_term[0].plan.startswith("Video-Agent: ")
        # the second run retrieves the stored plan as a few-shot
        planner = StaticPlanner("DONE")
        run_task(DUAL_LOOP, task, planner, ctx)
        assert planner.requests[0].few_shots


class TestDecomposition:
    def test_parses_role_lines(self):
        subtasks = parse_decomposition("Video-Agent: watch\n- Map-Agent: route", ROLE_NAMES, "T001", 0)
        assert [(s.id, s.role, s.instruction) for s in subtasks] == [
            ("T001.r1.video", "Video-Agent", "watch"),
            ("T001.r1.map", "Map-Agent", "route"),
        ]

    @pytest.mark.parametrize("text", ["DONE", "", "  done  "])
    def test_done_or_empty_means_nothing_left(self, text):
        assert parse_decomposition(text, ROLE_NAMES, "T001", 0) == []

    @pytest.mark.parametrize(
        "text",
        ["Video-Agent watch", "General-Agent: watch", "Video-Agent: a\nVideo-Agent: b"],
    )
    def test_malformed_decompositions(self, text):
        with pytest.raises(PlannerMalformedOutput):
            parse_decomposition(text, ROLE_NAMES, "T001", 0)

    def test_retries_once_then_gives_up(self, make_task, make_context):
        planner = StaticPlanner("Video-Agent watch the clip")
        account = PlanningAccount(10)
        with pytest.raises(PlannerMalformedOutput):
            decompose(make_task(VIDEO_PAIR), (), planner, make_context(), 0, account)
        assert account.invocations == 2
        assert planner.requests[1].feedback

    def test_malformed_twice_is_a_planning_failure(self, make_task, make_context):
        result = run_task(DUAL_LOOP, make_task(VIDEO_PAIR), StaticPlanner("nonsense"), make_context())
        assert result.outcome == PLANNING_FAILURE
        assert result.planning_invocations == 2


class TestInnerLoop:
    def subtask(self):
        return SubTask("T001.r1.video", "T001", "Video-Agent", "Watch the clip.", 0)

    def test_unparseable_plans_exhaust_replans(self, make_task, make_context):
        ctx = make_context(max_replans=2)
        planner = StaticPlanner("1. detect_objects(video=")
        with pytest.raises(SubTaskFailed) as excinfo:
            run_inner_loop(self.subtask(), ctx.role("Video-Agent"), planner, make_task(VIDEO_PAIR), ctx)
        assert excinfo.value.planning_invocations == 3
        assert excinfo.value.reason == "plan"
        assert len(planner.requests[-1].feedback) == 2

    def test_tools_outside_the_role_are_rejected(self, make_task, make_context):
        ctx = make_context(max_replans=0)
        planner = StaticPlanner('1. fetch_weather(location="cell_17")')
        with pytest.raises(SubTaskFailed):
            run_inner_loop(self.subtask(), ctx.role("Video-Agent"), planner, make_task(VIDEO_PAIR), ctx)

    def test_successful_subtask_reports_outputs(self, registry, make_task, make_context):
        task = make_task(VIDEO_PAIR)
        ctx = make_context()
        result = run_inner_loop(self.subtask(), ctx.role("Video-Agent"), scripted(registry, task), task, ctx)
        assert result.ok
        assert [tool for tool, _ in result.outputs] == ["detect_objects", "classify_anomaly"]
        assert result.digest().render().startswith("[round 1] Video-Agent ok: detect_objects -> T001:")

    def test_role_without_tools(self):
        with pytest.raises(ValueError):
            RoleProfile("Empty-Agent", "prompt", ())


class TestBaselines:
    def test_flat_compiler_plans_everything_at_once(self, registry, make_task, make_context):
        task = make_task(REPORT_CHAIN)
        result = run_task(FLAT, task, scripted(registry, task), make_context())
        assert result.outcome == SUCCESS_OUTCOME
        assert result.planning_invocations == 1
        assert [s.subtask.id for s in result.subtasks] == ["T001.flat"]

    def test_react_runs_a_chain(self, registry, make_task, make_context):
        task = make_task(REPORT_CHAIN)
        result = run_task(REACT, task, scripted(registry, task), make_context())
        assert result.outcome == SUCCESS_OUTCOME
        assert result.planning_invocations == 4
        assert result.topology.edges == frozenset({(1, 2), (2, 3)})
        starts = [c.start_s for c in result.calls]
        finishes = [c.finish_s for c in result.calls]
        assert all(s >= f for s, f in zip(starts[1:], finishes))

    def test_react_stops_early_on_long_tasks(self, registry, make_context):
        tasks = generate_taskset(0, {"hard": 3}, registry)
        task = next(t for t in tasks if t.tool_count == 9)
        result = run_task(REACT, task, scripted(registry, *tasks), make_context(react_steps=8))
        assert result.outcome == EARLY_STOP
        assert result.planning_invocations == 9
        assert len(result.calls) == 8

    def test_react_finishes_within_budget(self, registry, make_context):
        tasks = generate_taskset(0, {"hard": 3}, registry)
        task = next(t for t in tasks if t.tool_count == 9)
        result = run_task(REACT, task, scripted(registry, *tasks), make_context(react_steps=12))
        assert result.outcome == SUCCESS_OUTCOME
        assert result.planning_invocations == 10
        assert len(result.topology.edges) == 8

    def test_premature_final_answer_is_an_early_stop(self, make_task, make_context):
        result = run_task(REACT, make_task(VIDEO_PAIR), StaticPlanner("FINAL"), make_context())
        assert result.outcome == EARLY_STOP
        assert result.failure_class == "omission"

    def test_react_rejected_steps_become_observations(self, make_task, make_context):
        planner = StaticPlanner("1. fly_drone(x=1)")
        result = run_task(REACT, make_task(VIDEO_PAIR), planner, make_context(react_steps=2))
        assert result.outcome == EARLY_STOP
        assert [o.status for o in planner.requests[-1].trajectory] == ["rejected", "rejected"]

    def test_dual_loop_is_faster_than_react_in_collab(self, registry, make_context):
        tasks = generate_taskset(0, {"hard": 3}, registry)
        planner = scripted(registry, *tasks)
        for task in tasks:
            dual = run_task(DUAL_LOOP, task, planner, make_context())
            react = run_task(REACT, task, planner, make_context())
            assert dual.success and react.success
            assert dual.execution_latency_s <= react.execution_latency_s + TIME_TOLERANCE

    @pytest.mark.parametrize("scheme", [DUAL_LOOP, FLAT, REACT])
    @pytest.mark.parametrize(
        "error", [AuthFailure("credentials rejected"), UnknownTask("T001"), TransportError("endpoint down")]
    )
    def test_planner_errors_are_planning_failures(self, scheme, error, make_task, make_context):
        result = run_task(scheme, make_task(VIDEO_PAIR), RaisingPlanner(error), make_context())
        assert result.outcome == PLANNING_FAILURE
        assert result.detail == str(error)
        assert result.calls == []

    def test_unknown_scheme(self, make_task, make_context):
        with pytest.raises(ValueError):
            run_task("tree-of-thought", make_task(VIDEO_PAIR), StaticPlanner("DONE"), make_context())


class TestBudgets:
    def test_planning_cap(self):
        assert Budgets(max_rounds=4, max_replans=2).planning_cap(5) == 64
        assert Budgets(max_rounds=0).planning_cap(5) == 0

    def test_account_checks_before_each_call(self):
        account = PlanningAccount(1)
        account.charge()
        with pytest.raises(PlanningBudgetExhausted):
            account.charge()
        assert account.invocations == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            Budgets(max_rounds=-1)
        with pytest.raises(ValueError):
            Budgets(few_shot_k=4)

    def test_context_requires_role_coverage(self, registry, roles, topology):
        with pytest.raises(ValueError):
            RunContext(registry, roles[:-1], topology)
        with pytest.raises(ValueError):
            RunContext(registry, roles, topology, mode="space")


class TestExecutor:
    def test_waves_share_a_clock(self, registry, make_task, make_context):
        task = make_task(REPORT_CHAIN)
        executor = Executor(make_context(), task)
        dag = parse_plan('1. detect_objects(video="a")', registry)
        first = executor.run_wave([ExecutionRequest("a", dag, {1: "a.1"}), ExecutionRequest("b", dag, {1: "b.1"})])
        assert [r.trace.events[0].key for r in first] == ["a.1", "b.1"]
        end = executor.clock
        assert end > 0
        second = executor.run_wave([ExecutionRequest("c", dag, {1: "c.1"}, attempt=2)])
        assert second[0].schedule.start[1] >= end
        assert second[0].trace.events[0].attempt == 2
        assert len(executor.waves) == 2

    def test_memory_bank_is_optional(self, registry, roles, topology):
        ctx = RunContext(registry, roles, topology, memory=MemoryBank(shared=True))
        assert ctx.store_for("Video-Agent") is ctx.store_for(GLOBAL_AGENT)
        assert RunContext(registry, roles, topology).store_for("Video-Agent") is None


class TestProperties:
    def test_planning_never_exceeds_the_cap(self, registry, make_context):
        tasks = generate_taskset(5, {"easy": 3, "medium": 3, "hard": 3}, registry)
        budgets = {"max_rounds": 2, "max_replans": 1}
        cap = Budgets(**budgets).planning_cap(len(ROLE_NAMES))
        outcomes = set()
        for seed in range(4):
            planner = scripted(registry, *tasks, error_model=ErrorModel(eps=0.4), seed=seed)
            for task in tasks:
                ctx = make_context(**budgets)
                ctx.failure_model = FailureModel(p_tool=0.1)
                ctx.seed = seed
                result = run_task(DUAL_LOOP, task, planner, ctx)
                assert result.planning_invocations <= cap
                outcomes.add(result.outcome)
        assert len(outcomes) > 1

    def test_subtasks_of_a_round_do_not_use_each_others_outputs(self, registry, make_context):
        tasks = generate_taskset(2, {"medium": 4, "hard": 4}, registry)
        planner = scripted(registry, *tasks)
        for task in tasks:
            result = run_task(DUAL_LOOP, task, planner, make_context())
            assert result.success
            by_round = {}
            for outcome in result.subtasks:
                by_round.setdefault(outcome.subtask.round, []).append(outcome)
            for outcomes in by_round.values():
                for a in outcomes:
                    used = {v for call in a.calls for v in call.args.values() if isinstance(v, str)}
                    for b in outcomes:
                        if b is not a:
                            assert not used & {call.output for call in b.calls if call.output}

    @pytest.mark.slow
    @pytest.mark.parametrize("scheme", [DUAL_LOOP, FLAT, REACT])
    def test_error_free_runs_execute_the_ground_truth_multiset(self, scheme, registry, make_context):
        tasks = generate_taskset(0, {"easy": 10, "medium": 10, "hard": 10}, registry)
        planner = scripted(registry, *tasks)
        for task in tasks:
            result = run_task(scheme, task, planner, make_context())
            assert result.success
            assert result.executed_tools() == sorted(task.ground_truth.tools)
