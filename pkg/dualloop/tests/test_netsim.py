from dataclasses import replace

import numpy as np
import pytest

from dualloop.exceptions import MissingRuntime
from dualloop.netsim import (
    FAULT,
    OK,
    SKIPPED,
    FailureModel,
    ToolFault,
    ToolRuntime,
    default_runtimes,
    replay,
    simulate,
    trace_to_jsonl,
)
from dualloop.plan import parse_plan
from dualloop.scheduling import TIME_TOLERANCE, Schedule, priority_schedule
from dualloop.tests.conftest import REPORT_CHAIN, VIDEO_PAIR, random_dag, random_registry, random_topology
from dualloop.topology import TIERS, Device, DeviceTopology

WEATHER_PAIR = '1. fetch_weather(location="a")\n2. fetch_weather(location="b")'


def random_instance(rng):
    registry = random_registry(rng, count=4)
    dag = random_dag(rng, registry, int(rng.integers(1, 9)))
    topo = random_topology(rng)
    return registry, dag, priority_schedule(dag, topo, registry, TIERS)


class TestSimulate:
    def test_zero_failure_end_time_equals_makespan(self):
        rng = np.random.default_rng(21)
        for _ in range(500):
            registry, dag, schedule = random_instance(rng)
            trace = simulate(schedule, dag, default_runtimes(registry))
            assert trace.ok
            assert abs(trace.end_time_s - schedule.makespan) <= TIME_TOLERANCE
            assert replay(trace, dag, schedule) == []

    def test_randomized_faults_keep_skip_closure(self):
        rng = np.random.default_rng(22)
        for run in range(1000):
            registry, dag, schedule = random_instance(rng)
            model = FailureModel(p_tool=float(rng.uniform(0.0, 0.6)))
            trace = simulate(schedule, dag, default_runtimes(registry), model, seed=run)
            # every node ends with exactly one status
            assert sum(trace.counts().values()) == len(dag)
            assert replay(trace, dag, schedule) == []
            blocked = dag.descendants({e.node for e in trace.events if e.status == FAULT})
            assert all(trace.event(n).status == SKIPPED for n in blocked)

    def test_same_seed_traces_are_byte_identical(self, registry, topology):
        dag = parse_plan(REPORT_CHAIN, registry)
        schedule = priority_schedule(dag, topology, registry, TIERS)
        model = FailureModel(p_tool=0.3)
        runs = [
            trace_to_jsonl(simulate(schedule, dag, default_runtimes(registry), model, seed=7, task_id="T001"))
            for _ in range(2)
        ]
        assert runs[0] == runs[1]

    def test_outputs_flow_into_dependents(self, registry, topology, make_task):
        task = make_task(VIDEO_PAIR)
        dag = task.ground_truth.dag
        schedule = priority_schedule(dag, topology, registry, TIERS)
        seen = {}

        def capture(call):
            seen.update(call.args)
            return "label"

        runtimes = default_runtimes(registry)
        runtimes["classify_anomaly"] = ToolRuntime("classify_anomaly", capture)
        trace = simulate(schedule, dag, runtimes, task_id=task.id, fixture=task.fixture)
        detected = trace.event(1).output
        assert detected == "T001:1:detect_objects[smoke;open_flame]"
        assert seen == {"objects": detected, "model": "anomaly-v2"}
        assert trace.event(2).output == "label"

    def test_injected_fault_skips_descendants(self, registry, topology):
        dag = parse_plan(REPORT_CHAIN, registry)
        schedule = priority_schedule(dag, topology, registry, TIERS)
        keys = {1: "T001.a", 2: "T001.b", 3: "T001.c"}
        model = FailureModel(injections={("T001", "T001.a")})
        trace = simulate(schedule, dag, default_runtimes(registry), model, task_id="T001", node_keys=keys)
        assert [e.status for e in trace.events] == [FAULT, OK, SKIPPED]
        assert trace.event(3).device is None
        assert trace.counts() == {OK: 1, FAULT: 1, SKIPPED: 1}

    def test_injection_fires_on_its_attempt_only(self, registry, topology):
        dag = parse_plan('1. detect_objects(video="a")', registry)
        schedule = priority_schedule(dag, topology, registry, TIERS)
        model = FailureModel(injections={("T001", "k", 2)})
        runtimes = default_runtimes(registry)
        first = simulate(schedule, dag, runtimes, model, task_id="T001", node_keys={1: "k"})
        second = simulate(schedule, dag, runtimes, model, task_id="T001", node_keys={1: "k"}, attempt=2)
        per_node = simulate(schedule, dag, runtimes, model, task_id="T001", node_keys={1: "k"}, attempts={1: 2})
        assert first.ok
        assert not second.ok
        assert not per_node.ok
        assert per_node.events[0].attempt == 2

    @pytest.mark.parametrize(
        "start, finish, order",
        [
            ({1: 1.0, 2: 0.0}, {1: 2.0, 2: 2.0}, ["1", "2"]),
            ({1: 0.0, 2: 1.0}, {1: 2.0, 2: 2.0}, ["1", "2"]),
            ({1: 0.0, 2: 0.0}, {1: 2.0, 2: 1.5}, ["2", "1"]),
        ],
    )
    def test_simultaneous_events_resolve_by_node_id(self, registry, start, finish, order):
        dag = parse_plan(WEATHER_PAIR, registry)
        schedule = Schedule({1: "edge-0", 2: "edge-1"}, start, finish)
        seen = []

        def behavior(call):
            seen.append(call.node_key)
            return call.node_key

        simulate(schedule, dag, {"fetch_weather": ToolRuntime("fetch_weather", behavior)})
        assert seen == order

    def test_fault_counts_are_binomial(self, registry):
        dag = parse_plan("\n".join(f'{i}. fetch_weather(location="c{i}")' for i in range(1, 6)), registry)
        topo = DeviceTopology.uniform([Device("cloud-0", "cloud", 8.0)])
        schedule = priority_schedule(dag, topo, registry, TIERS)
        runtimes = {"fetch_weather": ToolRuntime("fetch_weather")}
        model = FailureModel(p_tool=0.3)
        faults = sum(
            simulate(schedule, dag, runtimes, model, seed=seed).counts()[FAULT] for seed in range(100)
        )
        trials = 100 * len(dag)
        sigma = (trials * 0.3 * 0.7) ** 0.5
        assert abs(faults - 0.3 * trials) <= 3 * sigma

    def test_tool_fault_from_runtime(self, registry, topology):
        dag = parse_plan('1. detect_objects(video="a")', registry)
        schedule = priority_schedule(dag, topology, registry, TIERS)
        runtimes = {"detect_objects": ToolRuntime("detect_objects", lambda call: ToolFault("camera offline"))}
        assert simulate(schedule, dag, runtimes).events[0].status == FAULT

    def test_infallible_tools_ignore_fault_probability(self, registry, topology):
        dag = parse_plan('1. detect_objects(video="a")', registry)
        schedule = priority_schedule(dag, topology, registry, TIERS)
        runtimes = {"detect_objects": ToolRuntime("detect_objects", fallible=False)}
        assert simulate(schedule, dag, runtimes, FailureModel(p_tool=1.0)).ok

    def test_fixture_output_by_task(self, registry, topology):
        dag = parse_plan('1. fetch_weather(location="a")', registry)
        schedule = priority_schedule(dag, topology, registry, TIERS)
        runtimes = {"fetch_weather": ToolRuntime("fetch_weather", fixtures={"T009": "storm"})}
        assert simulate(schedule, dag, runtimes, task_id="T009").events[0].output == "storm"

    def test_missing_runtime(self, registry, topology):
        dag = parse_plan('1. detect_objects(video="a")', registry)
        schedule = priority_schedule(dag, topology, registry, TIERS)
        with pytest.raises(MissingRuntime):
            simulate(schedule, dag, {})


class TestFailureModel:
    def test_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            FailureModel(p_tool=1.5)

    def test_per_tool_probabilities(self):
        model = FailureModel(p_tool={"detect_objects": 0.25})
        assert model.probability("detect_objects") == 0.25
        assert model.probability("fetch_weather") == 0.0

    def test_injection_normalization(self):
        model = FailureModel(injections={("T001", "k")})
        assert model.injected("T001", "k", 1)
        assert not model.injected("T001", "k", 2)
        with pytest.raises(ValueError):
            FailureModel(injections={("T001",)})


class TestReplay:
    def test_detects_missing_skip(self, registry, topology):
        dag = parse_plan(VIDEO_PAIR, registry)
        schedule = priority_schedule(dag, topology, registry, TIERS)
        trace = simulate(schedule, dag, default_runtimes(registry), FailureModel(injections={("task", "1")}))
        assert trace.events[1].status == SKIPPED
        forged = replace(trace, events=(trace.events[0], replace(trace.events[1], status=OK)))
        assert any("should be skipped" in v for v in replay(forged, dag))

    def test_detects_swapped_start_times(self, registry):
        dag = parse_plan(WEATHER_PAIR, registry)
        topo = DeviceTopology.uniform([Device("terminal-0", "terminal", 1.0)])
        trace = simulate(priority_schedule(dag, topo, registry, TIERS), dag, default_runtimes(registry))
        assert replay(trace, dag) == []
        first, second = trace.events
        forged = replace(
            trace, events=(replace(first, start_s=second.start_s), replace(second, start_s=first.start_s))
        )
        assert any("overlap" in v for v in replay(forged, dag))
