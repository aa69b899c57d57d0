import json

import pytest
import requests

from dualloop.corpus import ANOMALY_LABELS, Task
from dualloop.memory import MemoryBank
from dualloop.orchestrator import Budgets, RunContext
from dualloop.plan import PlanDag, PlanNode, Ref, ToolRegistry, ToolSpec
from dualloop.planners import Planner, PlannerReply
from dualloop.serializers import load_registry, load_roles, load_topology
from dualloop.topology import Device, DeviceTopology

# 1 Video-Agent subtask with an internal dependency
VIDEO_PAIR = '1. detect_objects(video="clip_03")\n2. classify_anomaly(objects=$1, model="anomaly-v2")'

# two roles in round one, the report in round two
REPORT_CHAIN = (
    '1. detect_objects(video="clip_03")\n'
    '2. fetch_weather(location="cell_17")\n'
    '3. write_report(events=$1, frames="frames_last_60s", weather=$2)'
)


@pytest.fixture(scope="session")
def registry():
    return load_registry()


@pytest.fixture(scope="session")
def roles(registry):
    return load_roles(registry)


@pytest.fixture(scope="session")
def topology():
    return load_topology()


@pytest.fixture
def make_task(registry):
    def factory(ground_truth, task_id="T001", difficulty="easy", scenario="fire", home_terminal="terminal-00"):
        return Task.from_dict(
            {
                "id": task_id,
                "instruction": f"A {scenario} was reported near cell_17. Coordinate the response.",
                "scenario": scenario,
                "difficulty": difficulty,
                "home_terminal": home_terminal,
                "fixture": {"anomaly_labels": list(ANOMALY_LABELS[scenario]), "location": "cell_17"},
                "ground_truth": ground_truth,
            },
            registry,
        )

    return factory


@pytest.fixture
def make_context(registry, roles, topology):
    def factory(mode="collab", memory=False, **budgets):
        return RunContext(
            registry=registry,
            roles=roles,
            topology=topology,
            mode=mode,
            budgets=Budgets(**budgets),
            memory=MemoryBank() if memory else None,
        )

    return factory


def random_registry(rng, count=6, param_count=2):
    tools = []
    for i in range(count):
        tools.append(
            ToolSpec(
                name=f"tool_{i}",
                param_names=tuple(f"p{j}" for j in range(param_count)),
                work=float(rng.uniform(1.0, 5.0)),
                output_size=float(rng.choice([0.0, 10.0, 200.0])),
            )
        )
    return ToolRegistry(tools)


def random_dag(rng, registry, node_count, edge_p=0.4):
    """Random forward DAG whose references bind the first free parameters"""
    names = registry.names
    nodes = []
    for node_id in range(1, node_count + 1):
        tool = registry.get(names[int(rng.integers(len(names)))])
        parents = [k for k in range(1, node_id) if rng.random() < edge_p][: len(tool.param_names)]
        args = []
        for index, param in enumerate(tool.param_names):
            if index < len(parents):
                args.append((param, Ref(parents[index])))
            else:
                args.append((param, f"v{node_id}_{index}"))
        nodes.append(PlanNode(node_id, tool.name, tuple(args)))
    return PlanDag(tuple(nodes))


def random_topology(rng, zero_comm=False):
    devices = [Device("terminal-0", "terminal", 1.0)]
    for i in range(int(rng.integers(0, 2))):
        devices.append(Device(f"edge-{i}", "edge", float(rng.choice([2.0, 4.0]))))
    if len(devices) < 3 and rng.random() < 0.5:
        devices.append(Device("cloud-0", "cloud", 8.0))
    if zero_comm:
        return DeviceTopology.uniform(devices)
    return DeviceTopology.uniform(devices, latency_s=float(rng.uniform(0.0, 0.5)), bandwidth_kbps=100.0)


class StaticPlanner(Planner):
    """Replies with the same text to every request and keeps the requests"""

    name = "static"

    def __init__(self, text):
        self.text = text
        self.requests = []

    def plan(self, request):
        self.requests.append(request)
        return PlannerReply(self.text)


class StubResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        if self._payload is None:
            raise ValueError("no JSON body")
        return self._payload


def completion(text):
    return StubResponse(200, {"choices": [{"message": {"role": "assistant", "content": text}}]})


class StubSession:
    """Plays back scripted responses (or raises scripted exceptions) in order"""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        response = self.responses.pop(0)
        if isinstance(response, Exception):
            raise response
        return response


@pytest.fixture
def stub_session():
    return StubSession


@pytest.fixture
def timeout_error():
    return requests.Timeout("read timed out")


def read_jsonl(path):
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
