"""
Discrete-event execution of a Schedule.

One simpy process pops node completions from a queue ordered by (time, node
id), so simultaneous events resolve the same way on every run. A node is
queued once its parents resolved and runs its tool stub at its scheduled
finish time. Faults are discovered at finish time and every descendant of a
faulted node is skipped.
"""

import heapq
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import networkx as nx
import simpy

from .exceptions import MissingRuntime
from .plan import PlanDag, Ref, ToolRegistry
from .scheduling import Schedule, TIME_TOLERANCE
from .streams import keyed_uniform

logger = logging.getLogger(__name__)

OK = "ok"
FAULT = "fault"
SKIPPED = "skipped"
STATUSES = (OK, FAULT, SKIPPED)

# tools whose output carries the task's canned perception labels
PERCEPTION_TOOLS = ("detect_objects", "classify_anomaly")


@dataclass(frozen=True)
class ToolFault:
    reason: str = "tool fault"


@dataclass(frozen=True)
class ToolCall:
    """Everything a tool behavior may look at"""

    task_id: str
    node_key: str
    tool: str
    args: Dict[str, object]
    fixture: Mapping[str, object]
    seed: int
    attempt: int


Behavior = Callable[[ToolCall], Union[str, ToolFault]]


def default_token(call: ToolCall) -> str:
    return f"{call.task_id}:{call.node_key}:{call.tool}"


@dataclass(frozen=True)
class ToolRuntime:
    name: str
    behavior: Behavior = default_token
    fallible: bool = True
    fixtures: Mapping[str, str] = field(default_factory=dict)

    def run(self, call: ToolCall) -> Union[str, ToolFault]:
        if call.task_id in self.fixtures:
            return self.fixtures[call.task_id]
        return self.behavior(call)


def perception_behavior(call: ToolCall) -> str:
    labels = call.fixture.get("anomaly_labels") or []
    token = default_token(call)
    return f"{token}[{';'.join(labels)}]" if labels else token


def default_runtimes(registry: ToolRegistry) -> Dict[str, ToolRuntime]:
    runtimes = {}
    for tool in registry:
        behavior = perception_behavior if tool.name in PERCEPTION_TOOLS else default_token
        runtimes[tool.name] = ToolRuntime(tool.name, behavior, tool.fallible)
    return runtimes


@dataclass(frozen=True)
class FailureModel:
    """
    Per-tool fault probabilities plus forced faults. An injection is
    ``(task id, node key)`` and fires on attempt 1, or
    ``(task id, node key, attempt)`` for a specific attempt.
    """

    p_tool: Union[float, Mapping[str, float]] = 0.0
    injections: frozenset = frozenset()

    def __post_init__(self):
        values = self.p_tool.values() if isinstance(self.p_tool, Mapping) else [self.p_tool]
        for p in values:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"fault probability {p} outside [0, 1]")
        normalized = set()
        for entry in self.injections:
            entry = tuple(entry)
            if len(entry) == 2:
                entry = (str(entry[0]), str(entry[1]), 1)
            elif len(entry) == 3:
                entry = (str(entry[0]), str(entry[1]), int(entry[2]))
            else:
                raise ValueError(f"invalid fault injection {entry!r}")
            normalized.add(entry)
        object.__setattr__(self, "injections", frozenset(normalized))

    def probability(self, tool: str) -> float:
        if isinstance(self.p_tool, Mapping):
            return float(self.p_tool.get(tool, 0.0))
        return float(self.p_tool)

    def injected(self, task_id, node_key, attempt) -> bool:
        return (str(task_id), str(node_key), int(attempt)) in self.injections


NO_FAILURES = FailureModel()


@dataclass(frozen=True)
class NodeEvent:
    task: str
    node: int
    key: str
    tool: str
    device: Optional[str]
    start_s: Optional[float]
    finish_s: Optional[float]
    status: str
    output: Optional[str]
    attempt: int

    def to_dict(self):
        return {
            "task": self.task,
            "node": self.key,
            "tool": self.tool,
            "device": self.device,
            "start_s": self.start_s,
            "finish_s": self.finish_s,
            "status": self.status,
            "attempt": self.attempt,
        }


@dataclass(frozen=True)
class ExecutionTrace:
    events: Tuple[NodeEvent, ...]
    end_time_s: float
    seed: int

    def event(self, node_id) -> NodeEvent:
        for event in self.events:
            if event.node == node_id:
                return event
        raise KeyError(node_id)

    def counts(self) -> Dict[str, int]:
        counter = Counter(event.status for event in self.events)
        return {status: counter.get(status, 0) for status in STATUSES}

    @property
    def ok(self) -> bool:
        return all(event.status == OK for event in self.events)

    def outputs(self) -> Dict[int, str]:
        return {event.node: event.output for event in self.events if event.status == OK}

    def devices_used(self) -> set:
        return {event.device for event in self.events if event.device is not None}


def trace_to_jsonl(trace: ExecutionTrace) -> str:
    return "".join(json.dumps(event.to_dict(), sort_keys=True) + "\n" for event in trace.events)


def _resolve_args(node, outputs) -> Dict[str, object]:
    return {name: outputs[value.node] if isinstance(value, Ref) else value for name, value in node.args}


def simulate(
    schedule: Schedule,
    dag: PlanDag,
    runtimes: Mapping[str, ToolRuntime],
    failure_model: Optional[FailureModel] = None,
    seed: int = 0,
    *,
    task_id: str = "task",
    attempt: int = 1,
    node_keys: Optional[Mapping[int, str]] = None,
    attempts: Optional[Mapping[int, int]] = None,
    fixture: Optional[Mapping[str, object]] = None,
) -> ExecutionTrace:
    """
    Run a schedule; the trace is a pure function of the arguments.
    ``attempts`` overrides ``attempt`` per node when several plans share one run.
    """
    for node in dag.nodes:
        if node.tool not in runtimes:
            raise MissingRuntime(node.tool)
    failure_model = failure_model or NO_FAILURES
    keys = {n: str(n) for n in dag.ids}
    keys.update({n: str(k) for n, k in (node_keys or {}).items()})
    attempt_of = {n: int((attempts or {}).get(n, attempt)) for n in dag.ids}
    fixture = fixture or {}

    env = simpy.Environment()
    events: Dict[int, NodeEvent] = {}
    outputs: Dict[int, str] = {}
    waiting = {n: len(dag.parents(n)) for n in dag.ids}
    due: List[Tuple[float, int]] = []

    def execute(node):
        key = keys[node.id]
        runtime = runtimes[node.tool]
        attempt_no = attempt_of[node.id]
        if failure_model.injected(task_id, key, attempt_no):
            return FAULT, None
        p = failure_model.probability(node.tool) if runtime.fallible else 0.0
        if p > 0 and keyed_uniform(seed, "fault", task_id, key, attempt_no) < p:
            return FAULT, None
        call = ToolCall(task_id, key, node.tool, _resolve_args(node, outputs), fixture, seed, attempt_no)
        result = runtime.run(call)
        if isinstance(result, ToolFault):
            return FAULT, None
        return OK, result

    def blocked(node_id) -> bool:
        return any(events[p].status != OK for p in dag.parents(node_id))

    def release(node_id):
        """Queue a node whose parents all resolved: at once if it is skipped, else at its finish time"""
        at = env.now if blocked(node_id) else max(env.now, schedule.finish[node_id])
        heapq.heappush(due, (at, node_id))

    def dispatcher():
        while due:
            at, node_id = heapq.heappop(due)
            yield env.timeout(max(0.0, at - env.now))
            node = dag.node(node_id)
            if blocked(node_id):
                events[node_id] = NodeEvent(
                    task_id, node_id, keys[node_id], node.tool, None, None, None, SKIPPED, None, attempt_of[node_id]
                )
            else:
                status, output = execute(node)
                if status == OK:
                    outputs[node_id] = output
                events[node_id] = NodeEvent(
                    task_id, node_id, keys[node_id], node.tool, schedule.assignment[node_id],
                    schedule.start[node_id], schedule.finish[node_id], status, output, attempt_of[node_id],
                )
            for child in dag.children(node_id):
                waiting[child] -= 1
                if waiting[child] == 0:
                    release(child)

    for node_id in dag.ids:
        if waiting[node_id] == 0:
            release(node_id)
    env.process(dispatcher())
    env.run()

    ordered = tuple(events[n] for n in dag.ids)
    end = max((e.finish_s for e in ordered if e.finish_s is not None), default=0.0)
    trace = ExecutionTrace(ordered, end, seed)
    logger.debug("simulated %s attempt %d: %s", task_id, attempt, trace.counts())
    return trace


def replay(trace: ExecutionTrace, dag: PlanDag, schedule: Optional[Schedule] = None) -> List[str]:
    """Re-check a trace against the DAG; returns violations (empty when consistent)"""
    violations = []
    by_node: Dict[int, List[NodeEvent]] = {}
    for event in trace.events:
        by_node.setdefault(event.node, []).append(event)
    for node_id in dag.ids:
        found = by_node.get(node_id, [])
        if len(found) != 1:
            violations.append(f"node {node_id} has {len(found)} terminal statuses")
    extra = sorted(set(by_node) - set(dag.ids))
    if extra:
        violations.append(f"events for unknown nodes {extra}")
    if violations:
        return violations

    status = {n: by_node[n][0].status for n in dag.ids}
    for node_id in dag.ids:
        event = by_node[node_id][0]
        if event.status not in STATUSES:
            violations.append(f"node {node_id} has invalid status {event.status!r}")
            continue
        faulty_ancestor = any(status[a] == FAULT for a in nx.ancestors(dag.graph, node_id))
        if faulty_ancestor and event.status != SKIPPED:
            violations.append(f"node {node_id} should be skipped (faulted ancestor) but is {event.status}")
        if event.status == SKIPPED:
            if not faulty_ancestor:
                violations.append(f"node {node_id} is skipped without a faulted ancestor")
            if event.start_s is not None or event.finish_s is not None or event.device is not None:
                violations.append(f"skipped node {node_id} carries execution times")
            continue
        if event.start_s is None or event.finish_s is None or event.device is None:
            violations.append(f"node {node_id} ran without device or times")
            continue
        if event.finish_s < event.start_s:
            violations.append(f"node {node_id} finishes before it starts")
        for parent in dag.parents(node_id):
            parent_event = by_node[parent][0]
            if parent_event.finish_s is not None and event.start_s < parent_event.finish_s - TIME_TOLERANCE:
                violations.append(f"node {node_id} starts before parent {parent} finishes")
        if schedule is not None and (
            abs(event.start_s - schedule.start[node_id]) > TIME_TOLERANCE
            or abs(event.finish_s - schedule.finish[node_id]) > TIME_TOLERANCE
        ):
            violations.append(f"node {node_id} times differ from the schedule")

    intervals: Dict[str, List[Tuple[float, float, int]]] = {}
    for event in trace.events:
        if event.status != SKIPPED and event.device is not None and event.start_s is not None:
            intervals.setdefault(event.device, []).append((event.start_s, event.finish_s, event.node))
    for device_id, items in intervals.items():
        items.sort()
        for (s1, f1, n1), (s2, f2, n2) in zip(items, items[1:]):
            if s2 < f1 - TIME_TOLERANCE:
                violations.append(f"device {device_id}: nodes {n1} and {n2} overlap")

    finishes = [e.finish_s for e in trace.events if e.finish_s is not None]
    expected_end = max(finishes, default=0.0)
    if abs(trace.end_time_s - expected_end) > TIME_TOLERANCE:
        violations.append(f"end time {trace.end_time_s} != last finish {expected_end}")
    if schedule is not None and all(s == OK for s in status.values()):
        if abs(trace.end_time_s - schedule.makespan) > TIME_TOLERANCE:
            violations.append(f"zero-failure end time {trace.end_time_s} != makespan {schedule.makespan}")
    return violations
