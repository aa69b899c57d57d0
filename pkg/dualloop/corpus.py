"""
Emergency-response task corpus with ground-truth tool plans.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .plan import PlanDag, PlanNode, Ref, ToolRegistry, format_plan, parse_plan
from .streams import keyed_rng

logger = logging.getLogger(__name__)

DIFFICULTIES = ("easy", "medium", "hard")
DIFFICULTY_BINS = {"easy": (1, 2, 3), "medium": (4, 5, 6), "hard": (7, 8, 9)}
SCENARIOS = ("fire", "traffic accident", "flood", "intrusion")

ANOMALY_LABELS = {
    "fire": ["smoke", "open_flame"],
    "traffic accident": ["collision", "stopped_vehicle"],
    "flood": ["rising_water", "submerged_road"],
    "intrusion": ["person_in_restricted_area"],
}

# literal pools for parameters not bound to an upstream output
PARAM_POOLS = {
    "video": ["clip_03", "clip_07", "clip_12", "clip_21", "clip_34"],
    "objects": ["objects_latest", "objects_gate_cam"],
    "model": ["anomaly-v2", "anomaly-lite"],
    "frames": ["frames_last_60s", "frames_gate_cam"],
    "top_k": [2, 3, 4, 5],
    "style": ["brief", "detailed"],
    "clip": ["clip_03", "clip_12", "clip_34"],
    "retention_days": [7, 30, 90],
    "location": ["cell_17", "cell_04", "cell_22", "cell_31"],
    "weather": ["clear", "windy", "rain"],
    "hours": [1, 3, 6, 12],
    "pollutant": ["pm2_5", "co", "no2"],
    "evidence": ["camera_gps", "caller_report"],
    "region": ["district_1", "district_4", "riverside"],
    "origin": ["station_2", "depot_5"],
    "destination": ["cell_17", "cell_22", "riverside"],
    "kind": ["hospital", "fire_station", "shelter"],
    "events": ["events_log"],
    "message": ["incident_summary"],
    "channel": ["radio", "sms"],
    "alert": ["evacuation_notice", "road_closure"],
    "level": ["advisory", "warning", "severe"],
}


@dataclass(frozen=True)
class GroundTruthPlan:
    """Required tool calls with fixture literals; refs encode the partial order"""

    dag: PlanDag

    @property
    def tools(self) -> List[str]:
        return self.dag.tools()

    @property
    def tool_count(self) -> int:
        return len(self.dag)

    @property
    def precedences(self) -> List[Tuple[int, int]]:
        return sorted(self.dag.edges)

    def node_for_tool(self, tool) -> PlanNode:
        for node in self.dag.nodes:
            if node.tool == tool:
                return node
        raise KeyError(tool)


@dataclass(frozen=True)
class Task:
    id: str
    instruction: str
    scenario: str
    difficulty: str
    ground_truth: GroundTruthPlan
    fixture: Mapping[str, object] = field(default_factory=dict)
    home_terminal: str = "terminal-00"

    def __post_init__(self):
        if self.difficulty not in DIFFICULTY_BINS:
            raise ValueError(f"Invalid difficulty: {self.difficulty}")
        if self.ground_truth.tool_count not in DIFFICULTY_BINS[self.difficulty]:
            raise ValueError(
                f"Task {self.id}: {self.ground_truth.tool_count} tools is outside the {self.difficulty} bin"
            )

    @property
    def tool_count(self) -> int:
        return self.ground_truth.tool_count

    def to_dict(self):
        return {
            "id": self.id,
            "instruction": self.instruction,
            "scenario": self.scenario,
            "difficulty": self.difficulty,
            "home_terminal": self.home_terminal,
            "fixture": dict(self.fixture),
            "ground_truth": format_plan(self.ground_truth.dag),
        }

    @classmethod
    def from_dict(cls, data, registry: ToolRegistry) -> "Task":
        return cls(
            id=data["id"],
            instruction=data["instruction"],
            scenario=data["scenario"],
            difficulty=data["difficulty"],
            ground_truth=GroundTruthPlan(parse_plan(data["ground_truth"], registry)),
            fixture=data.get("fixture") or {},
            home_terminal=data.get("home_terminal", "terminal-00"),
        )


def describe(registry: ToolRegistry, tools: Sequence[str]) -> str:
    return "; ".join(f"{registry.get(name).description.lower()} ({name})" for name in tools)


def build_instruction(scenario, location, registry, tools) -> str:
    return f"A {scenario} was reported near {location}. Coordinate the response: {describe(registry, tools)}."


def _pick(rng, pool):
    return pool[int(rng.integers(len(pool)))]


def _layer_sizes(rng, tool_count, difficulty) -> List[int]:
    if difficulty == "easy":
        layers = int(rng.integers(1, min(2, tool_count) + 1))
    else:
        layers = {"medium": 2, "hard": 3}[difficulty]
    sizes = [1] * layers
    for _ in range(tool_count - layers):
        sizes[int(rng.integers(layers))] += 1
    return sizes


def generate_ground_truth(rng, registry: ToolRegistry, tool_count, difficulty) -> GroundTruthPlan:
    """Random layered partial order over tools drawn without replacement"""
    names = [str(n) for n in rng.choice(registry.names, size=tool_count, replace=False)]
    sizes = _layer_sizes(rng, tool_count, difficulty)

    nodes = []
    previous: List[int] = []
    cursor = 0
    for size in sizes:
        current = []
        for name in names[cursor:cursor + size]:
            node_id = len(nodes) + 1
            tool = registry.get(name)
            bound: Dict[str, Ref] = {}
            if previous:
                deps = min(int(rng.integers(1, 3)), len(previous), len(tool.param_names))
                parents = sorted(int(p) for p in rng.choice(previous, size=deps, replace=False))
                params = [str(p) for p in rng.choice(list(tool.param_names), size=deps, replace=False)]
                bound = {param: Ref(parent) for param, parent in zip(params, parents)}
            args = tuple(
                (param, bound[param] if param in bound else _pick(rng, PARAM_POOLS.get(param, [f"{param}_value"])))
                for param in tool.param_names
            )
            nodes.append(PlanNode(node_id, name, args))
            current.append(node_id)
        previous = current
        cursor += size
    return GroundTruthPlan(PlanDag(tuple(nodes)))


def _stratified_counts(rng, difficulty, count) -> List[int]:
    bin_counts = DIFFICULTY_BINS[difficulty]
    counts = [bin_counts[i % len(bin_counts)] for i in range(count)]
    return [int(c) for c in rng.permutation(counts)]


def generate_taskset(
    seed: int,
    counts: Mapping[str, int],
    registry: ToolRegistry,
    home_terminals: Sequence[str] = tuple(f"terminal-{i:02d}" for i in range(10)),
) -> List[Task]:
    """Deterministic corpus; tool counts cycle through each bin before shuffling"""
    rng = keyed_rng(seed, "corpus")
    tasks = []
    for difficulty in DIFFICULTIES:
        count = int(counts.get(difficulty, 0))
        if count < 0:
            raise ValueError(f"negative count for {difficulty}")
        for tool_count in _stratified_counts(rng, difficulty, count):
            scenario = _pick(rng, SCENARIOS)
            location = _pick(rng, PARAM_POOLS["location"])
            truth = generate_ground_truth(rng, registry, tool_count, difficulty)
            task_id = f"T{len(tasks) + 1:03d}"
            tasks.append(
                Task(
                    id=task_id,
                    instruction=build_instruction(scenario, location, registry, truth.tools),
                    scenario=scenario,
                    difficulty=difficulty,
                    ground_truth=truth,
                    fixture={"anomaly_labels": list(ANOMALY_LABELS[scenario]), "location": location},
                    home_terminal=_pick(rng, list(home_terminals)),
                )
            )
    logger.info("Generated %d tasks (seed=%d)", len(tasks), seed)
    return tasks


def corpus_to_json(tasks: Sequence[Task], seed: Optional[int] = None) -> str:
    payload = {"seed": seed, "tasks": [task.to_dict() for task in tasks]}
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
