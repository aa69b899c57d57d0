"""
Experiment driver and report emission.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from .corpus import DIFFICULTIES, Task, corpus_to_json
from .memory import MemoryBank
from .netsim import FailureModel
from .orchestrator import COLLAB, MODES, SCHEMES, Budgets, RoleProfile, RunContext, TaskResult, run_task
from .planners import ERROR_KINDS, ErrorModel, HttpPlanner, Planner, ReplayPlanner, ScriptedPlanner
from .plan import ToolRegistry
from .topology import DeviceTopology

logger = logging.getLogger(__name__)

SCRIPTED = "scripted"
HTTP = "http"
REPLAY = "replay"
BACKENDS = (SCRIPTED, HTTP, REPLAY)

SR_FILE = "sr_by_difficulty.csv"
LATENCY_FILE = "latency_by_toolcount.csv"
REPORT_FILE = "report.json"
SR_COLUMNS = ["scheme", "difficulty", "sr", "n"]
LATENCY_COLUMNS = ["scheme", "mode", "tool_count", "mean_latency_s", "n"]


@dataclass(frozen=True)
class RunConfig:
    corpus: str
    topology: Optional[str] = None
    tools: Optional[str] = None
    roles: Optional[str] = None
    schemes: Tuple[str, ...] = SCHEMES
    modes: Tuple[str, ...] = (COLLAB,)
    backend: str = SCRIPTED
    seeds: Tuple[int, ...] = (0,)
    eps: float = 0.05
    error_mix: Dict[str, float] = field(default_factory=lambda: {k: 1 / 3 for k in ERROR_KINDS})
    relief: float = 0.5
    eps_min: float = 0.005
    p_tool: float = 0.0
    budgets: Budgets = field(default_factory=Budgets)
    memory: bool = True
    shared_memory: bool = False
    memory_dir: Optional[str] = None
    replay_log: Optional[str] = None

    def __post_init__(self):
        for name in ("schemes", "modes", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        unknown = [s for s in self.schemes if s not in SCHEMES] + [m for m in self.modes if m not in MODES]
        if unknown:
            raise ValueError(f"Unknown schemes or modes: {unknown}")
        if self.backend not in BACKENDS:
            raise ValueError(f"Unknown backend: {self.backend}")

    @property
    def error_model(self) -> ErrorModel:
        return ErrorModel(eps=self.eps, mix=self.error_mix, relief=self.relief, eps_min=self.eps_min)

    def to_dict(self):
        data = asdict(self)
        data["schemes"] = list(self.schemes)
        data["modes"] = list(self.modes)
        data["seeds"] = list(self.seeds)
        return data


@dataclass(frozen=True)
class TaskRecord:
    scheme: str
    mode: str
    task: str
    seed: int
    difficulty: str
    tool_count: int
    outcome: str
    success: bool
    failure_class: Optional[str]
    rounds: int
    planning_invocations: int
    planning_latency_s: float
    execution_latency_s: float

    @classmethod
    def from_result(cls, result: TaskResult, task: Task, mode: str, seed: int) -> "TaskRecord":
        return cls(
            scheme=result.scheme,
            mode=mode,
            task=task.id,
            seed=seed,
            difficulty=task.difficulty,
            tool_count=task.tool_count,
            outcome=result.outcome,
            success=result.success,
            failure_class=result.failure_class,
            rounds=result.rounds,
            planning_invocations=result.planning_invocations,
            planning_latency_s=result.planning_latency_s,
            execution_latency_s=result.execution_latency_s,
        )

    @property
    def key(self):
        return (SCHEMES.index(self.scheme), MODES.index(self.mode), self.task, self.seed)


@dataclass
class Report:
    config: Dict[str, object]
    config_digest: str
    records: List[TaskRecord] = field(default_factory=list)

    @property
    def seeds(self) -> List[int]:
        return sorted({r.seed for r in self.records})

    def frame(self) -> pd.DataFrame:
        columns = list(TaskRecord.__dataclass_fields__)
        return pd.DataFrame([asdict(r) for r in self.records], columns=columns)

    def sr_table(self) -> pd.DataFrame:
        df = self.frame()
        if df.empty:
            return pd.DataFrame(columns=SR_COLUMNS)
        table = (
            df.groupby(["scheme", "difficulty"])["success"]
            .agg(sr="mean", n="count")
            .reset_index()
        )
        table["_order"] = table["scheme"].map(SCHEMES.index) * 10 + table["difficulty"].map(DIFFICULTIES.index)
        return table.sort_values("_order")[SR_COLUMNS].reset_index(drop=True)

    def latency_table(self) -> pd.DataFrame:
        df = self.frame()
        df = df[df["success"].astype(bool)] if not df.empty else df
        if df.empty:
            return pd.DataFrame(columns=LATENCY_COLUMNS)
        table = (
            df.groupby(["scheme", "mode", "tool_count"])["execution_latency_s"]
            .agg(mean_latency_s="mean", n="count")
            .reset_index()
        )
        table["_order"] = table["scheme"].map(SCHEMES.index) * 10 + table["mode"].map(MODES.index)
        return table.sort_values(["_order", "tool_count"])[LATENCY_COLUMNS].reset_index(drop=True)

    def planning_table(self) -> pd.DataFrame:
        df = self.frame()
        if df.empty:
            return pd.DataFrame(columns=["scheme", "mean_invocations", "total_invocations"])
        table = df.groupby("scheme")["planning_invocations"].agg(mean_invocations="mean", total_invocations="sum")
        return table.reset_index()

    def to_dict(self):
        return {
            "config": self.config,
            "config_digest": self.config_digest,
            "seeds": self.seeds,
            "sr_by_difficulty": _records(self.sr_table()),
            "latency_by_toolcount": _records(self.latency_table()),
            "planning_invocations": _records(self.planning_table()),
            "records": [asdict(r) for r in sorted(self.records, key=lambda r: r.key)],
        }


def _records(df: pd.DataFrame) -> List[dict]:
    """Rows as plain Python values (numpy scalars are not JSON serializable)"""
    return [{k: v.item() if hasattr(v, "item") else v for k, v in row.items()} for row in df.to_dict(orient="records")]


def config_digest(config: RunConfig, tasks: Sequence[Task]) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True) + corpus_to_json(tasks)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def make_planner(config: RunConfig, tasks, registry, seed) -> Planner:
    if config.backend == SCRIPTED:
        return ScriptedPlanner(tasks, registry, config.error_model, seed)
    if config.backend == HTTP:
        return HttpPlanner(replay_log=config.replay_log)
    return ReplayPlanner(config.replay_log)


def run_experiment(
    config: RunConfig,
    tasks: Sequence[Task],
    registry: ToolRegistry,
    roles: Sequence[RoleProfile],
    topology: DeviceTopology,
    planner_factory: Optional[Callable[[RunConfig, Sequence[Task], ToolRegistry, int], Planner]] = None,
    progress: bool = False,
) -> Report:
    """
    Every (scheme, mode, seed) cell runs the corpus in task order with a
    fresh memory bank; records come back sorted by (scheme, mode, task, seed).
    """
    planner_factory = planner_factory or make_planner
    tasks = sorted(tasks, key=lambda t: t.id)
    failure_model = FailureModel(config.p_tool)
    total = len(config.schemes) * len(config.modes) * len(config.seeds) * len(tasks)
    records = []

    with tqdm(total=total, desc="bench run", unit="task", disable=not progress) as bar:
        for scheme in config.schemes:
            for mode in config.modes:
                for seed in config.seeds:
                    memory = None
                    if config.memory:
                        directory = None
                        if config.memory_dir:
                            directory = Path(config.memory_dir) / f"{scheme}-{mode}-{seed}"
                        memory = MemoryBank(directory, shared=config.shared_memory)
                    ctx = RunContext(
                        registry=registry,
                        roles=roles,
                        topology=topology,
                        mode=mode,
                        budgets=config.budgets,
                        failure_model=failure_model,
                        seed=seed,
                        memory=memory,
                    )
                    planner = planner_factory(config, tasks, registry, seed)
                    for task in tasks:
                        result = run_task(scheme, task, planner, ctx)
                        records.append(TaskRecord.from_result(result, task, mode, seed))
                        bar.update(1)
                    logger.info("%s/%s seed %d: %d tasks", scheme, mode, seed, len(tasks))

    records.sort(key=lambda r: r.key)
    return Report(config.to_dict(), config_digest(config, tasks), records)


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def emit_report(report: Report, out_dir) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / SR_FILE, out / LATENCY_FILE, out / REPORT_FILE]
    _write(paths[0], report.sr_table().to_csv(index=False, lineterminator="\n", float_format="%.6f"))
    _write(paths[1], report.latency_table().to_csv(index=False, lineterminator="\n", float_format="%.6f"))
    _write(paths[2], json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    return paths


def render_report(in_dir, console: Optional[Console] = None):
    """Print the CSV tables of a report directory as aligned tables"""
    console = console or Console()
    folder = Path(in_dir)
    for filename, title in ((SR_FILE, "Success rate by difficulty"), (LATENCY_FILE, "Mean latency by tool count")):
        df = pd.read_csv(folder / filename)
        table = Table(title=title)
        for column in df.columns:
            table.add_column(column, justify="left" if df[column].dtype == object else "right")
        for row in df.itertuples(index=False):
            table.add_row(*(f"{v:.3f}" if isinstance(v, float) else str(v) for v in row))
        console.print(table)
