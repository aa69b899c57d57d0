"""
Dual-loop orchestration.

The outer loop asks the global agent to decompose what remains of a task
into independent per-role subtasks, runs one inner loop per subtask and
folds a digest of their outputs back into the next round. An inner loop
plans a tool DAG, executes it and replans on parse errors or faults,
re-running only the failed part. Two single-agent baselines share the same
planners and executor: a ReAct loop (one tool per step, chain topology)
and a flat compiler (the whole task as one DAG).
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Generator, List, Mapping, Optional, Sequence, Tuple

from .conf import get_setting
from .corpus import Task
from .evaluation import evaluate_task
from .exceptions import ParseError, PlannerError, PlannerMalformedOutput, PlanSyntaxError, SubTaskFailed
from .execution import ExecutionRequest, ExecutionResult, Executor
from .memory import PROCEDURAL, SUCCESS, ExperienceRecord, MemoryBank, make_signature, retrieve_experiences
from .netsim import NO_FAILURES, OK, FailureModel, ToolRuntime, default_runtimes
from .plan import PlanDag, PlanNode, ToolRegistry, call_signature, format_plan, parse_plan, residual_dag, sequentialize
from .planners import Planner, PlannerReply, extract_plan_text, is_final
from .prompts import (
    DECOMPOSE,
    DONE_MARKER,
    FEW_SHOT_LIMIT,
    FLAT_PLAN,
    REACT_STEP,
    SUBTASK_PLAN,
    DigestEntry,
    Observation,
    PlannerRequest,
)
from .topology import TIERS, DeviceTopology

logger = logging.getLogger(__name__)

SUCCESS_OUTCOME = "success"
PLANNING_FAILURE = "planning_failure"
EXECUTION_FAILURE = "execution_failure"
EARLY_STOP = "early_stop"
BUDGET_EXHAUSTED = "budget_exhausted"
OUTCOMES = (SUCCESS_OUTCOME, PLANNING_FAILURE, EXECUTION_FAILURE, EARLY_STOP, BUDGET_EXHAUSTED)

DUAL_LOOP = "dual-loop"
REACT = "react"
FLAT = "flat"
SCHEMES = (DUAL_LOOP, REACT, FLAT)

LOCAL = "local"
CLOUD = "cloud"
COLLAB = "collab"
MODE_TIERS = {LOCAL: ("terminal",), CLOUD: ("cloud",), COLLAB: TIERS}
MODES = tuple(MODE_TIERS)

# why an inner loop gave up
REASON_PLAN = "plan"
REASON_FAULT = "fault"

GLOBAL_AGENT = "Global-Agent"
REACT_AGENT = "ReAct-Agent"
FLAT_AGENT = "Compiler-Agent"

GLOBAL_SYSTEM_PROMPT = (
    "You are the global agent of an emergency response team. You split the task into "
    "subtasks for the role agents and read back what they produced."
)
REACT_SYSTEM_PROMPT = (
    "You are a single emergency response agent. Think about the next step, call one tool, "
    "observe its output and continue until the task is complete."
)
FLAT_SYSTEM_PROMPT = (
    "You are the planner of an emergency response agent. Plan every tool call the task "
    "needs as one plan so independent calls can run in parallel."
)

_DECOMPOSITION_LINE_RE = re.compile(r"^(?:[-*]\s*|\d+\.\s*)?([A-Za-z][\w-]*):\s*(\S.*)$")


@dataclass(frozen=True)
class SubTask:
    id: str
    task_id: str
    role: str
    instruction: str
    round: int = 0


@dataclass(frozen=True)
class RoleProfile:
    role: str
    system_prompt: str
    tools: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tools", tuple(self.tools))
        if not self.tools:
            raise ValueError(f"Role {self.role} has no tools")


@dataclass(frozen=True)
class Budgets:
    max_rounds: int = 4
    max_replans: int = 2
    react_steps: int = 12
    few_shot_k: int = 3

    def __post_init__(self):
        for name in ("max_rounds", "max_replans", "react_steps", "few_shot_k"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.few_shot_k > FEW_SHOT_LIMIT:
            raise ValueError(f"few_shot_k must be <= {FEW_SHOT_LIMIT}")

    @classmethod
    def from_settings(cls) -> "Budgets":
        return cls(
            max_rounds=get_setting("MAX_ROUNDS"),
            max_replans=get_setting("MAX_REPLANS"),
            react_steps=get_setting("REACT_STEPS"),
            few_shot_k=get_setting("FEW_SHOT_K"),
        )

    def planning_cap(self, role_count: int) -> int:
        return self.max_rounds * role_count * (self.max_replans + 1) + self.max_rounds


@dataclass
class RunContext:
    """Everything a run needs besides the task and the planner"""

    registry: ToolRegistry
    roles: Sequence[RoleProfile]
    topology: DeviceTopology
    mode: str = COLLAB
    budgets: Budgets = field(default_factory=Budgets)
    runtimes: Optional[Mapping[str, ToolRuntime]] = None
    failure_model: FailureModel = NO_FAILURES
    seed: int = 0
    memory: Optional[MemoryBank] = None

    def __post_init__(self):
        if self.mode not in MODE_TIERS:
            raise ValueError(f"Unknown execution mode: {self.mode}")
        self.roles = tuple(self.roles)
        if self.runtimes is None:
            self.runtimes = default_runtimes(self.registry)
        covered = {tool for profile in self.roles for tool in profile.tools}
        missing = sorted(set(self.registry.names) - covered)
        if missing:
            raise ValueError(f"Tools not covered by any role: {missing}")

    @property
    def allowed_tiers(self) -> Tuple[str, ...]:
        return MODE_TIERS[self.mode]

    @property
    def role_names(self) -> Tuple[str, ...]:
        return tuple(profile.role for profile in self.roles)

    def role(self, name) -> RoleProfile:
        for profile in self.roles:
            if profile.role == name:
                return profile
        raise KeyError(name)

    def devices_for(self, task: Task):
        return [task.home_terminal] if self.mode == LOCAL else None

    def store_for(self, agent):
        return self.memory.store_for(agent) if self.memory is not None else None


@dataclass(frozen=True)
class ExecutedCall:
    label: str
    node_key: str
    tool: str
    args: Mapping[str, object]
    device: Optional[str]
    start_s: Optional[float]
    finish_s: Optional[float]
    status: str
    output: Optional[str] = None
    attempt: int = 1

    def to_dict(self):
        return {
            "label": self.label,
            "node": self.node_key,
            "tool": self.tool,
            "args": dict(self.args),
            "device": self.device,
            "start_s": self.start_s,
            "finish_s": self.finish_s,
            "status": self.status,
            "output": self.output,
            "attempt": self.attempt,
        }


@dataclass
class SubTaskResult:
    subtask: SubTask
    status: str = "failed"
    reason: Optional[str] = None
    dags: List[PlanDag] = field(default_factory=list)
    executions: List[ExecutionResult] = field(default_factory=list)
    calls: List[ExecutedCall] = field(default_factory=list)
    outputs: Tuple[Tuple[str, str], ...] = ()
    planning_invocations: int = 0
    planning_latency_s: float = 0.0
    feedback: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OK

    def digest(self) -> DigestEntry:
        return DigestEntry(self.subtask.round + 1, self.subtask.role, self.status, self.outputs)

    def to_dict(self):
        return {
            "id": self.subtask.id,
            "role": self.subtask.role,
            "round": self.subtask.round,
            "instruction": self.subtask.instruction,
            "status": self.status,
            "reason": self.reason,
            "planning_invocations": self.planning_invocations,
            "dags": [format_plan(dag) for dag in self.dags],
            "traces": [[event.to_dict() for event in e.trace.events] for e in self.executions],
            "feedback": list(self.feedback),
        }


@dataclass
class TaskResult:
    task_id: str
    scheme: str
    outcome: str = PLANNING_FAILURE
    rounds: int = 0
    subtasks: List[SubTaskResult] = field(default_factory=list)
    calls: List[ExecutedCall] = field(default_factory=list)
    planning_invocations: int = 0
    planning_latency_s: float = 0.0
    execution_latency_s: float = 0.0
    failure_class: Optional[str] = None
    topology: Optional[PlanDag] = None
    detail: str = ""

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS_OUTCOME

    def executed_tools(self) -> List[str]:
        return sorted(call.tool for call in self.calls if call.status == OK)

    def to_dict(self):
        return {
            "task": self.task_id,
            "scheme": self.scheme,
            "outcome": self.outcome,
            "failure_class": self.failure_class,
            "rounds": self.rounds,
            "planning_invocations": self.planning_invocations,
            "planning_latency_s": self.planning_latency_s,
            "execution_latency_s": self.execution_latency_s,
            "subtasks": [s.to_dict() for s in self.subtasks],
            "calls": [c.to_dict() for c in self.calls],
            "topology": format_plan(self.topology) if self.topology is not None else None,
            "detail": self.detail,
        }


class PlanningBudgetExhausted(Exception):
    pass


class PlanningAccount:
    """Counts planning calls against a cap; the cap is checked before each call"""

    def __init__(self, cap: int):
        self.cap = cap
        self.invocations = 0
        self.latency_s = 0.0

    def charge(self):
        if self.invocations >= self.cap:
            raise PlanningBudgetExhausted(f"planning budget of {self.cap} calls used up")
        self.invocations += 1

    def call(self, planner: Planner, request: PlannerRequest) -> PlannerReply:
        self.charge()
        reply = planner.plan(request)
        self.latency_s += reply.latency_s
        return reply


# Inner loop


@dataclass(frozen=True)
class PlanStep:
    request: PlannerRequest


@dataclass(frozen=True)
class ExecStep:
    request: ExecutionRequest


InnerLoop = Generator[object, object, SubTaskResult]


def inner_loop(
    subtask: SubTask,
    profile: RoleProfile,
    task: Task,
    ctx: RunContext,
    context: Sequence[DigestEntry] = (),
    kind: str = SUBTASK_PLAN,
) -> InnerLoop:
    """
    Plan, execute, replan. Yields PlanStep (send back a PlannerReply) and
    ExecStep (send back an ExecutionResult); returns a SubTaskResult.
    """
    registry = ctx.registry.subset(profile.tools)
    allowed = tuple(registry)
    store = ctx.store_for(profile.role)
    signature = make_signature(task.scenario, subtask.instruction)
    few_shots = tuple(retrieve_experiences(store, signature, ctx.budgets.few_shot_k)) if store else ()
    result = SubTaskResult(subtask)
    cache: Dict[str, str] = {}
    dag = None

    for attempt in range(1, ctx.budgets.max_replans + 2):
        request = PlannerRequest(
            kind=kind,
            task_id=task.id,
            instruction=subtask.instruction,
            system_prompt=profile.system_prompt,
            role=profile.role,
            round=subtask.round,
            attempt=attempt,
            context=tuple(context),
            few_shots=few_shots,
            allowed_tools=allowed,
            feedback=tuple(result.feedback),
            signature=signature,
        )
        reply = yield PlanStep(request)
        result.planning_invocations += 1
        result.planning_latency_s += reply.latency_s

        try:
            dag = parse_plan(extract_plan_text(reply.text), registry)
        except ParseError as e:
            result.reason = REASON_PLAN
            result.feedback.append(f"Attempt {attempt}: the plan was rejected: {e}")
            logger.debug("%s attempt %d: %s", subtask.id, attempt, e)
            continue
        result.dags.append(dag)

        signatures = {n: call_signature(dag, n) for n in dag.ids}
        cached = {n: cache[sig] for n, sig in signatures.items() if sig in cache}
        residual, back = residual_dag(dag, cached)
        if len(residual):
            keys = {new: f"{subtask.id}.{old}" for new, old in back.items()}
            execution = yield ExecStep(ExecutionRequest(subtask.id, residual, keys, attempt))
            result.executions.append(execution)
            for event in execution.trace.events:
                node = residual.node(event.node)
                result.calls.append(
                    ExecutedCall(
                        subtask.id, event.key, event.tool, node.literal_args, event.device,
                        event.start_s, event.finish_s, event.status, event.output, event.attempt,
                    )
                )
                if event.status == OK:
                    cache[signatures[back[event.node]]] = event.output
            failed = [e for e in execution.trace.events if e.status != OK]
        else:
            failed = []

        if not failed:
            result.status = OK
            result.reason = None
            result.outputs = tuple((dag.node(n).tool, cache[signatures[n]]) for n in dag.ids)
            break
        result.reason = REASON_FAULT
        result.feedback.append(
            f"Attempt {attempt}: execution failed: "
            + ", ".join(f"{e.tool} {e.status}" for e in failed)
            + ". Successful outputs are kept; replan the remaining calls."
        )
        logger.debug("%s attempt %d: %d nodes failed or skipped", subtask.id, attempt, len(failed))

    _remember(store, task, subtask, profile.role, signature, dag, result.ok)
    return result


def _remember(store, task, subtask, role, signature, dag, ok):
    if store is None or dag is None:
        return
    store.append(
        ExperienceRecord(
            signature=signature,
            plan=format_plan(dag),
            outcome=SUCCESS if ok else "failure",
            role=role,
            kind=PROCEDURAL,
            instruction=subtask.instruction,
        )
    )
    store.remember(f"{task.id} {subtask.id}: {'ok' if ok else 'failed'}")


def drive(loops: Sequence[InnerLoop], planner: Planner, executor: Executor, account: PlanningAccount) -> List[SubTaskResult]:
    """
    Run inner loops in lock-step: every pending planning call of a wave is
    issued concurrently, then every pending execution request is scheduled
    and simulated as one merged forest.
    """
    pending: Dict[int, object] = {}
    results: Dict[int, SubTaskResult] = {}

    def advance(index, value):
        try:
            pending[index] = loops[index].send(value)
        except StopIteration as stop:
            pending.pop(index, None)
            results[index] = stop.value

    for index in range(len(loops)):
        advance(index, None)

    with ThreadPoolExecutor(max_workers=max(1, int(getattr(planner, "max_concurrency", 1)))) as pool:
        while pending:
            planning = sorted(i for i, step in pending.items() if isinstance(step, PlanStep))
            if planning:
                for _ in planning:
                    account.charge()
                futures = {i: pool.submit(planner.plan, pending[i].request) for i in planning}
                replies = {i: futures[i].result() for i in planning}
                for i in planning:
                    account.latency_s += replies[i].latency_s
                    advance(i, replies[i])
                continue
            executing = sorted(pending)
            executions = executor.run_wave([pending[i].request for i in executing])
            for i, execution in zip(executing, executions):
                advance(i, execution)
    return [results[i] for i in range(len(loops))]


def run_inner_loop(
    subtask: SubTask,
    profile: RoleProfile,
    planner: Planner,
    task: Task,
    ctx: RunContext,
    context: Sequence[DigestEntry] = (),
    executor: Optional[Executor] = None,
    kind: str = SUBTASK_PLAN,
) -> SubTaskResult:
    """Drive one inner loop on its own; raises SubTaskFailed when the replan budget runs out"""
    if not profile.tools:
        raise ValueError(f"Role {profile.role} has no tools")
    executor = executor or Executor(ctx, task)
    account = PlanningAccount(ctx.budgets.max_replans + 1)
    result = drive([inner_loop(subtask, profile, task, ctx, context, kind)], planner, executor, account)[0]
    if not result.ok:
        raise SubTaskFailed(subtask.id, result.planning_invocations, result.reason or "")
    return result


# Outer loop


def parse_decomposition(text: str, roles: Sequence[str], task_id: str, round_index: int) -> List[SubTask]:
    """``Role-Name: instruction`` per line; DONE or an empty body means nothing remains"""
    body = "\n".join(line.strip() for line in text.strip().splitlines() if line.strip())
    if not body or body.upper() == DONE_MARKER:
        return []
    subtasks = []
    seen = set()
    for number, line in enumerate(body.splitlines(), start=1):
        found = _DECOMPOSITION_LINE_RE.match(line)
        if found is None:
            raise PlannerMalformedOutput(f"decomposition line {number} is not 'Role: instruction': {line!r}")
        role, instruction = found.group(1), found.group(2).strip()
        if role not in roles:
            raise PlannerMalformedOutput(f"decomposition line {number} names unknown role {role!r}")
        if role in seen:
            raise PlannerMalformedOutput(f"decomposition line {number} repeats role {role!r}")
        seen.add(role)
        slug = role.split("-")[0].lower()
        subtasks.append(SubTask(f"{task_id}.r{round_index + 1}.{slug}", task_id, role, instruction, round_index))
    return subtasks


def decompose(
    task: Task,
    context: Sequence[DigestEntry],
    planner: Planner,
    ctx: RunContext,
    round_index: int = 0,
    account: Optional[PlanningAccount] = None,
) -> List[SubTask]:
    """Ask the global agent for this round's subtasks, retrying once on malformed output"""
    account = account or PlanningAccount(2)
    store = ctx.store_for(GLOBAL_AGENT)
    signature = make_signature(task.scenario, task.instruction)
    few_shots = tuple(retrieve_experiences(store, signature, ctx.budgets.few_shot_k)) if store else ()
    feedback: List[str] = []
    for attempt in (1, 2):
        request = PlannerRequest(
            kind=DECOMPOSE,
            task_id=task.id,
            instruction=task.instruction,
            system_prompt=GLOBAL_SYSTEM_PROMPT,
            role=GLOBAL_AGENT,
            round=round_index,
            attempt=attempt,
            context=tuple(context),
            few_shots=few_shots,
            roles=ctx.role_names,
            feedback=tuple(feedback),
            signature=signature,
        )
        reply = account.call(planner, request)
        try:
            return parse_decomposition(reply.text, ctx.role_names, task.id, round_index)
        except PlannerMalformedOutput as e:
            if attempt == 2:
                raise
            logger.debug("%s round %d: %s, retrying", task.id, round_index + 1, e)
            feedback.append(f"The decomposition was rejected: {e}")
    raise AssertionError("unreachable")


def _remember_decomposition(ctx, task, subtasks):
    store = ctx.store_for(GLOBAL_AGENT)
    if store is None:
        return
    store.append(
        ExperienceRecord(
            signature=make_signature(task.scenario, task.instruction),
            plan="\n".join(f"{s.role}: {s.instruction}" for s in subtasks),
            outcome=SUCCESS,
            role=GLOBAL_AGENT,
            kind=PROCEDURAL,
            instruction=task.instruction,
        )
    )


def run_outer_loop(task: Task, planner: Planner, ctx: RunContext) -> TaskResult:
    result = TaskResult(task.id, DUAL_LOOP)
    executor = Executor(ctx, task)
    account = PlanningAccount(ctx.budgets.planning_cap(len(ctx.roles)))
    context: List[DigestEntry] = []
    try:
        for round_index in range(ctx.budgets.max_rounds + 1):
            subtasks = decompose(task, context, planner, ctx, round_index, account)
            if not subtasks:
                result.outcome = SUCCESS_OUTCOME
                break
            if round_index >= ctx.budgets.max_rounds:
                result.outcome = BUDGET_EXHAUSTED
                result.detail = f"work remained after {ctx.budgets.max_rounds} rounds"
                break
            result.rounds = round_index + 1
            logger.debug("%s round %d: %s", task.id, result.rounds, ", ".join(s.role for s in subtasks))
            loops = [inner_loop(s, ctx.role(s.role), task, ctx, context) for s in subtasks]
            outcomes = drive(loops, planner, executor, account)
            result.subtasks.extend(outcomes)
            for outcome in outcomes:
                result.calls.extend(outcome.calls)
                context.append(outcome.digest())
            failed = [o for o in outcomes if not o.ok]
            if failed:
                first = failed[0]
                result.outcome = PLANNING_FAILURE if first.reason == REASON_PLAN else EXECUTION_FAILURE
                result.detail = f"{first.subtask.id} failed after {first.planning_invocations} planning calls"
                break
            _remember_decomposition(ctx, task, subtasks)
    except PlanningBudgetExhausted as e:
        result.outcome = BUDGET_EXHAUSTED
        result.detail = str(e)
    except PlannerError as e:
        result.outcome = PLANNING_FAILURE
        result.detail = str(e)
    result.planning_invocations = account.invocations
    result.planning_latency_s = account.latency_s
    result.execution_latency_s = executor.clock
    return finalize(result, task)


# Baselines


def run_flat_compiler(task: Task, planner: Planner, ctx: RunContext) -> TaskResult:
    """One agent, one DAG for the whole task, same replanning budget"""
    result = TaskResult(task.id, FLAT)
    executor = Executor(ctx, task)
    account = PlanningAccount(ctx.budgets.max_replans + 1)
    profile = RoleProfile(FLAT_AGENT, FLAT_SYSTEM_PROMPT, tuple(ctx.registry.names))
    subtask = SubTask(f"{task.id}.flat", task.id, FLAT_AGENT, task.instruction, 0)
    try:
        outcome = drive([inner_loop(subtask, profile, task, ctx, (), FLAT_PLAN)], planner, executor, account)[0]
    except PlannerError as e:
        result.outcome = PLANNING_FAILURE
        result.detail = str(e)
    else:
        result.rounds = 1
        result.subtasks.append(outcome)
        result.calls.extend(outcome.calls)
        if outcome.ok:
            result.outcome = SUCCESS_OUTCOME
        else:
            result.outcome = PLANNING_FAILURE if outcome.reason == REASON_PLAN else EXECUTION_FAILURE
    result.planning_invocations = account.invocations
    result.planning_latency_s = account.latency_s
    result.execution_latency_s = executor.clock
    return finalize(result, task)


def run_react(task: Task, planner: Planner, ctx: RunContext) -> TaskResult:
    """
    Thought/act/observe with one tool per step. Steps 0..B-1 may act; a
    reply at step B that is not the final marker is an early stop.
    """
    result = TaskResult(task.id, REACT)
    executor = Executor(ctx, task)
    steps_budget = ctx.budgets.react_steps
    account = PlanningAccount(steps_budget + 1)
    allowed = tuple(ctx.registry)
    store = ctx.store_for(REACT_AGENT)
    signature = make_signature(task.scenario, task.instruction)
    few_shots = tuple(retrieve_experiences(store, signature, ctx.budgets.few_shot_k)) if store else ()
    trajectory: List[Observation] = []
    produced: Dict[str, Tuple[str, float, float]] = {}
    chain: List[PlanNode] = []

    try:
        for step in range(steps_budget + 1):
            request = PlannerRequest(
                kind=REACT_STEP,
                task_id=task.id,
                instruction=task.instruction,
                system_prompt=REACT_SYSTEM_PROMPT,
                role=REACT_AGENT,
                few_shots=few_shots,
                allowed_tools=allowed,
                trajectory=tuple(trajectory),
                signature=signature,
            )
            reply = account.call(planner, request)
            if is_final(reply.text):
                result.outcome = SUCCESS_OUTCOME
                break
            if step == steps_budget:
                result.outcome = EARLY_STOP
                result.detail = f"step budget of {steps_budget} used up"
                break
            try:
                dag = parse_plan(extract_plan_text(reply.text), ctx.registry)
                if len(dag) != 1:
                    raise PlanSyntaxError(2, "one tool call per step")
            except ParseError as e:
                trajectory.append(Observation("invalid", "rejected", str(e)))
                continue

            node = dag.node(1)
            inputs = [produced[v] for v in node.literal_args.values() if isinstance(v, str) and v in produced]
            execution = executor.run_step(dag, f"{task.id}.react.{step + 1}", inputs)
            event = execution.trace.events[0]
            result.calls.append(
                ExecutedCall(
                    f"{task.id}.react", event.key, event.tool, node.literal_args, event.device,
                    event.start_s, event.finish_s, event.status, event.output, event.attempt,
                )
            )
            trajectory.append(Observation(node.tool, event.status, event.output or ""))
            if event.status == OK:
                produced[event.output] = (event.device, event.finish_s, ctx.registry.get(node.tool).output_size)
                chain.append(PlanNode(len(chain) + 1, node.tool, node.args))
    except PlannerError as e:
        result.outcome = PLANNING_FAILURE
        result.detail = str(e)

    if result.outcome == SUCCESS_OUTCOME and store is not None and chain:
        store.append(
            ExperienceRecord(
                signature=signature,
                plan=format_plan(PlanDag(tuple(chain))),
                outcome=SUCCESS,
                role=REACT_AGENT,
                instruction=task.instruction,
            )
        )
    result.rounds = 1
    result.topology = sequentialize(PlanDag(tuple(chain)))
    result.planning_invocations = account.invocations
    result.planning_latency_s = account.latency_s
    result.execution_latency_s = executor.clock
    return finalize(result, task)


def finalize(result: TaskResult, task: Task) -> TaskResult:
    """A claimed success that fails evaluation is a planning failure (ReAct: an early stop)"""
    evaluation = evaluate_task(result, task.ground_truth)
    result.failure_class = evaluation.failure_class
    if result.outcome == SUCCESS_OUTCOME and not evaluation.success:
        result.outcome = EARLY_STOP if result.scheme == REACT else PLANNING_FAILURE
        result.detail = f"claimed completion failed evaluation ({evaluation.failure_class})"
    return result


RUNNERS = {DUAL_LOOP: run_outer_loop, REACT: run_react, FLAT: run_flat_compiler}


def run_task(scheme: str, task: Task, planner: Planner, ctx: RunContext) -> TaskResult:
    try:
        runner = RUNNERS[scheme]
    except KeyError:
        raise ValueError(f"Unknown scheme: {scheme}") from None
    return runner(task, planner, ctx)
