"""
Planner backends.

``ScriptedPlanner`` derives every reply from the task's ground truth and
then corrupts it call by call with a calibrated error model. Draws are keyed
per ground-truth call, so every scheme sees the same luck on the same call.
``HttpPlanner`` asks an OpenAI-compatible chat-completions endpoint and
records each reply so ``ReplayPlanner`` can serve the same run offline.
"""

import hashlib
import json
import logging
import re
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import requests

from .conf import get_setting
from .corpus import Task, describe
from .exceptions import AuthFailure, PlannerError, PlannerMalformedOutput, TransportError, UnknownTask
from .memory import similarity
from .plan import PlanNode, Ref, ToolRegistry, format_node, topo_order
from .prompts import (
    DECOMPOSE,
    DONE_MARKER,
    FINAL_MARKER,
    FLAT_PLAN,
    REACT_STEP,
    SUBTASK_PLAN,
    PlannerRequest,
    build_prompt,
)
from .streams import keyed_rng

logger = logging.getLogger(__name__)

OMIT = "omit"
WRONG_TOOL = "wrong_tool"
MALFORMED = "malformed"
ERROR_KINDS = (OMIT, WRONG_TOOL, MALFORMED)
UNKNOWN_VALUE = "unknown"
UNKNOWN_ROLE = "General-Agent"

_PLAN_LINE_RE = re.compile(r"^\s*\d+\.\s")
_IDENT_RE = re.compile(r"[a-z][a-z0-9_]*")


@dataclass(frozen=True)
class PlannerReply:
    text: str
    latency_s: float = 0.0


class Planner(ABC):
    name = "planner"
    max_concurrency = 1

    @abstractmethod
    def plan(self, request: PlannerRequest) -> PlannerReply:
        """Return the raw reply text for a request"""


def extract_plan_text(text: str) -> str:
    """Keep only the lines that look like plan lines (drops chatter and code fences)"""
    return "\n".join(line.strip() for line in text.splitlines() if _PLAN_LINE_RE.match(line))


def is_final(text: str) -> bool:
    return text.strip().upper().startswith(FINAL_MARKER)


# Scripted backend


@dataclass(frozen=True)
class ErrorModel:
    eps: float = 0.05
    mix: Mapping[str, float] = field(default_factory=lambda: {OMIT: 1 / 3, WRONG_TOOL: 1 / 3, MALFORMED: 1 / 3})
    relief: float = 0.5
    eps_min: float = 0.005
    relevance_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must be in [0, 1]")
        if not 0.0 <= self.relief <= 1.0:
            raise ValueError("relief must be in [0, 1]")
        if not 0.0 <= self.eps_min <= 1.0:
            raise ValueError("eps_min must be in [0, 1]")
        unknown = set(self.mix) - set(ERROR_KINDS)
        if unknown:
            raise ValueError(f"unknown error kinds: {sorted(unknown)}")
        if any(w < 0 for w in self.mix.values()) or sum(self.mix.values()) <= 0:
            raise ValueError("error mix weights must be >= 0 and not all zero")
        object.__setattr__(self, "mix", {k: float(self.mix.get(k, 0.0)) for k in ERROR_KINDS})

    def effective_eps(self, relevant_few_shots: int = 0) -> float:
        if self.eps == 0:
            return 0.0
        return max(min(self.eps, self.eps_min), self.eps * self.relief ** relevant_few_shots)

    def relevant_count(self, request: PlannerRequest, tools: Sequence[str] = ()) -> int:
        """Few-shots close enough to the request that also demonstrate every tool in ``tools``"""
        required = set(tools)
        return sum(
            1
            for record in request.few_shots
            if similarity(request.signature, record.signature) >= self.relevance_threshold
            and required <= set(_IDENT_RE.findall(record.plan))
        )

    def pick_kind(self, u: float) -> str:
        total = sum(self.mix.values())
        cumulative = 0.0
        for kind in ERROR_KINDS:
            cumulative += self.mix[kind] / total
            if u < cumulative and self.mix[kind] > 0:
                return kind
        return [k for k in ERROR_KINDS if self.mix[k] > 0][-1]

    def draw(self, rng, eps: float, exposure: int = 1) -> Optional[str]:
        """One error decision covering ``exposure`` required calls"""
        kind_u = rng.random()
        erred = any(rng.random() < eps for _ in range(max(exposure, 1)))
        return self.pick_kind(kind_u) if erred else None


NO_ERRORS = ErrorModel(eps=0.0)


@dataclass(frozen=True)
class CallDraws:
    """
    Error draws per ground-truth call. A draw is keyed by (task, call,
    offset, attempt) and not by scheme, so every scheme that writes the same
    call at the same point shares its uniforms and differs only in ``eps``.
    """

    model: ErrorModel
    seed: int
    task_id: str
    eps: float

    def error(self, node_id: int, offset: int = 0, attempt: int = 1, exposure: int = 1) -> Optional[str]:
        rng = keyed_rng(self.seed, "call", self.task_id, node_id, max(offset, 0), attempt)
        return self.model.draw(rng, self.eps, exposure)


def done_outputs(request: PlannerRequest) -> Dict[str, str]:
    outputs = {}
    for entry in request.context:
        for tool, token in entry.outputs:
            outputs[tool] = token
    return outputs


def eligible_nodes(task: Task, registry: ToolRegistry, done: Mapping[str, str]) -> List[int]:
    """
    Ground-truth nodes runnable now: every parent is done, or is itself
    eligible and belongs to the same role (it then runs in the same subtask).
    """
    dag = task.ground_truth.dag
    role = {n: registry.get(dag.node(n).tool).role for n in dag.ids}
    eligible = []
    for node_id in topo_order(dag):
        if dag.node(node_id).tool in done:
            continue
        if all(
            dag.node(p).tool in done or (p in eligible and role[p] == role[node_id])
            for p in dag.parents(node_id)
        ):
            eligible.append(node_id)
    return eligible


def eligibility_rounds(task: Task, registry: ToolRegistry) -> Dict[int, int]:
    """Round in which each ground-truth node first becomes eligible when nothing goes wrong"""
    dag = task.ground_truth.dag
    done: Dict[str, str] = {}
    rounds: Dict[int, int] = {}
    round_index = 0
    while len(rounds) < len(dag):
        for node_id in eligible_nodes(task, registry, done):
            rounds[node_id] = round_index
            done[dag.node(node_id).tool] = ""
        round_index += 1
    return rounds


def _bind_nodes(task: Task, node_ids: Sequence[int], done: Mapping[str, str]) -> List[PlanNode]:
    """Renumber ground-truth nodes 1..n; refs outside the group become done tokens"""
    dag = task.ground_truth.dag
    local = {gt_id: i for i, gt_id in enumerate(node_ids, start=1)}
    nodes = []
    for gt_id in node_ids:
        node = dag.node(gt_id)
        args = []
        for name, value in node.args:
            if isinstance(value, Ref):
                value = Ref(local[value.node]) if value.node in local else done[dag.node(value.node).tool]
            args.append((name, value))
        nodes.append(PlanNode(local[gt_id], node.tool, tuple(args)))
    return nodes


def render_with_errors(nodes: Sequence[PlanNode], errors: Sequence[Optional[str]], allowed: Sequence[str], rng) -> str:
    renumber: Dict[int, int] = {}
    lines = []
    for node, error in zip(nodes, errors):
        if error == OMIT:
            continue
        renumber[node.id] = len(renumber) + 1
        args = []
        for name, value in node.args:
            if isinstance(value, Ref):
                value = Ref(renumber[value.node]) if value.node in renumber else UNKNOWN_VALUE
            args.append((name, value))
        tool = node.tool
        if error == WRONG_TOOL:
            others = sorted(t for t in allowed if t != node.tool)
            if others:
                tool = others[int(rng.integers(len(others)))]
        line = format_node(PlanNode(renumber[node.id], tool, tuple(args)))
        if error == MALFORMED:
            line = line[:-1]
        lines.append(line)
    return "\n".join(lines)


class ScriptedPlanner(Planner):
    """Deterministic stand-in for an LLM, driven by the corpus ground truth"""

    name = "scripted"

    def __init__(self, tasks, registry: ToolRegistry, error_model: ErrorModel = NO_ERRORS, seed: int = 0, max_concurrency=None):
        self.tasks: Dict[str, Task] = {task.id: task for task in tasks}
        self.registry = registry
        self.error_model = error_model
        self.seed = seed
        self.max_concurrency = max_concurrency or get_setting("LLM_MAX_CONCURRENCY")

    def plan(self, request: PlannerRequest) -> PlannerReply:
        return PlannerReply(scripted_plan(request, self.tasks, self.registry, self.error_model, self.seed))


def scripted_plan(request: PlannerRequest, tasks: Mapping[str, Task], registry: ToolRegistry, error_model: ErrorModel, seed: int) -> str:
    """
    Ground truth for the request, corrupted call by call.

    The flat compiler writes every call at offset 0 of its attempt. A
    sub-agent writes its calls at an offset equal to how many rounds they
    are late. A ReAct step writes the next call, and ``attempt`` counts how
    often that call has been tried.
    """
    try:
        task = tasks[request.task_id]
    except KeyError:
        raise UnknownTask(request.task_id) from None
    dag = task.ground_truth.dag
    done = done_outputs(request)
    rng = keyed_rng(seed, "plan", request.kind, task.id, request.round, request.role, request.attempt, len(request.trajectory))

    if request.kind in (REACT_STEP, FLAT_PLAN):
        required = list(dag.ids)
    elif request.kind == DECOMPOSE:
        required = [n for n in dag.ids if dag.node(n).tool not in done]
    else:
        required = [n for n in eligible_nodes(task, registry, done) if registry.get(dag.node(n).tool).role == request.role]
    relevant = error_model.relevant_count(request, [dag.node(n).tool for n in required])
    calls = CallDraws(error_model, seed, task.id, error_model.effective_eps(relevant))

    if request.kind == REACT_STEP:
        return _scripted_react_step(request, task, calls, rng)
    if request.kind == DECOMPOSE:
        return _scripted_decomposition(request, task, registry, done, calls)
    if request.kind == FLAT_PLAN:
        nodes = list(dag.nodes)
        errors = [calls.error(n, 0, request.attempt) for n in required]
    else:
        rounds = eligibility_rounds(task, registry)
        nodes = _bind_nodes(task, required, done)
        errors = [calls.error(n, request.round - rounds[n], request.attempt) for n in required]
    return render_with_errors(nodes, errors, request.allowed_tool_names, rng)


def _scripted_decomposition(request, task, registry, done, calls: CallDraws) -> str:
    """
    One line per role with eligible calls. The first erroneous call of a
    line decides its fate. A call that is not due yet can still be misplaced
    into an extra line.
    """
    dag = task.ground_truth.dag
    eligible = eligible_nodes(task, registry, done)
    if not eligible:
        return DONE_MARKER
    by_role: Dict[str, List[int]] = {}
    for node_id in eligible:
        by_role.setdefault(registry.get(dag.node(node_id).tool).role, []).append(node_id)
    errors = {
        node_id: calls.error(node_id, request.round, request.attempt)
        for node_id in topo_order(dag)
        if dag.node(node_id).tool not in done
    }

    lines = []
    for role in request.roles or sorted(by_role):
        if role not in by_role:
            continue
        error = next((errors[n] for n in by_role[role] if errors[n]), None)
        if error == OMIT:
            continue
        instruction = describe(registry, [dag.node(n).tool for n in by_role[role]])
        if error == WRONG_TOOL:
            lines.append(f"{UNKNOWN_ROLE}: {instruction}")
        elif error == MALFORMED:
            lines.append(f"{role} {instruction}")
        else:
            lines.append(f"{role}: {instruction}")
    for node_id, error in errors.items():
        if node_id in eligible or error in (None, OMIT):
            continue
        instruction = describe(registry, [dag.node(node_id).tool])
        lines.append(f"{UNKNOWN_ROLE}: {instruction}" if error == WRONG_TOOL else instruction)
    return "\n".join(lines)


def _scripted_react_step(request, task, calls: CallDraws, rng) -> str:
    dag = task.ground_truth.dag
    done = {obs.tool: obs.output for obs in request.trajectory if obs.status == "ok"}
    remaining = [n for n in topo_order(dag) if dag.node(n).tool not in done]
    if not remaining:
        return FINAL_MARKER
    node = dag.node(remaining[0])
    args = tuple(
        (name, done[dag.node(value.node).tool] if isinstance(value, Ref) else value) for name, value in node.args
    )
    step = PlanNode(1, node.tool, args)
    tries = 1
    for obs in reversed(request.trajectory):
        if obs.status == "ok":
            break
        tries += 1
    error = calls.error(remaining[0], 0, tries, exposure=len(request.trajectory) + 1)
    if error == OMIT:
        return FINAL_MARKER
    return render_with_errors([step], [error], request.allowed_tool_names, rng)


# HTTP backend


def fingerprint(messages) -> str:
    return hashlib.sha256(json.dumps(list(messages), sort_keys=True, ensure_ascii=False).encode("utf-8")).hexdigest()


class HttpPlanner(Planner):
    """OpenAI-compatible chat-completions client with retry, backoff and a replay log"""

    name = "http"
    RETRYABLE_STATUS = {429, 500, 502, 503, 504}

    def __init__(
        self,
        base_url=None,
        token=None,
        model=None,
        timeout_s=None,
        max_retries=None,
        backoff_s=None,
        max_concurrency=None,
        replay_log=None,
        session=None,
        sleep=time.sleep,
    ):
        self.base_url = (base_url if base_url is not None else get_setting("LLM_BASE_URL")).rstrip("/")
        self.token = token if token is not None else get_setting("LLM_TOKEN")
        self.model = model or get_setting("LLM_MODEL")
        self.timeout_s = timeout_s if timeout_s is not None else get_setting("LLM_TIMEOUT_S")
        self.max_retries = max_retries if max_retries is not None else get_setting("LLM_MAX_RETRIES")
        self.backoff_s = backoff_s if backoff_s is not None else get_setting("LLM_BACKOFF_S")
        self.max_concurrency = max_concurrency or get_setting("LLM_MAX_CONCURRENCY")
        if replay_log is None:
            replay_log = get_setting("LLM_REPLAY_LOG")
        self.replay_log = Path(replay_log) if replay_log else None
        self.session = session or requests.Session()
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(self.max_concurrency)
        self._log_lock = threading.Lock()
        if not self.base_url:
            raise PlannerError("LLM base URL is not configured (DUALLOOP_LLM_BASE_URL)")

    def plan(self, request: PlannerRequest) -> PlannerReply:
        started = time.perf_counter()
        text = http_plan(request, self)
        return PlannerReply(text, time.perf_counter() - started)

    def complete(self, messages) -> str:
        payload = {
            "model": self.model,
            "messages": list(messages),
            "temperature": get_setting("LLM_TEMPERATURE"),
            "max_tokens": get_setting("LLM_MAX_TOKENS"),
        }
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        url = f"{self.base_url}/chat/completions"
        delay = self.backoff_s
        last_error = None

        for attempt in range(self.max_retries + 1):
            try:
                with self._slots:
                    response = self.session.post(url, json=payload, headers=headers, timeout=self.timeout_s)
            except (requests.Timeout, requests.ConnectionError) as e:
                last_error = str(e)
            except requests.RequestException as e:
                raise TransportError(f"chat completion request to {url} failed: {e}") from e
            else:
                if response.status_code in (401, 403):
                    raise AuthFailure(f"endpoint rejected credentials (HTTP {response.status_code})")
                if response.status_code in self.RETRYABLE_STATUS:
                    last_error = f"HTTP {response.status_code}"
                elif response.status_code >= 400:
                    raise TransportError(f"HTTP {response.status_code} from {url}")
                else:
                    text = self._content(response)
                    self._record(payload, text)
                    return text

            if attempt < self.max_retries:
                logger.warning(
                    "Chat completion failed (attempt %d/%d): %s, retrying in %.1fs",
                    attempt + 1, self.max_retries + 1, last_error, delay,
                )
                self.sleep(delay)
                delay *= 2
        logger.error("Chat completion failed after %d attempts: %s", self.max_retries + 1, last_error)
        raise TransportError(f"chat completion failed after {self.max_retries + 1} attempts: {last_error}")

    @staticmethod
    def _content(response) -> str:
        try:
            return response.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise PlannerMalformedOutput(f"unexpected completion payload: {e}") from e

    def _record(self, payload, text):
        if self.replay_log is None:
            return
        entry = {
            "fingerprint": fingerprint(payload["messages"]),
            "model": payload["model"],
            "messages": payload["messages"],
            "response": text,
        }
        with self._log_lock:
            self.replay_log.parent.mkdir(parents=True, exist_ok=True)
            with open(self.replay_log, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")


def http_plan(request: PlannerRequest, planner: HttpPlanner) -> str:
    return planner.complete(build_prompt(request).messages)


class ReplayPlanner(Planner):
    """Serves recorded chat-completion replies by prompt fingerprint"""

    name = "replay"

    def __init__(self, path):
        self.path = Path(path)
        self.responses: Dict[str, str] = {}
        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    entry = json.loads(line)
                    self.responses[entry["fingerprint"]] = entry["response"]
        self.max_concurrency = get_setting("LLM_MAX_CONCURRENCY")

    def plan(self, request: PlannerRequest) -> PlannerReply:
        key = fingerprint(build_prompt(request).messages)
        try:
            return PlannerReply(self.responses[key])
        except KeyError:
            raise PlannerError(f"no recorded response for {request.kind} request of {request.task_id}") from None
