"""
Planner requests and their rendering into chat messages.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Tuple

from .memory import ExperienceRecord
from .plan import ToolSpec

DECOMPOSE = "decompose"
SUBTASK_PLAN = "subtask_plan"
REACT_STEP = "react_step"
FLAT_PLAN = "flat_plan"
REQUEST_KINDS = (DECOMPOSE, SUBTASK_PLAN, REACT_STEP, FLAT_PLAN)

FEW_SHOT_LIMIT = 3
FINAL_MARKER = "FINAL"
DONE_MARKER = "DONE"

PLAN_GRAMMAR = (
    "plan  := line (NEWLINE line)* ;\n"
    'line  := INT "." SP IDENT "(" [arg ("," SP? arg)*] ")" ;\n'
    'arg   := IDENT "=" (STRING | INT | FLOAT | BOOL | "$" INT) ;\n'
    "STRING is double-quoted with backslash escapes; IDENT matches [a-z][a-z0-9_]*."
)

PLAN_RULES = (
    "Write the plan as numbered lines, one tool call per line:\n"
    'N. tool_name(param="text", count=3, source=$K)\n'
    "Arguments are named. $K stands for the output of line K, which must come earlier.\n"
    "Independent calls should not reference each other so they can run in parallel.\n"
    f"Grammar:\n{PLAN_GRAMMAR}\n"
    "Reply with the plan only."
)

REACT_RULES = (
    "Call exactly one tool per reply, written as a single plan line:\n"
    '1. tool_name(param="text")\n'
    "Pass earlier outputs from the trajectory as quoted strings.\n"
    f"Grammar:\n{PLAN_GRAMMAR}\n"
    f"Reply {FINAL_MARKER} when the task is complete."
)

DECOMPOSE_RULES = (
    "Split the remaining work into independent subtasks, one line per role:\n"
    "Role-Name: instruction\n"
    "Use each role at most once and only for work whose inputs are already available.\n"
    f"Reply {DONE_MARKER} when nothing remains."
)


@dataclass(frozen=True)
class DigestEntry:
    """What the global agent learns about one finished subtask"""

    round: int
    role: str
    status: str
    outputs: Tuple[Tuple[str, str], ...] = ()

    def render(self) -> str:
        produced = ", ".join(f"{tool} -> {token}" for tool, token in self.outputs) or "no outputs"
        return f"[round {self.round}] {self.role} {self.status}: {produced}"


@dataclass(frozen=True)
class Observation:
    tool: str
    status: str
    output: str = ""

    def render(self, step) -> str:
        result = self.output if self.status == "ok" else self.status
        return f"Step {step}: {self.tool} -> {result}"


@dataclass(frozen=True)
class PlannerRequest:
    kind: str
    task_id: str
    instruction: str
    system_prompt: str = ""
    role: str = ""
    round: int = 0
    attempt: int = 1
    context: Tuple[DigestEntry, ...] = ()
    few_shots: Tuple[ExperienceRecord, ...] = ()
    allowed_tools: Tuple[ToolSpec, ...] = ()
    roles: Tuple[str, ...] = ()
    trajectory: Tuple[Observation, ...] = ()
    feedback: Tuple[str, ...] = ()
    signature: Mapping[str, int] = field(default_factory=dict)
    few_shot_limit: int = FEW_SHOT_LIMIT

    def __post_init__(self):
        if self.kind not in REQUEST_KINDS:
            raise ValueError(f"Unsupported request kind: {self.kind}")
        if len(self.few_shots) > self.few_shot_limit:
            raise ValueError(f"{len(self.few_shots)} few-shots exceed the limit of {self.few_shot_limit}")
        for name in ("context", "few_shots", "allowed_tools", "roles", "trajectory", "feedback"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def allowed_tool_names(self) -> List[str]:
        return [tool.name for tool in self.allowed_tools]


@dataclass(frozen=True)
class Prompt:
    messages: Tuple[Dict[str, str], ...]

    @property
    def length(self) -> int:
        return sum(len(message["content"]) for message in self.messages)


def _system_content(request: PlannerRequest) -> str:
    parts = [request.system_prompt.strip()] if request.system_prompt.strip() else []
    if request.kind == DECOMPOSE:
        parts.append(DECOMPOSE_RULES)
        parts.append("Available roles:\n" + "\n".join(f"- {role}" for role in request.roles))
    else:
        parts.append(REACT_RULES if request.kind == REACT_STEP else PLAN_RULES)
        parts.append(
            "Available tools:\n"
            + "\n".join(f"- {tool.signature}: {tool.description}" for tool in request.allowed_tools)
        )
    return "\n\n".join(parts)


def _user_content(request: PlannerRequest) -> str:
    context = "\n".join(entry.render() for entry in request.context) or "(none)"
    parts = [f"Task: {request.instruction}", f"Context:\n{context}"]
    if request.kind == REACT_STEP:
        steps = "\n".join(obs.render(i) for i, obs in enumerate(request.trajectory, start=1)) or "(none)"
        parts.append(f"Trajectory:\n{steps}")
    if request.feedback:
        parts.append("Feedback:\n" + "\n".join(request.feedback))
    return "\n\n".join(parts)


def build_prompt(request: PlannerRequest) -> Prompt:
    """system, one exemplar message per few-shot in retrieval order, then user"""
    messages = [{"role": "system", "content": _system_content(request)}]
    for record in request.few_shots:
        messages.append({"role": "user", "content": f"Example task: {record.instruction}\nExample plan:\n{record.plan}"})
    messages.append({"role": "user", "content": _user_content(request)})
    return Prompt(tuple(messages))
