"""
Exception hierarchy for the dual-loop agent bench.

Task-level failures during experiments are reported as TaskResult outcomes;
these exceptions signal malformed inputs, exhausted budgets and IO problems.
"""


class DualLoopError(Exception):
    """Base class for all errors raised by the dualloop app"""


class ConfigError(DualLoopError):
    """A configuration file or settings value failed validation"""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


# Plan DSL


class ParseError(DualLoopError):
    """Plan text could not be turned into a valid PlanDag"""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class PlanSyntaxError(ParseError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}", line=line)
        self.reason = reason


class UnknownTool(ParseError):
    def __init__(self, name, line=None):
        super().__init__(f"unknown tool: {name}", line=line)
        self.name = name


class ForwardRef(ParseError):
    def __init__(self, line, k):
        super().__init__(f"line {line}: reference ${k} does not point to an earlier line", line=line)
        self.k = k


class ArityMismatch(ParseError):
    def __init__(self, line, reason=""):
        message = f"line {line}: arguments do not match the tool signature"
        if reason:
            message = f"{message} ({reason})"
        super().__init__(message, line=line)


class DuplicateId(ParseError):
    def __init__(self, line):
        super().__init__(f"line {line}: duplicate node id", line=line)


# Scheduling


class SchedulingError(DualLoopError):
    pass


class NoDeviceAvailable(SchedulingError):
    """No device of the allowed tiers exists in the topology"""


class InstanceTooLarge(SchedulingError):
    """Brute-force oracle refused an instance above its size guard"""


# Simulation


class SimulationError(DualLoopError):
    pass


class MissingRuntime(SimulationError):
    def __init__(self, tool):
        super().__init__(f"no runtime registered for tool: {tool}")
        self.tool = tool


# Planners


class PlannerError(DualLoopError):
    pass


class PlannerMalformedOutput(PlannerError):
    """Planner text could not be interpreted (decomposition or plan)"""


class UnknownTask(PlannerError):
    def __init__(self, task_id):
        super().__init__(f"task not present in corpus tables: {task_id}")
        self.task_id = task_id


class TransportError(PlannerError):
    """HTTP planner failed after exhausting its retry budget"""


class AuthFailure(PlannerError):
    """HTTP planner endpoint rejected the configured credentials"""


# Orchestration and memory


class SubTaskFailed(DualLoopError):
    def __init__(self, subtask_id, planning_invocations, reason=""):
        super().__init__(
            f"subtask {subtask_id} failed after {planning_invocations} planning invocations"
            + (f": {reason}" if reason else "")
        )
        self.subtask_id = subtask_id
        self.planning_invocations = planning_invocations
        self.reason = reason


class PersistenceFailure(DualLoopError):
    """Long-term memory could not be written durably"""
