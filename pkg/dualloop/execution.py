"""
Joint scheduling and simulation on a task-wide simulated clock.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Sequence, Tuple

from .netsim import ExecutionTrace, simulate
from .plan import PlanDag, merge_dags
from .scheduling import Schedule, place_single, priority_schedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExecutionRequest:
    """One subtask's DAG plus the stable key of every node"""

    owner: str
    dag: PlanDag
    node_keys: Mapping[int, str]
    attempt: int = 1


@dataclass(frozen=True)
class ExecutionResult:
    request: ExecutionRequest
    schedule: Schedule
    trace: ExecutionTrace


@dataclass
class Wave:
    dag: PlanDag
    schedule: Schedule
    trace: ExecutionTrace
    owners: Tuple[str, ...] = field(default_factory=tuple)


class Executor:
    """
    Runs execution requests for one task. Each wave is scheduled from idle
    devices, shifted onto the clock and simulated once; the clock then moves
    to the end of the wave.
    """

    def __init__(self, context, task):
        self.context = context
        self.task = task
        self.clock = 0.0
        self.waves: List[Wave] = []

    @property
    def allowed_devices(self):
        return self.context.devices_for(self.task)

    def run_wave(self, requests: Sequence[ExecutionRequest]) -> List[ExecutionResult]:
        requests = [r for r in requests if len(r.dag)]
        if not requests:
            return []
        ctx = self.context
        merged, mappings = merge_dags(r.dag for r in requests)
        keys: Dict[int, str] = {}
        attempts: Dict[int, int] = {}
        for request, mapping in zip(requests, mappings):
            for local, global_id in mapping.items():
                keys[global_id] = request.node_keys[local]
                attempts[global_id] = request.attempt

        schedule = priority_schedule(
            merged, ctx.topology, ctx.registry, ctx.allowed_tiers, self.allowed_devices
        ).shifted(self.clock)
        trace = self._simulate(schedule, merged, keys, attempts)
        self.waves.append(Wave(merged, schedule, trace, tuple(r.owner for r in requests)))
        logger.debug(
            "%s wave %d: %d nodes from %d requests, %.3fs -> %.3fs",
            self.task.id, len(self.waves), len(merged), len(requests), self.clock, max(self.clock, trace.end_time_s),
        )
        self.clock = max(self.clock, trace.end_time_s)
        return [self._split(request, mapping, schedule, trace) for request, mapping in zip(requests, mappings)]

    def run_step(
        self,
        dag: PlanDag,
        node_key: str,
        inputs: Sequence[Tuple[str, float, float]] = (),
        attempt: int = 1,
    ) -> ExecutionResult:
        """Place a one-node DAG on the best single device no earlier than the clock"""
        ctx = self.context
        tool = ctx.registry.get(dag.node(1).tool)
        device, start, finish = place_single(
            tool.work, ctx.topology, ctx.allowed_tiers, inputs, not_before=self.clock,
            allowed_devices=self.allowed_devices,
        )
        schedule = Schedule({1: device}, {1: start}, {1: finish})
        trace = self._simulate(schedule, dag, {1: node_key}, {1: attempt})
        self.waves.append(Wave(dag, schedule, trace, (node_key,)))
        self.clock = max(self.clock, trace.end_time_s)
        request = ExecutionRequest(node_key, dag, {1: node_key}, attempt)
        return ExecutionResult(request, schedule, trace)

    def _simulate(self, schedule, dag, keys, attempts) -> ExecutionTrace:
        ctx = self.context
        return simulate(
            schedule,
            dag,
            ctx.runtimes,
            ctx.failure_model,
            ctx.seed,
            task_id=self.task.id,
            node_keys=keys,
            attempts=attempts,
            fixture=self.task.fixture,
        )

    @staticmethod
    def _split(request, mapping: Mapping[int, int], schedule: Schedule, trace: ExecutionTrace) -> ExecutionResult:
        back = {global_id: local for local, global_id in mapping.items()}
        events = tuple(replace(e, node=back[e.node]) for e in trace.events if e.node in back)
        local = Schedule(
            {back[n]: d for n, d in schedule.assignment.items() if n in back},
            {back[n]: t for n, t in schedule.start.items() if n in back},
            {back[n]: t for n, t in schedule.finish.items() if n in back},
        )
        end = max((e.finish_s for e in events if e.finish_s is not None), default=0.0)
        return ExecutionResult(request, local, ExecutionTrace(events, end, trace.seed))

