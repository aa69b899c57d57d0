"""
Priority-based list scheduling of PlanDags onto heterogeneous devices.

Nodes are listed by descending critical-path length and each is placed on
the allowed device giving the earliest finish time, charging link transfer
time on every edge that crosses devices. A brute-force oracle and simple
lower bounds back the heuristic in tests.
"""

import bisect
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .exceptions import InstanceTooLarge, NoDeviceAvailable
from .plan import PlanDag, ToolRegistry, critical_path_len
from .topology import Device, DeviceTopology

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_NODES = 8
BRUTE_FORCE_MAX_DEVICES = 3
TIME_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Schedule:
    assignment: Dict[int, str] = field(default_factory=dict)
    start: Dict[int, float] = field(default_factory=dict)
    finish: Dict[int, float] = field(default_factory=dict)

    @property
    def makespan(self) -> float:
        return makespan(self)

    def shifted(self, offset: float) -> "Schedule":
        """Same placement moved onto a clock starting at ``offset``"""
        return Schedule(
            dict(self.assignment),
            {n: t + offset for n, t in self.start.items()},
            {n: t + offset for n, t in self.finish.items()},
        )

    def device_intervals(self) -> Dict[str, List[Tuple[float, float, int]]]:
        intervals: Dict[str, List[Tuple[float, float, int]]] = {}
        for node_id, device_id in self.assignment.items():
            intervals.setdefault(device_id, []).append((self.start[node_id], self.finish[node_id], node_id))
        for items in intervals.values():
            items.sort()
        return intervals

    def to_dict(self):
        return {
            "makespan_s": self.makespan,
            "nodes": [
                {
                    "node": node_id,
                    "device": self.assignment[node_id],
                    "start_s": self.start[node_id],
                    "finish_s": self.finish[node_id],
                }
                for node_id in sorted(self.assignment)
            ],
        }


def makespan(schedule: Schedule) -> float:
    return max(schedule.finish.values(), default=0.0)


def schedule_to_json(schedule: Schedule) -> str:
    return json.dumps(schedule.to_dict(), indent=2, sort_keys=True)


def candidate_devices(topo: DeviceTopology, allowed_tiers, allowed_devices=None) -> List[Device]:
    devices = topo.devices_for(allowed_tiers or (), allowed_devices)
    if not devices:
        raise NoDeviceAvailable(
            f"no device in tiers {sorted(allowed_tiers or ())}"
            + (f" among {sorted(allowed_devices)}" if allowed_devices is not None else "")
        )
    return devices


class _Placement:
    """Mutable partial schedule used while list scheduling"""

    def __init__(self, dag: PlanDag, topo: DeviceTopology, registry: ToolRegistry):
        self.dag = dag
        self.topo = topo
        self.registry = registry
        self.assignment: Dict[int, str] = {}
        self.start: Dict[int, float] = {}
        self.finish: Dict[int, float] = {}
        self.busy: Dict[str, List[Tuple[float, float]]] = {}

    def duration(self, node_id, device: Device) -> float:
        return self.registry.get(self.dag.node(node_id).tool).work / device.speed

    def ready_time(self, node_id, device: Device) -> float:
        ready = 0.0
        for parent in self.dag.parents(node_id):
            size = self.registry.get(self.dag.node(parent).tool).output_size
            arrival = self.finish[parent] + self.topo.transfer_time(self.assignment[parent], device.id, size)
            ready = max(ready, arrival)
        return ready

    def earliest(self, node_id, device: Device) -> Tuple[float, float]:
        """Earliest (start, finish) of a node on a device, using idle gaps"""
        duration = self.duration(node_id, device)
        start = self.ready_time(node_id, device)
        for busy_start, busy_finish in self.busy.get(device.id, ()):
            if start + duration <= busy_start:
                break
            start = max(start, busy_finish)
        return start, start + duration

    def commit(self, node_id, device: Device, start, finish):
        self.assignment[node_id] = device.id
        self.start[node_id] = start
        self.finish[node_id] = finish
        bisect.insort(self.busy.setdefault(device.id, []), (start, finish))

    def undo(self, node_id):
        device_id = self.assignment.pop(node_id)
        interval = (self.start.pop(node_id), self.finish.pop(node_id))
        self.busy[device_id].remove(interval)

    def schedule(self) -> Schedule:
        return Schedule(dict(self.assignment), dict(self.start), dict(self.finish))


def priority_order(dag: PlanDag, registry: ToolRegistry) -> List[int]:
    """Nodes by descending critical-path length (work units), ties by id"""
    priority = critical_path_len(dag, lambda node: registry.get(node.tool).work)
    return sorted(dag.ids, key=lambda node_id: (-priority[node_id], node_id))


def priority_schedule(
    dag: PlanDag,
    topo: DeviceTopology,
    registry: ToolRegistry,
    allowed_tiers: Iterable[str],
    allowed_devices: Optional[Iterable[str]] = None,
) -> Schedule:
    """
    Critical-path list scheduling with earliest-finish-time placement. When
    several tiers are allowed, the list schedule restricted to each single
    tier is built as well and the shortest makespan is kept (the schedule
    over all devices wins ties).
    """
    devices = candidate_devices(topo, allowed_tiers, allowed_devices)
    best = _list_schedule(dag, topo, registry, devices)
    tiers = sorted({device.tier for device in devices})
    if len(tiers) > 1:
        for tier in tiers:
            candidate = _list_schedule(dag, topo, registry, [d for d in devices if d.tier == tier])
            if candidate.makespan < best.makespan:
                best = candidate
    return best


def _list_schedule(dag: PlanDag, topo: DeviceTopology, registry: ToolRegistry, devices: Sequence[Device]) -> Schedule:
    placement = _Placement(dag, topo, registry)
    for node_id in priority_order(dag, registry):
        best = None
        for device in devices:
            start, finish = placement.earliest(node_id, device)
            if best is None or finish < best[2]:
                best = (device, start, finish)
        placement.commit(node_id, *best)
    return placement.schedule()


def place_single(
    work: float,
    topo: DeviceTopology,
    allowed_tiers: Iterable[str],
    inputs: Sequence[Tuple[str, float, float]] = (),
    not_before: float = 0.0,
    allowed_devices: Optional[Iterable[str]] = None,
) -> Tuple[str, float, float]:
    """
    Place one node on the device with minimal finish time, given its inputs
    as (device id, ready time, size KB) and an earliest start. Devices are
    assumed idle.
    """
    best = None
    for device in candidate_devices(topo, allowed_tiers, allowed_devices):
        start = not_before
        for source, ready, size in inputs:
            start = max(start, ready + topo.transfer_time(source, device.id, size))
        finish = start + work / device.speed
        if best is None or finish < best[2]:
            best = (device.id, start, finish)
    return best


def brute_force_schedule(
    dag: PlanDag,
    topo: DeviceTopology,
    registry: ToolRegistry,
    allowed_tiers: Iterable[str],
    allowed_devices: Optional[Iterable[str]] = None,
) -> Schedule:
    """
    Minimal-makespan schedule over every device assignment and every
    dependency-respecting list order (branch and bound). Test oracle only.
    """
    devices = candidate_devices(topo, allowed_tiers, allowed_devices)
    if len(dag) > BRUTE_FORCE_MAX_NODES or len(devices) > BRUTE_FORCE_MAX_DEVICES:
        raise InstanceTooLarge(
            f"{len(dag)} nodes / {len(devices)} devices exceeds "
            f"{BRUTE_FORCE_MAX_NODES} / {BRUTE_FORCE_MAX_DEVICES}"
        )

    incumbent = priority_schedule(dag, topo, registry, allowed_tiers, allowed_devices)
    best = {"makespan": makespan(incumbent), "schedule": incumbent}
    if not len(dag):
        return incumbent

    fastest = max(device.speed for device in devices)
    fast_cp = critical_path_len(dag, lambda node: registry.get(node.tool).work / fastest)
    tail = {n: max((fast_cp[c] for c in dag.children(n)), default=0.0) for n in dag.ids}

    placement = _Placement(dag, topo, registry)
    seen = set()

    def search(current_max):
        if len(placement.assignment) == len(dag):
            if current_max < best["makespan"]:
                best["makespan"] = current_max
                best["schedule"] = placement.schedule()
            return
        key = frozenset((n, placement.assignment[n], placement.start[n]) for n in placement.assignment)
        if key in seen:
            return
        seen.add(key)
        ready = [
            n
            for n in dag.ids
            if n not in placement.assignment and all(p in placement.assignment for p in dag.parents(n))
        ]
        for node_id in ready:
            for device in devices:
                start, finish = placement.earliest(node_id, device)
                if max(current_max, finish + tail[node_id]) >= best["makespan"]:
                    continue
                placement.commit(node_id, device, start, finish)
                search(max(current_max, finish))
                placement.undo(node_id)

    search(0.0)
    logger.debug("brute force explored %d partial schedules", len(seen))
    return best["schedule"]


def lower_bounds(
    dag: PlanDag,
    topo: DeviceTopology,
    registry: ToolRegistry,
    allowed_tiers: Iterable[str],
    allowed_devices: Optional[Iterable[str]] = None,
) -> Tuple[float, float]:
    """(critical-path bound, total-work bound); valid when communication is free"""
    devices = candidate_devices(topo, allowed_tiers, allowed_devices)
    if not len(dag):
        return 0.0, 0.0
    fastest = max(device.speed for device in devices)
    cp = critical_path_len(dag, lambda node: registry.get(node.tool).work / fastest)
    total_work = sum(registry.get(node.tool).work for node in dag.nodes)
    return max(cp.values()), total_work / sum(device.speed for device in devices)


def validate_schedule(
    schedule: Schedule, dag: PlanDag, topo: DeviceTopology, registry: ToolRegistry
) -> List[str]:
    """Independent feasibility check; returns human-readable violations"""
    violations = []
    for node in dag.nodes:
        if node.id not in schedule.assignment:
            violations.append(f"node {node.id} is not scheduled")
            continue
        device = topo.device(schedule.assignment[node.id])
        expected = schedule.start[node.id] + registry.get(node.tool).work / device.speed
        if not math.isclose(schedule.finish[node.id], expected, rel_tol=1e-9, abs_tol=TIME_TOLERANCE):
            violations.append(f"node {node.id} finish {schedule.finish[node.id]} != {expected}")
    for a, b in sorted(dag.edges):
        if a not in schedule.assignment or b not in schedule.assignment:
            continue
        size = registry.get(dag.node(a).tool).output_size
        arrival = schedule.finish[a] + topo.transfer_time(schedule.assignment[a], schedule.assignment[b], size)
        if schedule.start[b] < arrival - TIME_TOLERANCE:
            violations.append(f"edge ({a}, {b}): start {schedule.start[b]} before arrival {arrival}")
    for device_id, intervals in schedule.device_intervals().items():
        for (s1, f1, n1), (s2, f2, n2) in zip(intervals, intervals[1:]):
            if s2 < f1 - TIME_TOLERANCE:
                violations.append(f"device {device_id}: nodes {n1} and {n2} overlap")
    return violations
