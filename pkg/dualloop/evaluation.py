"""
Success predicate for a finished task run.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional

from .corpus import GroundTruthPlan
from .netsim import OK
from .plan import topo_order
from .scheduling import TIME_TOLERANCE

OMISSION = "omission"
ORDERING = "ordering"
BUDGET = "budget"
FAILURE_CLASSES = (OMISSION, ORDERING, BUDGET)

# outcomes that fail a task whatever was executed
BUDGET_OUTCOMES = ("early_stop", "budget_exhausted")


@dataclass(frozen=True)
class Evaluation:
    success: bool
    failure_class: Optional[str] = None
    matched: Dict[int, object] = field(default_factory=dict)
    extra_calls: int = 0


def call_matches(call, node) -> bool:
    if call.status != OK or call.tool != node.tool:
        return False
    return all(call.args.get(name) == value for name, value in node.literal_args.items())


def evaluate_task(result, truth: GroundTruthPlan) -> Evaluation:
    """
    Greedy match of every ground-truth call to an ok executed call with the
    same tool and literal arguments, then check each precedence on the
    matched calls' times. Parameters bound to references are not compared.
    """
    dag = truth.dag
    calls = sorted(
        (c for c in result.calls if c.status == OK),
        key=lambda c: (c.finish_s, c.start_s, c.node_key),
    )
    used = set()
    matched = {}
    for node_id in topo_order(dag):
        for index, call in enumerate(calls):
            if index not in used and call_matches(call, dag.node(node_id)):
                used.add(index)
                matched[node_id] = call
                break
    extra = len(calls) - len(used)

    if len(matched) != len(dag):
        return Evaluation(False, OMISSION, matched, extra)
    for a, b in truth.precedences:
        if matched[a].finish_s > matched[b].start_s + TIME_TOLERANCE:
            return Evaluation(False, ORDERING, matched, extra)
    if result.outcome in BUDGET_OUTCOMES:
        return Evaluation(False, BUDGET, matched, extra)
    return Evaluation(True, None, matched, extra)
