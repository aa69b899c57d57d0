"""
Plan DSL for parallel tool calling.

A plan is a numbered list of tool calls whose arguments are literals or
back-references (``$k``) to the outputs of earlier lines:

    1. detect_objects(video="clip_03")
    2. extract_keyframes(frames=$1, top_k=3)
    3. write_report(events=$1, frames=$2, weather="clear")

Parsing yields an immutable PlanDag; the rest of this module holds the DAG
analyses the scheduler and orchestrator rely on.
"""

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import networkx as nx

from .exceptions import (
    ArityMismatch,
    DuplicateId,
    ForwardRef,
    PlanSyntaxError,
    UnknownTool,
)

IDENT_RE = re.compile(r"[a-z][a-z0-9_]*")


@dataclass(frozen=True)
class ToolSpec:
    """A callable tool with its abstract resource demand"""

    name: str
    param_names: Tuple[str, ...]
    work: float
    output_size: float = 0.0
    fallible: bool = True
    role: str = ""
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "param_names", tuple(self.param_names))
        if not IDENT_RE.fullmatch(self.name):
            raise ValueError(f"Invalid tool name: {self.name!r}")
        for param in self.param_names:
            if not IDENT_RE.fullmatch(param):
                raise ValueError(f"Invalid parameter name {param!r} for tool {self.name}")
        if len(set(self.param_names)) != len(self.param_names):
            raise ValueError(f"Duplicate parameter names for tool {self.name}")
        if not self.work > 0:
            raise ValueError(f"Tool {self.name} must have work > 0")
        if self.output_size < 0:
            raise ValueError(f"Tool {self.name} must have output_size >= 0")

    @property
    def signature(self):
        return f"{self.name}({', '.join(self.param_names)})"


class ToolRegistry:
    """Tools keyed by name"""

    def __init__(self, tools: Iterable[ToolSpec] = ()):
        self._tools: Dict[str, ToolSpec] = {}
        for tool in tools:
            if tool.name in self._tools:
                raise ValueError(f"Duplicate tool in registry: {tool.name}")
            self._tools[tool.name] = tool

    def __contains__(self, name):
        return name in self._tools

    def __iter__(self):
        return iter(self._tools[name] for name in sorted(self._tools))

    def __len__(self):
        return len(self._tools)

    def get(self, name) -> ToolSpec:
        try:
            return self._tools[name]
        except KeyError:
            raise UnknownTool(name) from None

    @property
    def names(self) -> List[str]:
        return sorted(self._tools)

    @property
    def roles(self) -> List[str]:
        return sorted({tool.role for tool in self._tools.values() if tool.role})

    def for_role(self, role) -> List[ToolSpec]:
        return [tool for tool in self if tool.role == role]

    def subset(self, names) -> "ToolRegistry":
        return ToolRegistry(self.get(name) for name in sorted(set(names)))


@dataclass(frozen=True)
class Ref:
    """Back-reference to the output of an earlier plan line"""

    node: int

    def __str__(self):
        return f"${self.node}"


ArgValue = Union[str, int, float, bool, Ref]


@dataclass(frozen=True)
class PlanNode:
    id: int
    tool: str
    args: Tuple[Tuple[str, ArgValue], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple((name, value) for name, value in self.args))

    @property
    def refs(self) -> Tuple[int, ...]:
        return tuple(sorted({value.node for _, value in self.args if isinstance(value, Ref)}))

    @property
    def literal_args(self) -> Dict[str, ArgValue]:
        return {name: value for name, value in self.args if not isinstance(value, Ref)}

    def arg(self, name):
        for arg_name, value in self.args:
            if arg_name == name:
                return value
        raise KeyError(name)


def ref_edges(nodes: Iterable[PlanNode]) -> frozenset:
    return frozenset((k, node.id) for node in nodes for k in node.refs)


@dataclass(frozen=True)
class PlanDag:
    """
    Parsed tool-call topology. Node ids are 1..n; every edge goes from a
    lower id to a higher one. Edges default to the reference-derived set.
    """

    nodes: Tuple[PlanNode, ...] = ()
    edges: Optional[frozenset] = field(default=None)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        for index, node in enumerate(nodes, start=1):
            if node.id != index:
                raise ValueError(f"Node ids must be contiguous 1..n (found {node.id} at position {index})")
            for k in node.refs:
                if not 1 <= k < node.id:
                    raise ValueError(f"Node {node.id} references ${k}, which is not an earlier node")
        edges = ref_edges(nodes) if self.edges is None else frozenset(self.edges)
        for a, b in edges:
            if not (1 <= a < b <= len(nodes)):
                raise ValueError(f"Edge ({a}, {b}) does not go forward between existing nodes")
        object.__setattr__(self, "edges", edges)
        if not nx.is_directed_acyclic_graph(self.graph):
            raise ValueError("Plan graph contains a cycle")

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(node.id for node in self.nodes)
        graph.add_edges_from(self.edges)
        return graph

    @property
    def ids(self) -> List[int]:
        return [node.id for node in self.nodes]

    def node(self, node_id) -> PlanNode:
        return self.nodes[node_id - 1]

    def parents(self, node_id) -> List[int]:
        return sorted(self.graph.predecessors(node_id))

    def children(self, node_id) -> List[int]:
        return sorted(self.graph.successors(node_id))

    def descendants(self, node_ids) -> set:
        found = set()
        for node_id in node_ids:
            found |= nx.descendants(self.graph, node_id)
        return found

    def tools(self) -> List[str]:
        return [node.tool for node in self.nodes]


# Parsing

_STRING_RE = re.compile(r'"(?:[^"\\\n]|\\.)*"')
_FLOAT_RE = re.compile(r"-?\d+(?:\.\d+(?:[eE][+-]?\d+)?|[eE][+-]?\d+)")
_INT_RE = re.compile(r"-?\d+")
_BOOL_RE = re.compile(r"(?:true|false)(?![a-z0-9_])")
_REF_RE = re.compile(r"\$(-?\d+)")
_ID_RE = re.compile(r"\d+")


class _LineParser:
    """Cursor over one plan line; raises PlanSyntaxError with a column hint"""

    def __init__(self, text, line):
        self.text = text
        self.line = line
        self.pos = 0

    def fail(self, reason):
        raise PlanSyntaxError(self.line, f"{reason} at column {self.pos + 1}")

    def match(self, pattern):
        found = pattern.match(self.text, self.pos)
        if found is None:
            return None
        self.pos = found.end()
        return found

    def expect(self, literal, what=None):
        if not self.text.startswith(literal, self.pos):
            self.fail(f"expected {what or repr(literal)}")
        self.pos += len(literal)

    def at(self, literal):
        return self.text.startswith(literal, self.pos)

    def parse(self):
        found = self.match(_ID_RE)
        if found is None:
            self.fail("expected line number")
        node_id = int(found.group())
        # later errors on this line are reported against its own label
        self.line = node_id
        self.expect(".")
        self.expect(" ", "a space after the line number")
        found = self.match(IDENT_RE)
        if found is None:
            self.fail("expected tool name")
        tool = found.group()
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.parse_arg())
            while self.at(","):
                self.pos += 1
                if self.at(" "):
                    self.pos += 1
                args.append(self.parse_arg())
        self.expect(")", "',' or ')'")
        if self.pos != len(self.text):
            self.fail("unexpected trailing text")
        return node_id, tool, args

    def parse_arg(self):
        found = self.match(IDENT_RE)
        if found is None:
            self.fail("expected argument name")
        name = found.group()
        self.expect("=")
        return name, self.parse_value()

    def parse_value(self):
        found = self.match(_STRING_RE)
        if found is not None:
            try:
                return json.loads(found.group())
            except json.JSONDecodeError:
                self.fail("invalid string escape")
        found = self.match(_REF_RE)
        if found is not None:
            k = int(found.group(1))
            if k < 1:
                self.fail(f"invalid reference ${k}")
            return Ref(k)
        found = self.match(_FLOAT_RE)
        if found is not None:
            return float(found.group())
        found = self.match(_INT_RE)
        if found is not None:
            return int(found.group())
        found = self.match(_BOOL_RE)
        if found is not None:
            return found.group() == "true"
        self.fail("expected a value")


def _bind_args(line, tool: ToolSpec, given):
    names = [name for name, _ in given]
    if len(set(names)) != len(names):
        raise ArityMismatch(line, "parameter given twice")
    if set(names) != set(tool.param_names):
        unknown = sorted(set(names) - set(tool.param_names))
        missing = sorted(set(tool.param_names) - set(names))
        raise ArityMismatch(line, f"unknown={unknown} missing={missing}")
    values = dict(given)
    return tuple((param, values[param]) for param in tool.param_names)


def parse_plan(text: str, registry: ToolRegistry) -> PlanDag:
    """Parse plan text into a validated PlanDag (see module docstring for the grammar)"""
    if not text.strip():
        raise PlanSyntaxError(1, "empty plan")
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()

    nodes = []
    seen = set()
    for line_no, raw in enumerate(lines, start=1):
        content = raw.rstrip()
        if not content:
            raise PlanSyntaxError(line_no, "blank line")
        node_id, tool_name, given = _LineParser(content, line_no).parse()
        if node_id in seen:
            raise DuplicateId(line_no)
        if node_id != len(nodes) + 1:
            raise PlanSyntaxError(line_no, f"expected node id {len(nodes) + 1}, found {node_id}")
        seen.add(node_id)
        if tool_name not in registry:
            raise UnknownTool(tool_name, line=line_no)
        args = _bind_args(line_no, registry.get(tool_name), given)
        for _, value in args:
            if isinstance(value, Ref) and value.node >= node_id:
                raise ForwardRef(line_no, value.node)
        nodes.append(PlanNode(node_id, tool_name, args))
    return PlanDag(tuple(nodes))


def format_value(value: ArgValue) -> str:
    if isinstance(value, Ref):
        return str(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"Cannot format non-finite float {value!r}")
        return repr(value)
    return json.dumps(value, ensure_ascii=False)


def format_node(node: PlanNode) -> str:
    args = ", ".join(f"{name}={format_value(value)}" for name, value in node.args)
    return f"{node.id}. {node.tool}({args})"


def format_plan(dag: PlanDag) -> str:
    return "\n".join(format_node(node) for node in dag.nodes)


# Analyses

Cost = Union[Callable[[PlanNode], float], Mapping[int, float]]


def _cost_fn(cost: Cost) -> Callable[[PlanNode], float]:
    if callable(cost):
        return cost
    return lambda node: cost[node.id]


def topo_order(dag: PlanDag) -> List[int]:
    """Topological order with ties broken by ascending node id"""
    return list(nx.lexicographical_topological_sort(dag.graph))


def critical_path_len(dag: PlanDag, cost: Cost) -> Dict[int, float]:
    """Per node, the largest total cost over paths starting at that node (inclusive)"""
    weight = _cost_fn(cost)
    lengths: Dict[int, float] = {}
    for node_id in reversed(topo_order(dag)):
        tail = max((lengths[child] for child in dag.children(node_id)), default=0.0)
        lengths[node_id] = weight(dag.node(node_id)) + tail
    return lengths


def sequentialize(dag: PlanDag) -> PlanDag:
    """Chain the nodes in topological order (the sequential execution topology)"""
    order = topo_order(dag)
    return PlanDag(dag.nodes, frozenset(zip(order, order[1:])))


def merge_dags(dags: Iterable[PlanDag]) -> Tuple[PlanDag, List[Dict[int, int]]]:
    """
    Renumber several DAGs into one forest. Returns the merged DAG and, per
    input DAG, the mapping local id -> merged id.
    """
    nodes = []
    edges = set()
    mappings = []
    offset = 0
    for dag in dags:
        mapping = {node.id: node.id + offset for node in dag.nodes}
        for node in dag.nodes:
            args = tuple(
                (name, Ref(mapping[value.node]) if isinstance(value, Ref) else value)
                for name, value in node.args
            )
            nodes.append(PlanNode(mapping[node.id], node.tool, args))
        edges.update((mapping[a], mapping[b]) for a, b in dag.edges)
        mappings.append(mapping)
        offset += len(dag)
    return PlanDag(tuple(nodes), frozenset(edges)), mappings


def residual_dag(dag: PlanDag, cached: Mapping[int, str]) -> Tuple[PlanDag, Dict[int, int]]:
    """
    Drop nodes whose outputs are cached, substituting the cached output tokens
    as string literals into dependents. Returns the renumbered remainder and
    the mapping new id -> original id.
    """
    renumber = {}
    nodes = []
    for node in dag.nodes:
        if node.id in cached:
            continue
        renumber[node.id] = len(nodes) + 1
        args = []
        for name, value in node.args:
            if isinstance(value, Ref):
                value = cached[value.node] if value.node in cached else Ref(renumber[value.node])
            args.append((name, value))
        nodes.append(PlanNode(renumber[node.id], node.tool, tuple(args)))
    return PlanDag(tuple(nodes)), {new: old for old, new in renumber.items()}


def call_signature(dag: PlanDag, node_id: int, _memo=None) -> str:
    """Canonical text of a call with references expanded to their own signatures"""
    memo = {} if _memo is None else _memo
    if node_id in memo:
        return memo[node_id]
    node = dag.node(node_id)
    parts = []
    for name, value in node.args:
        if isinstance(value, Ref):
            parts.append(f"{name}=<{call_signature(dag, value.node, memo)}>")
        else:
            parts.append(f"{name}={format_value(value)}")
    memo[node_id] = f"{node.tool}({', '.join(parts)})"
    return memo[node_id]
