"""Radial network model with a DC power-flow approximation.

The grid is a tree rooted at the substation.  Every line is oriented
root-to-leaf after validation.  Net customer powers are signed in kW:
positive means withdrawal from the grid, negative means injection.
Under the DC approximation with the reference voltage at 1 p.u., the
power carried by a line equals the sum of the net powers of all
customers fed through it, and line ratings bound that power in both
directions: a profile is secure when ``|flow| <= limit`` on every line.

Resistance and reactance are carried on lines for completeness but do
not enter the flow computation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from math import isfinite
from typing import Iterable, Mapping

from .errors import InputError

# Absolute tolerance, in kW, below which a constraint is considered met.
ATOL = 1e-9

NodeId = str
Edge = tuple[NodeId, NodeId]
PowerProfile = Mapping[NodeId, float]


class DuplicateId(InputError):
    """A node id appears more than once."""


class CycleDetected(InputError):
    """The line set contains a cycle (including parallel lines)."""


class Disconnected(InputError):
    """Some node is not reachable from the root."""


class RootIsCustomer(InputError):
    """The substation node cannot also be a customer."""


class UnknownNode(InputError):
    """A line endpoint or the root is not in the node list."""


class UnknownCustomer(InputError):
    """A customer id is not a node, or a profile keys a non-customer."""


class UnknownEdge(InputError):
    """An edge id does not match any oriented line."""


class InvalidLine(InputError):
    """A line has a non-positive rating or negative impedance."""


@dataclass(frozen=True)
class Line:
    """One network line; ``limit_kw`` is the thermal rating."""

    from_node: NodeId
    to_node: NodeId
    limit_kw: float
    resistance_ohm: float = 0.0
    reactance_ohm: float = 0.0


@dataclass(frozen=True)
class NetworkGraph:
    """A validated radial network.

    Lines are oriented root-to-leaf; ``edges`` lists them in breadth-first
    order from the root.  Construct via :func:`validate_radial` only.
    """

    root: NodeId
    nodes: tuple[NodeId, ...]
    lines: tuple[Line, ...]
    customers: frozenset[NodeId]
    voltage_bounds: tuple[float, float] | None = None
    _line_by_edge: dict[Edge, Line] = field(repr=False, default_factory=dict)
    _downstream: dict[Edge, frozenset[NodeId]] = field(repr=False, default_factory=dict)

    @property
    def edges(self) -> tuple[Edge, ...]:
        return tuple((ln.from_node, ln.to_node) for ln in self.lines)

    def line(self, edge: Edge) -> Line:
        try:
            return self._line_by_edge[edge]
        except KeyError:
            raise UnknownEdge(f"no oriented line {edge[0]!r} -> {edge[1]!r}") from None


def validate_radial(
    nodes: Iterable[NodeId],
    lines: Iterable[Line],
    root: NodeId,
    customers: Iterable[NodeId],
    voltage_bounds: tuple[float, float] | None = None,
) -> NetworkGraph:
    """Check radiality and return the graph with lines oriented root-to-leaf.

    Raises
    ------
    DuplicateId, UnknownNode, UnknownCustomer, RootIsCustomer, InvalidLine,
    CycleDetected, Disconnected
        When the input is not a tree spanning all nodes, rooted at a
        non-customer substation.
    """
    node_list = list(nodes)
    node_set = set(node_list)
    if len(node_set) != len(node_list):
        seen: set[NodeId] = set()
        for n in node_list:
            if n in seen:
                raise DuplicateId(f"duplicate node id {n!r}")
            seen.add(n)
    if root not in node_set:
        raise UnknownNode(f"root {root!r} is not a node")

    customer_set = set(customers)
    unknown = customer_set - node_set
    if unknown:
        raise UnknownCustomer(f"customers are not nodes: {sorted(unknown)}")
    if root in customer_set:
        raise RootIsCustomer(f"root {root!r} cannot be a customer")

    line_list = list(lines)
    adjacency: dict[NodeId, list[tuple[NodeId, Line]]] = {n: [] for n in node_list}
    for ln in line_list:
        if ln.from_node not in node_set or ln.to_node not in node_set:
            raise UnknownNode(f"line {ln.from_node!r} -> {ln.to_node!r} references an unknown node")
        if ln.from_node == ln.to_node:
            raise CycleDetected(f"self-loop on node {ln.from_node!r}")
        if not (isfinite(ln.limit_kw) and ln.limit_kw > 0):
            raise InvalidLine(f"line {ln.from_node!r} -> {ln.to_node!r} needs a positive rating")
        if ln.resistance_ohm < 0 or ln.reactance_ohm < 0:
            raise InvalidLine(f"line {ln.from_node!r} -> {ln.to_node!r} has negative impedance")
        adjacency[ln.from_node].append((ln.to_node, ln))
        adjacency[ln.to_node].append((ln.from_node, ln))

    # A spanning tree has exactly |nodes| - 1 lines; classify the failure.
    if len(line_list) > len(node_list) - 1:
        raise CycleDetected(f"{len(line_list)} lines over {len(node_list)} nodes cannot be a tree")
    if len(line_list) < len(node_list) - 1:
        raise Disconnected(f"{len(line_list)} lines cannot span {len(node_list)} nodes")

    # Breadth-first orientation away from the root.
    parent: dict[NodeId, NodeId] = {root: root}
    oriented: list[Line] = []
    queue: deque[NodeId] = deque([root])
    while queue:
        here = queue.popleft()
        for other, ln in adjacency[here]:
            if other == parent[here]:
                continue
            if other in parent:
                raise CycleDetected(f"cycle through line {ln.from_node!r} -> {ln.to_node!r}")
            parent[other] = here
            if ln.from_node == here:
                oriented.append(ln)
            else:
                oriented.append(Line(here, other, ln.limit_kw, ln.resistance_ohm, ln.reactance_ohm))
            queue.append(other)
    if len(parent) != len(node_list):
        missing = sorted(node_set - parent.keys())
        raise Disconnected(f"nodes unreachable from root: {missing}")

    if voltage_bounds is not None:
        lo, hi = voltage_bounds
        if not (isfinite(lo) and isfinite(hi) and 0 < lo <= hi):
            raise InputError(f"voltage bounds must satisfy 0 < lower <= upper, got {voltage_bounds}")

    # Customers fed through each edge, by accumulating subtrees leaf-first.
    children: dict[NodeId, list[NodeId]] = {n: [] for n in node_list}
    for ln in oriented:
        children[ln.from_node].append(ln.to_node)
    below: dict[NodeId, frozenset[NodeId]] = {}
    for ln in reversed(oriented):
        own = frozenset([ln.to_node]) if ln.to_node in customer_set else frozenset()
        below[ln.to_node] = own.union(*(below[c] for c in children[ln.to_node]))
    downstream = {(ln.from_node, ln.to_node): below[ln.to_node] for ln in oriented}

    return NetworkGraph(
        root=root,
        nodes=tuple(node_list),
        lines=tuple(oriented),
        customers=frozenset(customer_set),
        voltage_bounds=voltage_bounds,
        _line_by_edge={(ln.from_node, ln.to_node): ln for ln in oriented},
        _downstream=downstream,
    )


def downstream_set(graph: NetworkGraph, edge: Edge) -> frozenset[NodeId]:
    """Customers whose power is carried by ``edge``."""
    try:
        return graph._downstream[edge]
    except KeyError:
        raise UnknownEdge(f"no oriented line {edge[0]!r} -> {edge[1]!r}") from None


def _check_profile(graph: NetworkGraph, profile: PowerProfile) -> None:
    for node, power in profile.items():
        if node not in graph.customers:
            raise UnknownCustomer(f"profile keys non-customer {node!r}")
        if not isfinite(power):
            raise InputError(f"profile power for {node!r} must be finite, got {power}")


def dc_power_flow(graph: NetworkGraph, profile: PowerProfile) -> dict[Edge, float]:
    """Per-line power in kW, positive toward the leaves.

    Each line carries exactly the sum of the net powers fed through it.
    Customers missing from the profile contribute zero.
    """
    _check_profile(graph, profile)
    subtree: dict[NodeId, float] = {
        n: profile.get(n, 0.0) if n in graph.customers else 0.0 for n in graph.nodes
    }
    # Lines are stored root-first, so reversing visits children before parents.
    for ln in reversed(graph.lines):
        subtree[ln.from_node] += subtree[ln.to_node]
    return {(ln.from_node, ln.to_node): subtree[ln.to_node] for ln in graph.lines}


@dataclass(frozen=True)
class SecurityReport:
    """Result of a line-loading check.

    ``margin_kw`` is the worst value of ``|flow| - limit`` over all lines
    (``-inf`` for a graph with no lines); the profile is secure when it
    is at most :data:`ATOL`.  ``violations`` lists overloaded lines with
    their excess, worst first.
    """

    margin_kw: float
    violations: tuple[tuple[Edge, float], ...]

    @property
    def secure(self) -> bool:
        return self.margin_kw <= ATOL


def check_profile_security(graph: NetworkGraph, profile: PowerProfile) -> SecurityReport:
    """Evaluate every line rating against the profile's flows."""
    flows = dc_power_flow(graph, profile)
    margin = float("-inf")
    violations: list[tuple[Edge, float]] = []
    for edge, flow in flows.items():
        excess = abs(flow) - graph.line(edge).limit_kw
        margin = max(margin, excess)
        if excess > ATOL:
            violations.append((edge, excess))
    violations.sort(key=lambda item: (-item[1], item[0]))
    return SecurityReport(margin_kw=margin, violations=tuple(violations))
