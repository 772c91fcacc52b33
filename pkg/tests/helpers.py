"""Shared generators and brute-force oracles for the test suite.

Everything here is deliberately independent of the implementation under
test: flows are recomputed by naive subtree walks, LP optima by vertex
enumeration, and fair allocations by integer-grid search.
"""

from __future__ import annotations

import itertools
import random
from decimal import Decimal

import numpy as np

from seculex.envelopes import Envelope, verify_limits
from seculex.market import Order, OrderBook, submit_order
from seculex.network import NetworkGraph, validate_radial


# -- random instances ---------------------------------------------------


def random_tree(rng: random.Random, max_nodes: int = 8, min_limit: float = 5.0, max_limit: float = 60.0) -> NetworkGraph:
    """Random rooted tree; every non-root node is a customer with p=0.7."""
    n = rng.randint(2, max_nodes)
    nodes = [f"N{i}" for i in range(n)]
    lines = []
    for i in range(1, n):
        parent = nodes[rng.randrange(i)]
        limit = round(rng.uniform(min_limit, max_limit), 3)
        lines.append({"from_node": parent, "to_node": nodes[i], "limit_kw": limit})
    customers = [nodes[i] for i in range(1, n) if rng.random() < 0.7]
    if not customers:
        customers = [nodes[-1]]
    from seculex.network import Line

    return validate_radial(nodes, [Line(**l) for l in lines], nodes[0], customers)


def random_envelopes(rng: random.Random, graph: NetworkGraph, span: float = 12.0) -> dict[str, Envelope]:
    """Envelopes spanning zero; secure or not depending on the draw."""
    limits = {}
    for c in sorted(graph.customers):
        lo = round(rng.uniform(-span, 0.0), 3)
        hi = round(rng.uniform(0.0, span), 3)
        limits[c] = Envelope(lo, hi)
    return limits


def secure_envelopes(rng: random.Random, graph: NetworkGraph) -> dict[str, Envelope]:
    """Random envelopes shrunk toward zero until the two corners pass."""
    limits = random_envelopes(rng, graph)
    for _ in range(60):
        if verify_limits(graph, limits) <= 0.0:
            return limits
        limits = {c: Envelope(e.lower_kw * 0.5, e.upper_kw * 0.5) for c, e in limits.items()}
    raise AssertionError("could not shrink envelopes to a secure matrix")


def random_profile(rng: random.Random, graph: NetworkGraph, span: float = 20.0) -> dict[str, float]:
    return {c: round(rng.uniform(-span, span), 3) for c in sorted(graph.customers)}


def random_book(rng: random.Random, graph: NetworkGraph, max_orders: int = 6) -> OrderBook:
    book = OrderBook(product_time="t0")
    customers = sorted(graph.customers)
    for oid in range(1, rng.randint(1, max_orders) + 1):
        order = Order(
            id=oid,
            customer=rng.choice(customers),
            type=rng.choice(("buy", "sell")),
            bound=rng.choice(("lower", "upper")),
            delta_kw=round(rng.uniform(0.25, 6.0), 2),
            price_eur_per_kw=Decimal(str(round(rng.uniform(0.01, 0.5), 3))),
        )
        book = submit_order(book, order)
    return book


# -- independent oracles ------------------------------------------------


def naive_flows(graph: NetworkGraph, profile: dict[str, float]) -> dict[tuple[str, str], float]:
    """Per-edge flow by an explicit stack walk, one subtree at a time."""
    children: dict[str, list[str]] = {}
    for line in graph.lines:
        children.setdefault(line.from_node, []).append(line.to_node)
    flows = {}
    for line in graph.lines:
        total = 0.0
        stack = [line.to_node]
        while stack:
            node = stack.pop()
            total += profile.get(node, 0.0)
            stack.extend(children.get(node, []))
        flows[(line.from_node, line.to_node)] = total
    return flows


def vertex_solve(
    objective: np.ndarray,
    rows: np.ndarray,
    relations: list[str],
    rhs: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    feas_tol: float = 1e-7,
) -> tuple[str, float | None, np.ndarray | None]:
    """Brute-force LP solve: enumerate basic solutions of every n-subset
    of {constraint hyperplanes} ∪ {bound hyperplanes}.  Only valid for
    boxes with finite bounds (the polytope is then bounded)."""
    n = len(objective)
    planes: list[tuple[np.ndarray, float]] = []
    for row, b in zip(rows, rhs):
        planes.append((row, float(b)))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        planes.append((e.copy(), float(lower[i])))
        planes.append((e, float(upper[i])))

    def feasible(x: np.ndarray) -> bool:
        if np.any(x < lower - feas_tol) or np.any(x > upper + feas_tol):
            return False
        for row, rel, b in zip(rows, relations, rhs):
            v = float(row @ x)
            if rel == "<=" and v > b + feas_tol:
                return False
            if rel == ">=" and v < b - feas_tol:
                return False
            if rel == "=" and abs(v - b) > feas_tol:
                return False
        return True

    best: float | None = None
    best_x: np.ndarray | None = None
    for combo in itertools.combinations(range(len(planes)), n):
        a = np.array([planes[i][0] for i in combo])
        b = np.array([planes[i][1] for i in combo])
        if abs(np.linalg.det(a)) < 1e-10:
            continue
        x = np.linalg.solve(a, b)
        if not feasible(x):
            continue
        value = float(objective @ x)
        if best is None or value > best + 1e-12 or (abs(value - best) <= 1e-12 and best_x is None):
            best, best_x = value, x
    if best is None:
        return "infeasible", None, None
    return "optimal", best, best_x


def lex_ge(a: list[float], b: list[float], tol: float = 1e-6) -> bool:
    """True iff sorted vector `a` is lexicographically >= `b` within tol."""
    for x, y in zip(sorted(a), sorted(b)):
        if x > y + tol:
            return True
        if x < y - tol:
            return False
    return len(a) >= len(b)


def grid_matrices(
    graph: NetworkGraph,
    contract_lower: dict[str, int],
    contract_upper: dict[str, int],
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """All integer envelope matrices with lo in [contract_lower, 0] and
    hi in [0, contract_upper], as (lo_combos, hi_combos) arrays."""
    customers = sorted(graph.customers)
    lo_choices = [np.arange(contract_lower[c], 1) for c in customers]
    hi_choices = [np.arange(0, contract_upper[c] + 1) for c in customers]
    lo = np.array(list(itertools.product(*lo_choices)), dtype=float)
    hi = np.array(list(itertools.product(*hi_choices)), dtype=float)
    return lo, hi, customers


def incidence_matrix(graph: NetworkGraph, customers: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """0/1 matrix edge x customer (downstream membership) and the edge
    limits, built from scratch with a stack walk."""
    children: dict[str, list[str]] = {}
    for line in graph.lines:
        children.setdefault(line.from_node, []).append(line.to_node)
    rows = []
    limits = []
    for line in graph.lines:
        members = set()
        stack = [line.to_node]
        while stack:
            node = stack.pop()
            members.add(node)
            stack.extend(children.get(node, []))
        rows.append([1.0 if c in members else 0.0 for c in customers])
        limits.append(line.limit_kw)
    return np.array(rows), np.array(limits)
