"""End-to-end acceptance checks.

Each test covers one numbered criterion and reports a PASS/FAIL line in
the pytest terminal summary (see conftest.pytest_terminal_summary).
"""

import csv
import io
import json
import random
import subprocess
import sys
import time
from contextlib import contextmanager
from decimal import Decimal
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from helpers import (
    grid_matrices,
    incidence_matrix,
    random_book,
    random_envelopes,
    random_profile,
    random_tree,
    secure_envelopes,
    vertex_solve,
)
from seculex.allocation import AllocationBounds, allocate_does
from seculex.envelopes import verify_limits, verify_limits_oracle
from seculex.lp import FEAS_TOL, LinearProgram, LpStatus
from seculex.market import OrderBook, clear, submit_order
from seculex.network import ATOL, Line, dc_power_flow, downstream_set, validate_radial
from seculex.scenario import build_graph, build_orders, parse_scenario, product_time_of

REPO = Path(__file__).resolve().parent.parent
FEEDER = REPO / "scenarios" / "lv-feeder.json"


@contextmanager
def criterion(number: int, label: str):
    try:
        yield
    except BaseException:
        ACCEPTANCE_LINES.append(f"criterion {number}: FAIL - {label}")
        raise
    ACCEPTANCE_LINES.append(f"criterion {number}: PASS - {label}")


def feeder_graph_and_scenario():
    scenario, _ = parse_scenario(json.loads(FEEDER.read_text()))
    return build_graph(scenario), scenario


def test_c01_golden_allocation(feeder_scenario):
    with criterion(1, "golden allocation [0,15] / [-20,15]x3 in 2 iterations, < 1 s"):
        scenario, _ = parse_scenario(feeder_scenario)
        graph = build_graph(scenario)
        from seculex.scenario import build_bounds

        started = time.perf_counter()
        result = allocate_does(graph, build_bounds(scenario))
        elapsed = time.perf_counter() - started

        expected = {"C1": (0.0, 15.0), "C2": (-20.0, 15.0), "C3": (-20.0, 15.0), "C4": (-20.0, 15.0)}
        for node, (lo, hi) in expected.items():
            assert result.doe[node].lower_kw == pytest.approx(lo, abs=1e-6)
            assert result.doe[node].upper_kw == pytest.approx(hi, abs=1e-6)
        assert len(result.iterations) == 2
        assert {round(it.width_kw, 6) for it in result.iterations} == {15.0, 35.0}
        assert elapsed < 1.0


def test_c02_golden_clearing():
    with criterion(2, "golden clearing a={1,5,6}, shifted limits, one 1 kW order left, < 1 s"):
        graph, scenario = feeder_graph_and_scenario()
        from seculex.simulate import resolve_limits

        limits, _ = resolve_limits(graph, scenario)
        book = OrderBook(product_time=product_time_of(scenario))
        for order in build_orders(scenario):
            book = submit_order(book, order)

        started = time.perf_counter()
        outcome = clear(graph, limits, book)
        elapsed = time.perf_counter() - started

        assert {k: float(v) for k, v in outcome.acceptances.items()} == pytest.approx(
            {1: 1.0, 2: 5.0, 3: 6.0}, abs=1e-6
        )
        expected = {"C1": (0.0, 15.0), "C2": (-21.0, 15.0), "C3": (-25.0, 15.0), "C4": (-14.0, 15.0)}
        for node, (lo, hi) in expected.items():
            assert outcome.updated_limits[node].lower_kw == pytest.approx(lo, abs=1e-6)
            assert outcome.updated_limits[node].upper_kw == pytest.approx(hi, abs=1e-6)
        remaining = outcome.updated_book.orders
        assert len(remaining) == 1
        assert remaining[0].customer == "C3"
        assert remaining[0].type == "buy"
        assert remaining[0].bound == "lower"
        assert remaining[0].delta_kw == pytest.approx(1.0, abs=1e-6)
        assert elapsed < 1.0


def test_c03_golden_settlement():
    with criterion(3, "golden settlement +0.03 / +0.10 / -0.12 and SW 0.01, exact decimals"):
        graph, scenario = feeder_graph_and_scenario()
        from seculex.simulate import resolve_limits

        limits, _ = resolve_limits(graph, scenario)
        book = OrderBook(product_time=product_time_of(scenario))
        for order in build_orders(scenario):
            book = submit_order(book, order)
        outcome = clear(graph, limits, book)

        assert outcome.payments["C2"] == Decimal("0.03")
        assert outcome.payments["C3"] == Decimal("0.10")
        assert outcome.payments["C4"] == Decimal("-0.12")
        assert outcome.social_welfare == Decimal("0.01")
        assert sum(outcome.payments.values(), Decimal(0)) == outcome.social_welfare


def test_c04_golden_comparison_byte_stable():
    with criterion(4, "comparison table reproduces the reference cells, byte-stable"):
        def run(fmt: str) -> bytes:
            proc = subprocess.run(
                [sys.executable, "-m", "seculex", "compare", str(FEEDER), "--format", fmt],
                capture_output=True,
                timeout=120,
            )
            assert proc.returncode == 0, proc.stderr.decode()
            return proc.stdout

        table_a = run("table")
        table_b = run("table")
        assert table_a == table_b

        text = table_a.decode()
        assert "17 or 7" in text
        assert "76 or 90" in text

        rows = list(csv.reader(io.StringIO(run("csv").decode())))
        cells = {r[0]: r[1:] for r in rows[1:]}
        assert cells["Curtailment [kW]"] == ["0", "9", "17", "7", "1"]
        assert cells["Renewable utilization [%]"] == ["100", "87", "76", "90", "99"]
        assert cells["Security violation"] == ["Yes", "No", "No", "No", "No"]
        assert cells["Incentivizes flexibility"] == ["No", "No", "Partial", "Partial", "Yes"]
        assert cells["Market social welfare [EUR]"] == ["/", "/", "/", "/", "0.01"]
        assert run("csv") == run("csv")


def test_c05_two_corner_check_agrees_with_oracle():
    with criterion(5, "two-corner security check agrees with the corner oracle on 200 trees"):
        rng = random.Random(1001)
        started = time.perf_counter()
        secure_count = 0
        for _ in range(200):
            graph = random_tree(rng, max_nodes=8)
            limits = random_envelopes(rng, graph)
            margin = verify_limits(graph, limits)
            report = verify_limits_oracle(graph, limits, samples=150, seed=rng.randrange(10**6))
            assert report.corners_enumerated
            assert (margin <= ATOL) == report.secure, (margin, report)
            assert margin == pytest.approx(report.margin_kw, abs=1e-9)
            secure_count += report.secure
        elapsed = time.perf_counter() - started
        assert elapsed < 30.0
        assert 0 < secure_count < 200  # both verdicts must occur


def test_c06_flow_monotonicity():
    with criterion(6, "edge flows non-decreasing in withdrawal on 500 random draws"):
        rng = random.Random(6006)
        for _ in range(500):
            graph = random_tree(rng)
            profile = random_profile(rng, graph)
            customer = rng.choice(sorted(graph.customers))
            delta = rng.uniform(0.0, 12.0)
            bumped = dict(profile, **{customer: profile[customer] + delta})
            before = dc_power_flow(graph, profile)
            after = dc_power_flow(graph, bumped)
            for edge in graph.edges:
                if customer in downstream_set(graph, edge):
                    assert after[edge] >= before[edge] - 1e-9
                else:
                    assert abs(after[edge] - before[edge]) <= 1e-9


def test_c07_simplex_matches_vertex_enumeration():
    with criterion(7, "simplex agrees with vertex brute force on 100 small LPs"):
        rng = random.Random(7007)
        optimal_count = 0
        trials = 0
        while trials < 100:
            n = rng.randint(1, 4)
            lower = np.array([round(rng.uniform(-5.0, 0.0), 1) for _ in range(n)])
            upper = lower + np.array([round(rng.uniform(0.5, 8.0), 1) for _ in range(n)])
            m = rng.randint(1, 4)
            rows = np.array([[round(rng.uniform(-3.0, 3.0), 1) for _ in range(n)] for _ in range(m)])
            relations = [rng.choices(["<=", ">=", "="], weights=[0.5, 0.35, 0.15])[0] for _ in range(m)]
            rhs = np.array([round(rng.uniform(-8.0, 8.0), 1) for _ in range(m)])
            objective = np.array([round(rng.uniform(-4.0, 4.0), 1) for _ in range(n)])
            trials += 1

            status, best, _ = vertex_solve(objective, rows, relations, rhs, lower, upper)

            lp = LinearProgram()
            names = [f"x{i}" for i in range(n)]
            for name, lo, hi in zip(names, lower, upper):
                lp.add_variable(name, float(lo), float(hi))
            for row, rel, b in zip(rows, relations, rhs):
                coeffs = {nm: float(a) for nm, a in zip(names, row) if a != 0.0}
                lp.add_constraint(coeffs or {names[0]: 0.0}, rel, float(b))
            lp.set_objective({nm: float(c) for nm, c in zip(names, objective)})
            sol = lp.solve()

            if status == "infeasible":
                assert sol.status is LpStatus.INFEASIBLE, lp.dump()
                continue
            assert sol.status is LpStatus.OPTIMAL, lp.dump()
            assert sol.objective_value == pytest.approx(best, abs=1e-6)
            residuals = lp.residuals(sol.values)
            assert max(residuals.values(), default=0.0) <= FEAS_TOL
            optimal_count += 1
        assert optimal_count >= 30


def test_c08_allocation_dominates_integer_grids():
    with criterion(8, "allocation widths lex-dominate every feasible integer grid on 50 instances"):
        rng = random.Random(8008)
        instances = 0
        while instances < 50:
            n_nodes = rng.randint(4, 6)
            nodes = [f"N{i}" for i in range(n_nodes)]
            lines = [
                Line(nodes[rng.randrange(i)], nodes[i], float(rng.randint(2, 8)))
                for i in range(1, n_nodes)
            ]
            non_root = nodes[1:]
            rng.shuffle(non_root)
            customers = sorted(non_root[:3])
            if len(customers) < 3:
                continue
            graph = validate_radial(nodes, lines, nodes[0], customers)
            contract_lower = {c: -rng.randint(1, 5) for c in customers}
            contract_upper = {c: rng.randint(1, 5) for c in customers}
            bounds = {
                c: AllocationBounds(float(contract_lower[c]), 0.0, 0.0, float(contract_upper[c]))
                for c in customers
            }
            result = allocate_does(graph, bounds)
            widths = np.sort([result.doe[c].width_kw for c in customers])

            inc, ratings = incidence_matrix(graph, customers)
            lo_all, hi_all, _ = grid_matrices(graph, contract_lower, contract_upper)
            lo_ok = (np.abs(lo_all @ inc.T) <= ratings + 1e-9).all(axis=1)
            hi_ok = (np.abs(hi_all @ inc.T) <= ratings + 1e-9).all(axis=1)
            lo_feasible = lo_all[lo_ok]
            hi_feasible = hi_all[hi_ok]
            assert len(lo_feasible) and len(hi_feasible)  # zero matrix is always there

            pair_widths = hi_feasible[None, :, :] - lo_feasible[:, None, :]
            pair_sorted = np.sort(pair_widths.reshape(-1, 3), axis=1)
            tol = 1e-6
            d = pair_sorted - widths[None, :]
            dominated = (
                (d[:, 0] > tol)
                | ((d[:, 0] > -tol) & (d[:, 1] > tol))
                | ((d[:, 0] > -tol) & (d[:, 1] > -tol) & (d[:, 2] > tol))
            )
            assert not dominated.any(), (widths, pair_sorted[dominated][:5])
            instances += 1


def test_c09_accounting_identity_and_security():
    with criterion(9, "200 random clearings settle exactly and leave secure envelopes"):
        rng = random.Random(9009)
        nonempty = 0
        for _ in range(200):
            graph = random_tree(rng)
            limits = secure_envelopes(rng, graph)
            book = random_book(rng, graph)
            outcome = clear(graph, limits, book)

            by_id = {o.id: o for o in book.orders}
            recomputed = Decimal(0)
            for oid, qty in outcome.acceptances.items():
                order = by_id[oid]
                assert Decimal(0) <= qty <= Decimal(str(order.delta_kw))
                sign = 1 if order.type == "buy" else -1
                recomputed += sign * order.price_eur_per_kw * qty
            paid = sum(outcome.payments.values(), Decimal(0))
            assert paid - recomputed == Decimal(0)
            assert outcome.social_welfare == recomputed
            assert verify_limits(graph, outcome.updated_limits) <= ATOL
            nonempty += any(q > 0 for q in outcome.acceptances.values())
        assert nonempty >= 20
