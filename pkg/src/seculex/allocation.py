"""Fair allocation of operating envelopes on a radial network.

Envelopes are allocated by lexicographic max-min width: repeatedly
maximize the smallest envelope width over all not-yet-fixed customers,
subject to corner security on every line and to each customer's
contractual and guaranteed bands, then pin the customers whose width
cannot exceed that round's optimum (the blocking set) and continue with
the rest.  Each round strictly shrinks the unfixed set, so at most one
round per customer is needed.

Within a round the width optimum can leave envelope *positions*
underdetermined.  Positions are made canonical by a second solve that
pins every remaining width at the round optimum and maximizes the
smallest margin by which envelopes extend beyond their guaranteed band,
which in particular places symmetric customers symmetrically.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite
from typing import Callable, Mapping

from .envelopes import Envelope, verify_limits
from .errors import DomainError, InputError, InternalError
from .lp import LinearProgram, LpSolution, LpStatus
from .network import ATOL, NetworkGraph, downstream_set

# A width probe must beat the round optimum by more than this to count
# as unblocked; also the snap tolerance for reporting round widths.
FIX_TOL = 1e-6


class InfeasibleGuarantees(DomainError):
    """The guaranteed bands themselves violate line security."""


class InvalidBounds(InputError):
    """Contractual/guaranteed bands are not properly nested."""


@dataclass(frozen=True)
class AllocationBounds:
    """Per-customer allocation bands in kW.

    The guaranteed band must sit inside the contractual band:
    ``contract_lower <= guaranteed_lower <= guaranteed_upper <= contract_upper``.
    The allocated envelope always contains the guaranteed band and stays
    inside the contractual band.
    """

    contract_lower_kw: float
    guaranteed_lower_kw: float
    guaranteed_upper_kw: float
    contract_upper_kw: float

    def __post_init__(self) -> None:
        values = (
            self.contract_lower_kw,
            self.guaranteed_lower_kw,
            self.guaranteed_upper_kw,
            self.contract_upper_kw,
        )
        if not all(isfinite(v) for v in values):
            raise InvalidBounds(f"bounds must be finite, got {self}")
        if not (
            self.contract_lower_kw <= self.guaranteed_lower_kw
            and self.guaranteed_lower_kw <= self.guaranteed_upper_kw
            and self.guaranteed_upper_kw <= self.contract_upper_kw
        ):
            raise InvalidBounds(f"bands must nest contract <= guaranteed <= contract, got {self}")


@dataclass(frozen=True)
class LexIteration:
    """One max-min round: the optimum width and the customers it pinned."""

    width_kw: float
    fixed: dict[str, Envelope]


@dataclass(frozen=True)
class AllocationResult:
    doe: dict[str, Envelope]
    iterations: tuple[LexIteration, ...]


BoundsMap = Mapping[str, AllocationBounds]
FixedMap = Mapping[str, Envelope]


def _check_inputs(graph: NetworkGraph, bounds: BoundsMap, fixed: FixedMap) -> None:
    extra = set(bounds) - graph.customers
    if extra:
        raise InputError(f"bounds for non-customers: {sorted(extra)}")
    missing = graph.customers - set(bounds)
    if missing:
        raise InputError(f"customers without bounds: {sorted(missing)}")
    stray = set(fixed) - set(bounds)
    if stray:
        raise InputError(f"fixed envelopes for unknown customers: {sorted(stray)}")


def _corner_rows(
    lp: LinearProgram,
    graph: NetworkGraph,
    fixed: FixedMap,
    unfixed: list[str],
    prefix: str,
) -> None:
    """Two rows per line and corner: |sum of corner powers below| <= rating."""
    pick = (lambda e: e.lower_kw) if prefix == "lo" else (lambda e: e.upper_kw)
    for edge in graph.edges:
        below = downstream_set(graph, edge)
        coeffs = {f"{prefix}::{c}": 1.0 for c in unfixed if c in below}
        constant = sum(pick(fixed[c]) for c in below if c in fixed)
        if not coeffs:
            continue
        limit = graph.line(edge).limit_kw
        tag = f"{edge[0]}-{edge[1]}"
        lp.add_constraint(coeffs, "<=", limit - constant, name=f"{prefix}[{tag}]<=lim")
        lp.add_constraint(coeffs, ">=", -limit - constant, name=f"{prefix}[{tag}]>=-lim")


def _base_program(
    graph: NetworkGraph,
    bounds: BoundsMap,
    fixed: FixedMap,
    unfixed: list[str],
    min_width: float | None,
) -> LinearProgram:
    """Shared body of every allocation solve.

    Envelope variables range over the contractual-to-guaranteed bands,
    which already encodes that envelopes contain the guaranteed band.
    ``min_width`` None adds the max-min width variable ``w``; otherwise
    every unfixed width is pinned to at least that value.
    """
    lp = LinearProgram()
    for c in unfixed:
        b = bounds[c]
        lp.add_variable(f"lo::{c}", b.contract_lower_kw, b.guaranteed_lower_kw)
        lp.add_variable(f"hi::{c}", b.guaranteed_upper_kw, b.contract_upper_kw)
    if min_width is None:
        lp.add_variable("w")
        for c in unfixed:
            lp.add_constraint(
                {"w": 1.0, f"hi::{c}": -1.0, f"lo::{c}": 1.0}, "<=", 0.0, name=f"w<=width[{c}]"
            )
    else:
        for c in unfixed:
            lp.add_constraint(
                {f"hi::{c}": 1.0, f"lo::{c}": -1.0}, ">=", min_width, name=f"width[{c}]>=w*"
            )
    _corner_rows(lp, graph, fixed, unfixed, "lo")
    _corner_rows(lp, graph, fixed, unfixed, "hi")
    return lp


def _envelopes_from(solution: LpSolution, unfixed: list[str]) -> dict[str, Envelope]:
    return {
        c: Envelope(solution.values[f"lo::{c}"], solution.values[f"hi::{c}"]) for c in unfixed
    }


def _diagnose_infeasible(graph: NetworkGraph, bounds: BoundsMap, fixed: FixedMap) -> str:
    guaranteed = {
        c: fixed[c]
        if c in fixed
        else Envelope(bounds[c].guaranteed_lower_kw, bounds[c].guaranteed_upper_kw)
        for c in bounds
    }
    margin = verify_limits(graph, guaranteed)
    return (
        "guaranteed bands are insecure: worst line overload "
        f"{margin:.9g} kW at the band corners"
    )


LpSink = Callable[[str], None]


def lex_iteration(
    graph: NetworkGraph,
    bounds: BoundsMap,
    fixed: FixedMap,
    lp_sink: LpSink | None = None,
) -> tuple[float, dict[str, Envelope]]:
    """One max-min round over the customers not in ``fixed``.

    Returns the optimum width and a full envelope matrix (fixed
    customers keep their envelopes, unfixed ones take the solver's
    values, whose positions are not yet canonical).
    """
    _check_inputs(graph, bounds, fixed)
    unfixed = sorted(set(bounds) - set(fixed))
    if not unfixed:
        raise InputError("no unfixed customers left to optimize")
    lp = _base_program(graph, bounds, fixed, unfixed, min_width=None)
    lp.set_objective({"w": 1.0})
    if lp_sink is not None:
        lp_sink(lp.dump())
    solution = lp.solve()
    if solution.status is LpStatus.INFEASIBLE:
        raise InfeasibleGuarantees(_diagnose_infeasible(graph, bounds, fixed))
    if solution.status is not LpStatus.OPTIMAL:
        raise InternalError(f"width program ended {solution.status}, expected optimal")
    width = float(solution.objective_value)
    matrix = dict(fixed)
    matrix.update(_envelopes_from(solution, unfixed))
    return width, matrix


def _blocked_customers(
    graph: NetworkGraph,
    bounds: BoundsMap,
    fixed: FixedMap,
    unfixed: list[str],
    width: float,
    lp_sink: LpSink | None = None,
) -> list[str]:
    """Customers whose width cannot exceed the round optimum.

    Probe one customer at a time: maximize its width while every other
    unfixed width stays at least the optimum.  The probe never reports
    an empty set on a correct round optimum, because the average of the
    round solution and any probe improvement would raise the min width.
    """
    blocked: list[str] = []
    for c in unfixed:
        lp = _base_program(graph, bounds, fixed, unfixed, min_width=width)
        lp.set_objective({f"hi::{c}": 1.0, f"lo::{c}": -1.0})
        if lp_sink is not None:
            lp_sink(lp.dump())
        probe = lp.solve()
        if probe.status is not LpStatus.OPTIMAL:
            raise InternalError(f"width probe for {c!r} ended {probe.status}")
        if probe.objective_value <= width + FIX_TOL:
            blocked.append(c)
    return blocked


def _canonical_positions(
    graph: NetworkGraph,
    bounds: BoundsMap,
    fixed: FixedMap,
    unfixed: list[str],
    width: float,
    lp_sink: LpSink | None = None,
) -> dict[str, Envelope]:
    """Positions at the round optimum, symmetric where the data is.

    With all widths pinned at the optimum, maximize the smallest margin
    ``z`` by which any envelope end extends beyond its guaranteed band.
    """
    lp = _base_program(graph, bounds, fixed, unfixed, min_width=width)
    lp.add_variable("z")
    for c in unfixed:
        b = bounds[c]
        lp.add_constraint(
            {"z": 1.0, f"lo::{c}": 1.0}, "<=", b.guaranteed_lower_kw, name=f"z<=lo-margin[{c}]"
        )
        lp.add_constraint(
            {"z": 1.0, f"hi::{c}": -1.0}, "<=", -b.guaranteed_upper_kw, name=f"z<=hi-margin[{c}]"
        )
    lp.set_objective({"z": 1.0})
    if lp_sink is not None:
        lp_sink(lp.dump())
    solution = lp.solve()
    if solution.status is not LpStatus.OPTIMAL:
        raise InternalError(f"position program ended {solution.status}")
    return _envelopes_from(solution, unfixed)


def allocate_does(
    graph: NetworkGraph, bounds: BoundsMap, lp_sink: LpSink | None = None
) -> AllocationResult:
    """Allocate every customer's envelope by lexicographic max-min width.

    Raises :class:`InfeasibleGuarantees` when even the guaranteed bands
    cannot be served securely.  The result is deterministic and the
    final matrix always passes :func:`verify_limits`.
    """
    _check_inputs(graph, bounds, {})
    fixed: dict[str, Envelope] = {}
    iterations: list[LexIteration] = []
    for _ in range(len(bounds) + 1):
        unfixed = sorted(set(bounds) - set(fixed))
        if not unfixed:
            break
        width, _ = lex_iteration(graph, bounds, fixed, lp_sink)
        blocked = _blocked_customers(graph, bounds, fixed, unfixed, width, lp_sink)
        if not blocked:
            raise InternalError("max-min round pinned no customer; width probe inconsistent")
        positions = _canonical_positions(graph, bounds, fixed, unfixed, width, lp_sink)
        newly = {c: positions[c] for c in blocked}
        fixed.update(newly)
        iterations.append(LexIteration(width_kw=width, fixed=newly))
    else:
        raise InternalError("allocation failed to terminate")

    if fixed:
        margin = verify_limits(graph, fixed)
        if margin > ATOL:
            raise InternalError(f"allocated envelopes are insecure by {margin:.3g} kW")
    return AllocationResult(doe=fixed, iterations=tuple(iterations))


def guaranteed_matrix(bounds: BoundsMap) -> dict[str, Envelope]:
    """The tightest admissible envelope matrix (guaranteed bands only)."""
    return {c: Envelope(b.guaranteed_lower_kw, b.guaranteed_upper_kw) for c, b in bounds.items()}


__all__ = [
    "AllocationBounds",
    "AllocationResult",
    "FIX_TOL",
    "InfeasibleGuarantees",
    "InvalidBounds",
    "LexIteration",
    "allocate_does",
    "guaranteed_matrix",
    "lex_iteration",
]
