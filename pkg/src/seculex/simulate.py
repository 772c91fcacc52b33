"""Scheme comparison: what one trading period costs under four regimes.

Every scheme starts from the same scenario (expected net powers at one
product time) and ends with a delivered profile plus money flows:

* ``no_control``   -- deliver as expected; report any overload.
* ``anm``          -- the operator curtails PV injection in real time,
                      equal shares with waterfilling, until secure.
* ``static``       -- envelopes allocated ahead; customers either keep
                      their battery schedule or reschedule into the
                      envelope; violations are clamped.
* ``seculex``      -- envelopes allocated ahead, then traded in a
                      session (clear after every submitted order), then
                      scripted battery responses, then clamping.

Curtailment is any forced deviation between a customer's scheduled and
delivered net power; voluntary battery moves are not curtailment.
Renewable utilization is PV production net of PV spill over total PV
(100 when the scenario has no PV).
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Literal

from .allocation import AllocationResult, allocate_does
from .envelopes import DoeMatrix, Envelope, clamp_to_envelope, require_complete
from .errors import DomainError, InputError
from .market import OrderBook, as_money, clear, close_session, submit_order
from .network import ATOL, NetworkGraph, check_profile_security, downstream_set
from .scenario import (
    CustomerModel,
    ScenarioModel,
    build_bounds,
    build_orders,
    explicit_limits,
    product_time_of,
)

SCHEME_ORDER = ("no_control", "anm", "static", "seculex")
FLEXIBILITY = {"no_control": "no", "anm": "no", "static": "partial", "seculex": "yes"}


class InsufficientCurtailableInjection(DomainError):
    """Curtailing every curtailable kW of PV cannot relieve the overload."""


@dataclass(frozen=True)
class CustomerOutcome:
    """Per-customer detail row of one scheme run.

    ``scheduled_net_kw`` is the net power after any voluntary battery
    response; the difference to ``delivered_net_kw`` is curtailment.
    """

    node: str
    expected_net_kw: float
    scheduled_net_kw: float
    delivered_net_kw: float
    curtailed_kw: float
    pv_curtailed_kw: float
    opportunity_loss_eur: Decimal
    payment_eur: Decimal
    envelope: tuple[float, float] | None


@dataclass(frozen=True)
class SchemeReport:
    scheme: str
    variant: str | None
    security_violation: bool
    total_curtailment_kw: float
    pv_curtailment_kw: float
    renewable_utilization_pct: float
    opportunity_loss_eur: Decimal
    market_social_welfare_eur: Decimal | None
    incentivizes_flexibility: str
    customers: tuple[CustomerOutcome, ...]


def _planned(customer: CustomerModel) -> float:
    return customer.battery.planned_kw if customer.battery else 0.0


def _withdrawal(customer: CustomerModel) -> float:
    # Validated non-negative at parse time.
    return customer.expected_net_kw + customer.pv_kw + _planned(customer)


def _net_with_plan(customer: CustomerModel, plan_kw: float) -> float:
    return _withdrawal(customer) - customer.pv_kw - plan_kw


def _outcome(
    customer: CustomerModel,
    scheduled: float,
    delivered: float,
    hours: Decimal,
    envelope: Envelope | None,
    payment: Decimal,
) -> CustomerOutcome:
    curtailed = abs(scheduled - delivered)
    if delivered > scheduled + ATOL:
        # Forced up: injection was cut, spilling PV first.
        pv_spill = min(curtailed, customer.pv_kw)
        loss = as_money(round(curtailed, 9)) * customer.price_inject_eur_per_kwh * hours
    elif delivered < scheduled - ATOL:
        # Forced down: withdrawal was cut, valued at the retail tariff.
        pv_spill = 0.0
        loss = as_money(round(curtailed, 9)) * customer.price_withdraw_eur_per_kwh * hours
    else:
        pv_spill, loss = 0.0, Decimal(0)
    return CustomerOutcome(
        node=customer.node,
        expected_net_kw=customer.expected_net_kw,
        scheduled_net_kw=scheduled,
        delivered_net_kw=delivered,
        curtailed_kw=curtailed,
        pv_curtailed_kw=pv_spill,
        opportunity_loss_eur=loss,
        payment_eur=payment,
        envelope=(envelope.lower_kw, envelope.upper_kw) if envelope else None,
    )


def _report(
    scheme: str,
    variant: str | None,
    scenario: ScenarioModel,
    graph: NetworkGraph,
    outcomes: list[CustomerOutcome],
    social_welfare: Decimal | None,
) -> SchemeReport:
    delivered = {o.node: o.delivered_net_kw for o in outcomes}
    violation = not check_profile_security(graph, delivered).secure
    total_pv = sum(c.pv_kw for c in scenario.customers)
    pv_curtailed = sum(o.pv_curtailed_kw for o in outcomes)
    utilization = 100.0 if total_pv <= 0 else 100.0 * (total_pv - pv_curtailed) / total_pv
    return SchemeReport(
        scheme=scheme,
        variant=variant,
        security_violation=violation,
        total_curtailment_kw=sum(o.curtailed_kw for o in outcomes),
        pv_curtailment_kw=pv_curtailed,
        renewable_utilization_pct=utilization,
        opportunity_loss_eur=sum((o.opportunity_loss_eur for o in outcomes), Decimal(0)),
        market_social_welfare_eur=social_welfare,
        incentivizes_flexibility=FLEXIBILITY[scheme],
        customers=tuple(outcomes),
    )


def run_no_control(graph: NetworkGraph, scenario: ScenarioModel) -> SchemeReport:
    """Deliver the expected profile untouched and report overloads."""
    hours = as_money(scenario.period_hours)
    outcomes = [
        _outcome(c, c.expected_net_kw, c.expected_net_kw, hours, None, Decimal(0))
        for c in scenario.customers
    ]
    return _report("no_control", None, scenario, graph, outcomes, None)


def run_anm(graph: NetworkGraph, scenario: ScenarioModel) -> SchemeReport:
    """Real-time curtailment of PV injection, equal shares per overload.

    Only PV injection is curtailable (the operator has no access to
    batteries): each customer can give up at most ``min(pv, injection)``.
    An overloaded line is relieved by splitting the excess equally over
    the injecting customers behind it, re-spreading what exceeds a
    customer's cap (waterfilling).
    """
    hours = as_money(scenario.period_hours)
    by_node = {c.node: c for c in scenario.customers}
    net = {c.node: c.expected_net_kw for c in scenario.customers}
    spilled = {c.node: 0.0 for c in scenario.customers}

    for _ in range(len(graph.lines) + 1):
        report = check_profile_security(graph, net)
        if report.secure:
            break
        edge, excess = report.violations[0]
        caps = {}
        for node in downstream_set(graph, edge):
            room = min(by_node[node].pv_kw - spilled[node], -net[node])
            if room > ATOL:
                caps[node] = room
        shares = _waterfill(excess, caps)
        if sum(shares.values()) < excess - ATOL:
            raise InsufficientCurtailableInjection(
                f"line {edge[0]}->{edge[1]} stays overloaded after all curtailable PV is spilled"
            )
        for node, share in shares.items():
            net[node] += share
            spilled[node] += share
    else:
        raise InsufficientCurtailableInjection("curtailment failed to converge")

    outcomes = [
        _outcome(c, c.expected_net_kw, net[c.node], hours, None, Decimal(0))
        for c in scenario.customers
    ]
    return _report("anm", None, scenario, graph, outcomes, None)


def _waterfill(amount: float, caps: dict[str, float]) -> dict[str, float]:
    """Split ``amount`` equally over keys, capped, residual re-spread."""
    shares = {k: 0.0 for k in caps}
    active = sorted(caps)
    remaining = amount
    while active and remaining > ATOL:
        share = remaining / len(active)
        bounded = [k for k in active if caps[k] - shares[k] <= share + ATOL]
        if not bounded:
            for k in active:
                shares[k] += share
            remaining = 0.0
            break
        for k in bounded:
            remaining -= caps[k] - shares[k]
            shares[k] = caps[k]
            active.remove(k)
    # Caps may be exhausted with amount left over; the caller checks.
    return shares


def resolve_limits(
    graph: NetworkGraph, scenario: ScenarioModel
) -> tuple[DoeMatrix, AllocationResult | None]:
    """The scenario's explicit envelope matrix, else a fresh allocation."""
    explicit = explicit_limits(scenario)
    if explicit is not None:
        require_complete(graph, explicit)
        return explicit, None
    result = allocate_does(graph, build_bounds(scenario))
    return result.doe, result


def run_static_envelopes(
    graph: NetworkGraph,
    scenario: ScenarioModel,
    c4_behavior: Literal["keep_schedule", "reschedule"] = "keep_schedule",
) -> SchemeReport:
    """Day-ahead envelopes, customer-side compliance, clamping.

    ``c4_behavior`` (named after the study case's battery customer)
    applies to every customer with a reschedulable battery: under
    ``reschedule`` the battery plan shifts just enough to bring the net
    power inside the envelope, bounded by the battery's ratings.
    """
    if c4_behavior not in ("keep_schedule", "reschedule"):
        raise InputError(f"behavior must be keep_schedule or reschedule, got {c4_behavior!r}")
    limits, _ = resolve_limits(graph, scenario)
    hours = as_money(scenario.period_hours)
    outcomes = []
    for customer in scenario.customers:
        plan = _planned(customer)
        env = limits[customer.node]
        if (
            c4_behavior == "reschedule"
            and customer.battery is not None
            and customer.battery.reschedule_allowed
        ):
            plan = _reschedule(customer, env)
        scheduled = _net_with_plan(customer, plan)
        clamped, _ = clamp_to_envelope({customer.node: env}, {customer.node: scheduled})
        outcomes.append(
            _outcome(customer, scheduled, clamped[customer.node], hours, env, Decimal(0))
        )
    variant = c4_behavior
    return _report("static", variant, scenario, graph, outcomes, None)


def _reschedule(customer: CustomerModel, env: Envelope) -> float:
    """Minimal battery-plan shift that puts the net power in the band."""
    battery = customer.battery
    plan = battery.planned_kw
    net = _net_with_plan(customer, plan)
    if net < env.lower_kw:
        # Raise net power by discharging less / charging more.
        shift = min(env.lower_kw - net, plan + battery.max_charge_kw)
        plan -= shift
    elif net > env.upper_kw:
        shift = min(net - env.upper_kw, battery.max_discharge_kw - plan)
        plan += shift
    return plan


def run_seculex(graph: NetworkGraph, scenario: ScenarioModel) -> SchemeReport:
    """Allocated envelopes, a continuous trading session, scripted response.

    The book is cleared after every submitted order (continuous market);
    acceptances, payments, and welfare accumulate over the session.
    After close, customers with a scripted ``market_plan_kw`` switch
    their battery to it, and delivery clamps to the final envelopes.
    """
    limits, _ = resolve_limits(graph, scenario)
    by_node = {c.node: c for c in scenario.customers}
    for order in scenario.orders:
        if not by_node[order.customer].participates_in_market:
            raise InputError(
                f"order {order.id}: customer {order.customer!r} does not participate in the market"
            )

    book = OrderBook(product_time=product_time_of(scenario))
    current = dict(limits)
    payments: dict[str, Decimal] = {}
    social_welfare = Decimal(0)
    for order in build_orders(scenario):
        book = submit_order(book, order)
        outcome = clear(graph, current, book)
        current = outcome.updated_limits
        book = outcome.updated_book
        for node, amount in outcome.payments.items():
            payments[node] = payments.get(node, Decimal(0)) + amount
        social_welfare += outcome.social_welfare
    close_session(book)

    hours = as_money(scenario.period_hours)
    outcomes = []
    for customer in scenario.customers:
        plan = _planned(customer)
        if customer.battery is not None and customer.battery.market_plan_kw is not None:
            plan = customer.battery.market_plan_kw
        scheduled = _net_with_plan(customer, plan)
        env = current[customer.node]
        clamped, _ = clamp_to_envelope({customer.node: env}, {customer.node: scheduled})
        outcomes.append(
            _outcome(
                customer,
                scheduled,
                clamped[customer.node],
                hours,
                env,
                payments.get(customer.node, Decimal(0)),
            )
        )
    return _report("seculex", None, scenario, graph, outcomes, social_welfare)


def compare(graph: NetworkGraph, scenario: ScenarioModel) -> list[SchemeReport]:
    """All four schemes, static in both behaviors: five reports."""
    return [
        run_no_control(graph, scenario),
        run_anm(graph, scenario),
        run_static_envelopes(graph, scenario, "keep_schedule"),
        run_static_envelopes(graph, scenario, "reschedule"),
        run_seculex(graph, scenario),
    ]
