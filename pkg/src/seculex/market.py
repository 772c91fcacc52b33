"""Continuous limit-exchange market over operating envelopes.

Customers trade envelope capacity instead of energy: an order moves a
bound of its customer's envelope by up to ``delta_kw``.  Buying lower
capacity extends the lower bound downward, selling it gives lower range
back; buying upper capacity extends the upper bound upward, selling it
gives upper range back.  Clearing maximizes declared welfare (buy bids
minus sell asks, pay-as-bid) subject to the post-trade envelopes
remaining secure, then maximizes traded volume among the
welfare-optimal solutions so that zero-price-spread trades still
execute.

Money is exact: prices are decimals, cleared quantities are quantized
to 1e-9 kW, and settlement is carried out in decimal arithmetic, so
per-customer payments always sum to the social welfare to the cent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal
from math import isfinite
from typing import Iterable, Mapping

from .envelopes import DoeMatrix, Envelope, require_complete, verify_limits
from .errors import DomainError, InputError, InternalError
from .lp import LinearProgram, LpSolution, LpStatus
from .network import ATOL, NetworkGraph, UnknownCustomer, downstream_set

# Cleared quantities are multiples of this many kW.
QUANTUM_KW = Decimal("1E-9")

ORDER_TYPES = ("buy", "sell")
ORDER_BOUNDS = ("lower", "upper")
ORDER_POWERS = ("active", "reactive")


class BookClosed(DomainError):
    """The trading session is closed; no submissions or clearings."""


class AlreadyClosed(DomainError):
    """Closing a book twice."""


class DuplicateOrderId(InputError):
    """An order id is already present in the book."""


class ReactiveNotSupported(InputError):
    """Only active-power products are tradeable."""


class NonPositiveDelta(InputError):
    """Orders must offer a strictly positive quantity."""


class ProductMismatch(InputError):
    """The order targets a different product time than the book."""


class InvalidOrder(InputError):
    """An order field is outside its domain."""


class UnknownOrderId(InputError):
    """Settlement references an order id absent from the book."""


class InsecureInputLimits(DomainError):
    """Clearing requires the pre-trade envelopes to be secure."""


def as_money(value: Decimal | int | float | str) -> Decimal:
    """Exact decimal from a numeric literal (floats via shortest repr)."""
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        return Decimal(repr(value))
    return Decimal(value)


@dataclass(frozen=True)
class Order:
    """One limit order on envelope capacity.

    ``delta_kw`` is the remaining (not yet cleared) quantity; the price
    applies per kW of cleared quantity, pay-as-bid.
    """

    id: int
    customer: str
    type: str
    bound: str
    delta_kw: float
    price_eur_per_kw: Decimal
    power: str = "active"
    product_time: str = "t0"

    def __post_init__(self) -> None:
        if not isinstance(self.id, int) or isinstance(self.id, bool):
            raise InvalidOrder(f"order id must be an integer, got {self.id!r}")
        if self.type not in ORDER_TYPES:
            raise InvalidOrder(f"order type must be one of {ORDER_TYPES}, got {self.type!r}")
        if self.bound not in ORDER_BOUNDS:
            raise InvalidOrder(f"order bound must be one of {ORDER_BOUNDS}, got {self.bound!r}")
        if self.power not in ORDER_POWERS:
            raise InvalidOrder(f"order power must be one of {ORDER_POWERS}, got {self.power!r}")
        if not isfinite(self.delta_kw):
            raise InvalidOrder(f"order {self.id} quantity must be finite")
        object.__setattr__(self, "price_eur_per_kw", as_money(self.price_eur_per_kw))
        if not self.price_eur_per_kw.is_finite():
            raise InvalidOrder(f"order {self.id} price must be finite")


@dataclass(frozen=True)
class OrderBook:
    """Orders resting for one product time; value-style (never mutated)."""

    product_time: str = "t0"
    orders: tuple[Order, ...] = ()
    open: bool = True

    def by_id(self) -> dict[int, Order]:
        return {order.id: order for order in self.orders}


def submit_order(book: OrderBook, order: Order) -> OrderBook:
    """Append an order; the book itself decides nothing else yet."""
    if not book.open:
        raise BookClosed(f"book for {book.product_time!r} is closed")
    if order.power == "reactive":
        raise ReactiveNotSupported("reactive-power products are not tradeable")
    if order.delta_kw <= 0:
        raise NonPositiveDelta(f"order {order.id} quantity must be positive, got {order.delta_kw}")
    if order.product_time != book.product_time:
        raise ProductMismatch(
            f"order {order.id} targets {order.product_time!r}, book is {book.product_time!r}"
        )
    if any(existing.id == order.id for existing in book.orders):
        raise DuplicateOrderId(f"order id {order.id} already in book")
    return replace(book, orders=book.orders + (order,))


def close_session(book: OrderBook) -> OrderBook:
    if not book.open:
        raise AlreadyClosed(f"book for {book.product_time!r} is already closed")
    return replace(book, open=False)


@dataclass(frozen=True)
class ClearingOutcome:
    """Everything one clearing produced.

    ``acceptances`` covers every order that was in the book (zero when
    nothing of it cleared); quantities are exact decimals in kW.
    """

    acceptances: dict[int, Decimal]
    updated_limits: dict[str, Envelope]
    updated_book: OrderBook
    payments: dict[str, Decimal]
    social_welfare: Decimal
    lp_text: tuple[str, ...] = field(default=(), compare=False)


def _signed_price(order: Order) -> float:
    price = float(order.price_eur_per_kw)
    return price if order.type == "buy" else -price


def _build_clearing_lp(graph: NetworkGraph, limits: DoeMatrix, orders: Iterable[Order]) -> LinearProgram:
    """Welfare LP: acceptance per order, post-trade bounds per customer."""
    lp = LinearProgram()
    customers = sorted(graph.customers)
    for c in customers:
        lp.add_variable(f"lo2::{c}")
        lp.add_variable(f"hi2::{c}")
    moves_lo: dict[str, dict[str, float]] = {c: {} for c in customers}
    moves_hi: dict[str, dict[str, float]] = {c: {} for c in customers}
    objective: dict[str, float] = {}
    for order in orders:
        if order.customer not in graph.customers:
            raise UnknownCustomer(f"order {order.id} references non-customer {order.customer!r}")
        var = f"a::{order.id}"
        lp.add_variable(var, 0.0, order.delta_kw)
        objective[var] = _signed_price(order)
        # Post-trade bound = old bound - buys + sells (lower) and
        # + buys - sells (upper); terms are moved onto the left side.
        sign = 1.0 if order.type == "buy" else -1.0
        if order.bound == "lower":
            moves_lo[order.customer][var] = sign
        else:
            moves_hi[order.customer][var] = -sign
    for c in customers:
        lo, hi = limits[c].lower_kw, limits[c].upper_kw
        lp.add_constraint({f"lo2::{c}": 1.0, **moves_lo[c]}, "=", lo, name=f"def-lo2[{c}]")
        lp.add_constraint({f"hi2::{c}": 1.0, **moves_hi[c]}, "=", hi, name=f"def-hi2[{c}]")
        lp.add_constraint({f"lo2::{c}": 1.0, f"hi2::{c}": -1.0}, "<=", 0.0, name=f"ordered[{c}]")
    for edge in graph.edges:
        below = sorted(downstream_set(graph, edge))
        if not below:
            continue
        limit = graph.line(edge).limit_kw
        tag = f"{edge[0]}-{edge[1]}"
        for prefix in ("lo2", "hi2"):
            coeffs = {f"{prefix}::{c}": 1.0 for c in below}
            lp.add_constraint(coeffs, "<=", limit, name=f"{prefix}[{tag}]<=lim")
            lp.add_constraint(coeffs, ">=", -limit, name=f"{prefix}[{tag}]>=-lim")
    lp.set_objective(objective)
    return lp


def _quantize(value: float, upper: Decimal) -> Decimal:
    """Snap an acceptance to its bounds, then to the kW quantum."""
    if abs(value) <= float(QUANTUM_KW):
        return Decimal(0).quantize(QUANTUM_KW)
    if abs(value - float(upper)) <= float(QUANTUM_KW):
        return upper.quantize(QUANTUM_KW)
    return Decimal(repr(value)).quantize(QUANTUM_KW)


def clear(
    graph: NetworkGraph,
    limits: DoeMatrix,
    book: OrderBook,
    keep_lp_text: bool = False,
) -> ClearingOutcome:
    """Clear the book against the current envelopes.

    Two solves: welfare first, then traded volume with welfare pinned at
    its optimum (an equality: relaxing it by any epsilon lets the volume
    objective trade that epsilon away and perturb the acceptances).
    """
    if not book.open:
        raise BookClosed(f"book for {book.product_time!r} is closed")
    require_complete(graph, limits)
    margin = verify_limits(graph, limits)
    if margin > ATOL:
        raise InsecureInputLimits(f"pre-trade envelopes overload a line by {margin:.9g} kW")

    if not book.orders:
        return ClearingOutcome(
            acceptances={},
            updated_limits=dict(limits),
            updated_book=book,
            payments={},
            social_welfare=Decimal("0"),
            lp_text=(),
        )

    lp = _build_clearing_lp(graph, limits, book.orders)
    welfare_solution = lp.solve()
    if welfare_solution.status is not LpStatus.OPTIMAL:
        raise InternalError(f"welfare program ended {welfare_solution.status}")
    lp_text = [lp.dump()] if keep_lp_text else []

    volume_lp = _build_clearing_lp(graph, limits, book.orders)
    volume_lp.add_constraint(
        {f"a::{o.id}": _signed_price(o) for o in book.orders},
        "=",
        welfare_solution.objective_value,
        name="welfare-pinned",
    )
    volume_lp.set_objective({f"a::{o.id}": 1.0 for o in book.orders})
    volume_solution = volume_lp.solve()
    if volume_solution.status is LpStatus.OPTIMAL:
        solution = volume_solution
        if keep_lp_text:
            lp_text.append(volume_lp.dump())
    else:
        # Float round-off made the pin unattainable; welfare answer stands.
        solution = welfare_solution

    acceptances: dict[int, Decimal] = {}
    for order in book.orders:
        raw = solution.values[f"a::{order.id}"]
        acceptances[order.id] = _quantize(raw, as_money(order.delta_kw))

    remaining: list[Order] = []
    for order in book.orders:
        left = as_money(order.delta_kw) - acceptances[order.id]
        if left > 0:
            remaining.append(replace(order, delta_kw=float(left)))
    updated_book = replace(book, orders=tuple(remaining))

    updated_limits: dict[str, Envelope] = {}
    shift_lo: dict[str, Decimal] = {c: Decimal(0) for c in graph.customers}
    shift_hi: dict[str, Decimal] = {c: Decimal(0) for c in graph.customers}
    for order in book.orders:
        qty = acceptances[order.id]
        signed = qty if order.type == "buy" else -qty
        if order.bound == "lower":
            shift_lo[order.customer] -= signed
        else:
            shift_hi[order.customer] += signed
    for c, env in limits.items():
        updated_limits[c] = Envelope(
            float(as_money(env.lower_kw) + shift_lo[c]),
            float(as_money(env.upper_kw) + shift_hi[c]),
        )

    payments, social_welfare = settle(acceptances, book.by_id())

    post_margin = verify_limits(graph, updated_limits)
    if post_margin > 1e-6:
        raise InternalError(f"post-trade envelopes overload a line by {post_margin:.3g} kW")

    return ClearingOutcome(
        acceptances=acceptances,
        updated_limits=updated_limits,
        updated_book=updated_book,
        payments=payments,
        social_welfare=social_welfare,
        lp_text=tuple(lp_text),
    )


def settle(
    acceptances: Mapping[int, Decimal | float | int],
    orders: Mapping[int, Order],
) -> tuple[dict[str, Decimal], Decimal]:
    """Pay-as-bid settlement in exact decimal arithmetic.

    Positive payment means the customer pays (buyer), negative means the
    customer is paid (seller).  The social welfare equals the sum of all
    payments exactly.
    """
    payments: dict[str, Decimal] = {}
    traded: set[str] = set()
    for order_id, quantity in acceptances.items():
        order = orders.get(order_id)
        if order is None:
            raise UnknownOrderId(f"no order with id {order_id}")
        qty = as_money(quantity)
        if qty < 0:
            raise InputError(f"cleared quantity for order {order_id} must be non-negative")
        value = qty * order.price_eur_per_kw
        signed = value if order.type == "buy" else -value
        payments[order.customer] = payments.get(order.customer, Decimal(0)) + signed
        if qty > 0:
            traded.add(order.customer)
    payments = {c: p for c, p in payments.items() if c in traded}
    social_welfare = sum(payments.values(), Decimal(0))
    return payments, social_welfare
