"""Scenario file format: one JSON document describing a study case.

A scenario bundles the network, the customers (tariffs, PV, battery,
allocation bands), an optional explicit envelope matrix, and an order
script for the market session.  Field names carry their units.  Parsing
is strict by default (unknown fields are errors); lenient parsing drops
unknown fields and reports them, for files written against newer
revisions of the format.

Sign conventions: net power is positive when withdrawing; battery power
is positive when discharging, so ``expected_net = withdrawal - pv -
battery_planned`` and the implied withdrawal must be non-negative.
"""

from __future__ import annotations

import json
import types
from decimal import Decimal
from typing import Any, Literal, Union, get_args, get_origin

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .allocation import AllocationBounds
from .envelopes import Envelope
from .errors import InputError
from .market import Order
from .network import Line, NetworkGraph, validate_radial

# Tolerance for the withdrawal-consistency check, in kW.
NET_TOL = 1e-9


class ScenarioError(InputError):
    """The scenario document does not match the format."""


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class LineModel(_Model):
    from_node: str = Field(alias="from")
    to_node: str = Field(alias="to")
    limit_kw: float = Field(gt=0)
    resistance_ohm: float = Field(default=0.0, ge=0)
    reactance_ohm: float = Field(default=0.0, ge=0)


class NetworkModel(_Model):
    nodes: list[str] = Field(min_length=1)
    lines: list[LineModel]
    root: str
    voltage_bounds: tuple[float, float] | None = None


class BatteryModel(_Model):
    max_charge_kw: float = Field(ge=0)
    max_discharge_kw: float = Field(ge=0)
    planned_kw: float
    reschedule_allowed: bool = True
    # Scripted setpoint the customer switches to once the market session
    # ends; only meaningful for customers that traded envelope capacity.
    market_plan_kw: float | None = None

    @model_validator(mode="after")
    def _plans_within_ratings(self) -> "BatteryModel":
        for label, value in (("planned_kw", self.planned_kw), ("market_plan_kw", self.market_plan_kw)):
            if value is None:
                continue
            if not (-self.max_charge_kw <= value <= self.max_discharge_kw):
                raise ValueError(
                    f"{label} {value} outside [-max_charge, max_discharge] "
                    f"[{-self.max_charge_kw}, {self.max_discharge_kw}]"
                )
        return self


class BoundsModel(_Model):
    contract_lower_kw: float
    guaranteed_lower_kw: float
    guaranteed_upper_kw: float
    contract_upper_kw: float

    @model_validator(mode="after")
    def _nested(self) -> "BoundsModel":
        if not (
            self.contract_lower_kw
            <= self.guaranteed_lower_kw
            <= self.guaranteed_upper_kw
            <= self.contract_upper_kw
        ):
            raise ValueError("bands must nest: contract <= guaranteed <= guaranteed <= contract")
        return self


class CustomerModel(_Model):
    node: str
    expected_net_kw: float
    price_withdraw_eur_per_kwh: Decimal = Field(ge=0)
    price_inject_eur_per_kwh: Decimal = Field(ge=0)
    pv_kw: float = Field(default=0.0, ge=0)
    battery: BatteryModel | None = None
    # only needed when envelopes come from allocation rather than an
    # explicit limits section
    bounds: BoundsModel | None = None
    participates_in_market: bool = True

    @model_validator(mode="after")
    def _withdrawal_nonnegative(self) -> "CustomerModel":
        planned = self.battery.planned_kw if self.battery else 0.0
        withdrawal = self.expected_net_kw + self.pv_kw + planned
        if withdrawal < -NET_TOL:
            raise ValueError(
                f"expected_net_kw implies a withdrawal of {withdrawal} kW; "
                "injection cannot exceed pv plus battery discharge"
            )
        return self


class OrderModel(_Model):
    id: int
    customer: str
    type: Literal["buy", "sell"]
    bound: Literal["lower", "upper"]
    power: Literal["active", "reactive"] = "active"
    delta_kw: float = Field(gt=0)
    price_eur_per_kw: Decimal
    product_time: str


class DisplayModel(_Model):
    title: str | None = None


class ScenarioModel(_Model):
    network: NetworkModel
    customers: list[CustomerModel]
    orders: list[OrderModel] = Field(default_factory=list)
    limits: dict[str, tuple[float, float]] | None = None
    period_hours: float = Field(default=1.0, gt=0)
    display: DisplayModel | None = None

    @model_validator(mode="after")
    def _cross_checks(self) -> "ScenarioModel":
        node_set = set(self.network.nodes)
        customer_nodes = [c.node for c in self.customers]
        dup = {n for n in customer_nodes if customer_nodes.count(n) > 1}
        if dup:
            raise ValueError(f"duplicate customer nodes: {sorted(dup)}")
        unknown = set(customer_nodes) - node_set
        if unknown:
            raise ValueError(f"customer nodes missing from network: {sorted(unknown)}")
        ids = [o.id for o in self.orders]
        if len(set(ids)) != len(ids):
            raise ValueError("order ids must be unique")
        if len({o.product_time for o in self.orders}) > 1:
            raise ValueError("all orders must target the same product time")
        known = set(customer_nodes)
        for o in self.orders:
            if o.customer not in known:
                raise ValueError(f"order {o.id} references unknown customer {o.customer!r}")
        if self.limits is not None:
            stray = set(self.limits) - known
            if stray:
                raise ValueError(f"limits for unknown customers: {sorted(stray)}")
            for c, (lo, hi) in self.limits.items():
                if lo > hi:
                    raise ValueError(f"limits for {c!r} are inverted: [{lo}, {hi}]")
        return self

    def customer(self, node: str) -> CustomerModel:
        for c in self.customers:
            if c.node == node:
                return c
        raise ScenarioError(f"no customer at node {node!r}")


def _prune_unknown(model_cls: type[BaseModel], data: Any, path: str, dropped: list[str]) -> Any:
    """Recursively drop keys that no field of ``model_cls`` accepts."""
    if not isinstance(data, dict):
        return data
    by_key: dict[str, Any] = {}
    for name, field_info in model_cls.model_fields.items():
        by_key[field_info.alias or name] = field_info.annotation
        by_key[name] = field_info.annotation
    out = {}
    for key, value in data.items():
        if key not in by_key:
            dropped.append(f"{path}{key}")
            continue
        annotation = by_key[key]
        origin = get_origin(annotation)
        args = get_args(annotation)
        if origin is Union or origin is types.UnionType:
            models = [a for a in args if isinstance(a, type) and issubclass(a, BaseModel)]
            if models:
                annotation, origin, args = models[0], None, ()
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            value = _prune_unknown(annotation, value, f"{path}{key}.", dropped)
        elif origin is list and args and isinstance(args[0], type) and issubclass(args[0], BaseModel):
            if isinstance(value, list):
                value = [
                    _prune_unknown(args[0], item, f"{path}{key}[{i}].", dropped)
                    for i, item in enumerate(value)
                ]
        out[key] = value
    return out


def _format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "scenario does not match the format:\n  " + "\n  ".join(lines)


def parse_scenario(data: Any, lenient: bool = False) -> tuple[ScenarioModel, list[str]]:
    """Validate a scenario document and return it with any warnings.

    ``data`` is the already-decoded JSON value.  In lenient mode unknown
    fields are dropped and reported instead of rejected.
    """
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario must be a JSON object, got {type(data).__name__}")
    dropped: list[str] = []
    if lenient:
        data = _prune_unknown(ScenarioModel, data, "", dropped)
    try:
        scenario = ScenarioModel.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_format_validation_error(exc)) from exc
    warnings = [f"ignored unknown field {name!r}" for name in dropped]
    return scenario, warnings


def parse_scenario_text(text: str, lenient: bool = False) -> tuple[ScenarioModel, list[str]]:
    """Parse scenario JSON text; decoding errors keep line/column info."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(data, lenient=lenient)


def dump_scenario(scenario: ScenarioModel) -> str:
    """Serialize back to JSON (round-trips through :func:`parse_scenario`)."""
    return json.dumps(scenario.model_dump(mode="json", by_alias=True, exclude_none=True), indent=2)


# -- conversion to domain objects --------------------------------------


def build_graph(scenario: ScenarioModel) -> NetworkGraph:
    net = scenario.network
    lines = [
        Line(l.from_node, l.to_node, l.limit_kw, l.resistance_ohm, l.reactance_ohm)
        for l in net.lines
    ]
    return validate_radial(
        net.nodes,
        lines,
        net.root,
        [c.node for c in scenario.customers],
        voltage_bounds=net.voltage_bounds,
    )


def build_bounds(scenario: ScenarioModel) -> dict[str, AllocationBounds]:
    missing = [c.node for c in scenario.customers if c.bounds is None]
    if missing:
        raise ScenarioError(
            f"customers {missing} have no allocation bounds; "
            "provide bounds or an explicit limits section"
        )
    return {
        c.node: AllocationBounds(
            contract_lower_kw=c.bounds.contract_lower_kw,
            guaranteed_lower_kw=c.bounds.guaranteed_lower_kw,
            guaranteed_upper_kw=c.bounds.guaranteed_upper_kw,
            contract_upper_kw=c.bounds.contract_upper_kw,
        )
        for c in scenario.customers
    }


def build_orders(scenario: ScenarioModel) -> list[Order]:
    return [
        Order(
            id=o.id,
            customer=o.customer,
            type=o.type,
            bound=o.bound,
            delta_kw=o.delta_kw,
            price_eur_per_kw=o.price_eur_per_kw,
            power=o.power,
            product_time=o.product_time,
        )
        for o in scenario.orders
    ]


def product_time_of(scenario: ScenarioModel) -> str:
    return scenario.orders[0].product_time if scenario.orders else "t0"


def explicit_limits(scenario: ScenarioModel) -> dict[str, Envelope] | None:
    if scenario.limits is None:
        return None
    return {c: Envelope(lo, hi) for c, (lo, hi) in scenario.limits.items()}


def expected_profile(scenario: ScenarioModel) -> dict[str, float]:
    return {c.node: c.expected_net_kw for c in scenario.customers}
