"""Wire schemas for the HTTP service.

Requests reuse the scenario-file models; these are the response bodies.
Money travels as exact decimals (JSON strings), envelope bounds and
powers as floats.
"""

from __future__ import annotations

from decimal import Decimal

from pydantic import BaseModel

from ..scenario import OrderModel


class EnvelopeOut(BaseModel):
    lower_kw: float
    upper_kw: float


class IterationOut(BaseModel):
    width_kw: float
    fixed: dict[str, EnvelopeOut]


class AllocateResponse(BaseModel):
    limits: dict[str, EnvelopeOut]
    iterations: list[IterationOut]
    lp_text: list[str] | None = None


class ClearResponse(BaseModel):
    acceptances_kw: dict[int, Decimal]
    updated_limits: dict[str, EnvelopeOut]
    remaining_orders: list[OrderModel]
    payments_eur: dict[str, Decimal]
    social_welfare_eur: Decimal
    lp_text: list[str] | None = None


class OracleOut(BaseModel):
    secure: bool
    margin_kw: float | None
    corners_enumerated: bool
    corner_count: int
    samples_checked: int


class VerifyResponse(BaseModel):
    secure: bool
    margin_kw: float | None
    oracle: OracleOut
    agreement: bool


class CustomerRowOut(BaseModel):
    node: str
    expected_net_kw: float
    scheduled_net_kw: float
    delivered_net_kw: float
    curtailed_kw: float
    pv_curtailed_kw: float
    opportunity_loss_eur: Decimal
    payment_eur: Decimal
    envelope: tuple[float, float] | None


class SchemeReportOut(BaseModel):
    scheme: str
    variant: str | None
    security_violation: bool
    total_curtailment_kw: float
    pv_curtailment_kw: float
    renewable_utilization_pct: float
    opportunity_loss_eur: Decimal
    market_social_welfare_eur: Decimal | None
    incentivizes_flexibility: str
    customers: list[CustomerRowOut]


class CompareResponse(BaseModel):
    title: str | None
    schemes: list[SchemeReportOut]


class SessionCreated(BaseModel):
    session_id: str
    product_time: str
    limits: dict[str, EnvelopeOut]


class SessionState(BaseModel):
    session_id: str
    open: bool
    product_time: str
    limits: dict[str, EnvelopeOut]
    orders: list[OrderModel]


class ErrorBody(BaseModel):
    error: str
    message: str
