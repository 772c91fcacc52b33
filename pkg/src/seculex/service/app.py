"""HTTP service exposing allocation, clearing, verification, comparison,
and interactive trading sessions.

The stateless endpoints take a full scenario document as the request
body.  Trading sessions hold the evolving envelope matrix and order
book in memory: orders are submitted one at a time and cleared on
demand, mirroring a continuous market.  All domain errors map onto
status codes: bad input 400 (or 422 from schema validation), requests
that cannot be satisfied 409, broken invariants 500.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from decimal import Decimal

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse

from ..allocation import AllocationResult
from ..envelopes import DoeMatrix, Envelope, verify_limits, verify_limits_oracle
from ..errors import DomainError, InputError, InternalError
from ..market import ClearingOutcome, Order, OrderBook, clear, close_session, submit_order
from ..network import ATOL, NetworkGraph
from ..scenario import OrderModel, ScenarioModel, build_orders, product_time_of
from ..simulate import SchemeReport, compare, resolve_limits
from . import schemas

API_VERSION = "1.0"


def _clean(value: Decimal) -> Decimal:
    """Strip trailing zeros without switching to exponent notation."""
    return Decimal(format(value.normalize(), "f"))


def _limits_out(limits: DoeMatrix) -> dict[str, schemas.EnvelopeOut]:
    return {
        c: schemas.EnvelopeOut(lower_kw=limits[c].lower_kw, upper_kw=limits[c].upper_kw)
        for c in sorted(limits)
    }


def _order_model(order: Order) -> OrderModel:
    return OrderModel(
        id=order.id,
        customer=order.customer,
        type=order.type,
        bound=order.bound,
        power=order.power,
        delta_kw=order.delta_kw,
        price_eur_per_kw=order.price_eur_per_kw,
        product_time=order.product_time,
    )


def _allocate_response(result: AllocationResult, lp_text: list[str] | None) -> schemas.AllocateResponse:
    iterations = [
        schemas.IterationOut(width_kw=it.width_kw, fixed=_limits_out(it.fixed))
        for it in result.iterations
    ]
    return schemas.AllocateResponse(
        limits=_limits_out(result.doe), iterations=iterations, lp_text=lp_text
    )


def _clear_response(outcome: ClearingOutcome, with_lp: bool) -> schemas.ClearResponse:
    return schemas.ClearResponse(
        acceptances_kw={k: _clean(v) for k, v in sorted(outcome.acceptances.items())},
        updated_limits=_limits_out(outcome.updated_limits),
        remaining_orders=[_order_model(o) for o in outcome.updated_book.orders],
        payments_eur={c: _clean(p) for c, p in sorted(outcome.payments.items())},
        social_welfare_eur=_clean(outcome.social_welfare),
        lp_text=list(outcome.lp_text) if with_lp else None,
    )


def _report_out(report: SchemeReport) -> schemas.SchemeReportOut:
    return schemas.SchemeReportOut(
        scheme=report.scheme,
        variant=report.variant,
        security_violation=report.security_violation,
        total_curtailment_kw=report.total_curtailment_kw,
        pv_curtailment_kw=report.pv_curtailment_kw,
        renewable_utilization_pct=report.renewable_utilization_pct,
        opportunity_loss_eur=_clean(report.opportunity_loss_eur),
        market_social_welfare_eur=(
            _clean(report.market_social_welfare_eur)
            if report.market_social_welfare_eur is not None
            else None
        ),
        incentivizes_flexibility=report.incentivizes_flexibility,
        customers=[
            schemas.CustomerRowOut(
                node=o.node,
                expected_net_kw=o.expected_net_kw,
                scheduled_net_kw=o.scheduled_net_kw,
                delivered_net_kw=o.delivered_net_kw,
                curtailed_kw=o.curtailed_kw,
                pv_curtailed_kw=o.pv_curtailed_kw,
                opportunity_loss_eur=_clean(o.opportunity_loss_eur),
                payment_eur=_clean(o.payment_eur),
                envelope=o.envelope,
            )
            for o in report.customers
        ],
    )


@dataclass
class _Session:
    """One open trading session; guarded by its own lock."""

    session_id: str
    graph: NetworkGraph
    scenario: ScenarioModel
    limits: dict[str, Envelope]
    book: OrderBook
    lock: threading.Lock = field(default_factory=threading.Lock)

    def state(self) -> schemas.SessionState:
        return schemas.SessionState(
            session_id=self.session_id,
            open=self.book.open,
            product_time=self.book.product_time,
            limits=_limits_out(self.limits),
            orders=[_order_model(o) for o in self.book.orders],
        )


class SessionNotFound(InputError):
    pass


def create_app() -> FastAPI:
    app = FastAPI(title="seculex", version=API_VERSION)
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> _Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise SessionNotFound(f"no session {session_id!r}")
        return session

    @app.exception_handler(InputError)
    def input_error(_: Request, exc: InputError) -> JSONResponse:
        status = 404 if isinstance(exc, SessionNotFound) else 400
        body = schemas.ErrorBody(error=type(exc).__name__, message=str(exc))
        return JSONResponse(status_code=status, content=body.model_dump())

    @app.exception_handler(DomainError)
    def domain_error(_: Request, exc: DomainError) -> JSONResponse:
        body = schemas.ErrorBody(error=type(exc).__name__, message=str(exc))
        return JSONResponse(status_code=409, content=body.model_dump())

    @app.exception_handler(InternalError)
    def internal_error(_: Request, exc: InternalError) -> JSONResponse:
        body = schemas.ErrorBody(error=type(exc).__name__, message=str(exc))
        return JSONResponse(status_code=500, content=body.model_dump())

    @app.get("/")
    def index() -> dict:
        return {
            "service": "seculex",
            "version": API_VERSION,
            "endpoints": [
                "POST /allocate",
                "POST /clear",
                "POST /verify",
                "POST /compare",
                "POST /sessions",
                "GET /sessions/{id}",
                "POST /sessions/{id}/orders",
                "POST /sessions/{id}/clear",
                "POST /sessions/{id}/close",
            ],
        }

    @app.post("/allocate", response_model=schemas.AllocateResponse)
    def allocate(scenario: ScenarioModel, dump_lp: bool = Query(False)) -> schemas.AllocateResponse:
        from ..allocation import allocate_does
        from ..scenario import build_bounds, build_graph

        graph = build_graph(scenario)
        dumps: list[str] = []
        result = allocate_does(
            graph, build_bounds(scenario), lp_sink=dumps.append if dump_lp else None
        )
        return _allocate_response(result, dumps if dump_lp else None)

    @app.post("/clear", response_model=schemas.ClearResponse)
    def clear_book(scenario: ScenarioModel, dump_lp: bool = Query(False)) -> schemas.ClearResponse:
        from ..scenario import build_graph

        graph = build_graph(scenario)
        limits, _ = resolve_limits(graph, scenario)
        participants = {c.node for c in scenario.customers if c.participates_in_market}
        book = OrderBook(product_time=product_time_of(scenario))
        for order in build_orders(scenario):
            if order.customer not in participants:
                raise InputError(
                    f"order {order.id}: customer {order.customer!r} "
                    "does not participate in the market"
                )
            book = submit_order(book, order)
        outcome = clear(graph, limits, book, keep_lp_text=dump_lp)
        return _clear_response(outcome, dump_lp)

    @app.post("/verify", response_model=schemas.VerifyResponse)
    def verify(
        scenario: ScenarioModel,
        samples: int = Query(1000, ge=1),
        seed: int = Query(0),
    ) -> schemas.VerifyResponse:
        from ..scenario import build_graph

        graph = build_graph(scenario)
        limits, _ = resolve_limits(graph, scenario)
        margin = verify_limits(graph, limits)
        oracle = verify_limits_oracle(graph, limits, samples=samples, seed=seed)
        secure = margin <= ATOL
        return schemas.VerifyResponse(
            secure=secure,
            margin_kw=None if margin == float("-inf") else margin,
            oracle=schemas.OracleOut(
                secure=oracle.secure,
                margin_kw=None if oracle.margin_kw == float("-inf") else oracle.margin_kw,
                corners_enumerated=oracle.corners_enumerated,
                corner_count=oracle.corner_count,
                samples_checked=oracle.samples_checked,
            ),
            agreement=secure == oracle.secure,
        )

    @app.post("/compare", response_model=schemas.CompareResponse)
    def compare_schemes(scenario: ScenarioModel) -> schemas.CompareResponse:
        from ..scenario import build_graph

        graph = build_graph(scenario)
        reports = compare(graph, scenario)
        return schemas.CompareResponse(
            title=scenario.display.title if scenario.display else None,
            schemes=[_report_out(r) for r in reports],
        )

    @app.post("/sessions", response_model=schemas.SessionCreated, status_code=201)
    def open_session(scenario: ScenarioModel) -> schemas.SessionCreated:
        from ..scenario import build_graph

        graph = build_graph(scenario)
        limits, _ = resolve_limits(graph, scenario)
        margin = verify_limits(graph, limits)
        if margin > ATOL:
            raise DomainError(f"session would open with insecure envelopes ({margin:.9g} kW over)")
        session = _Session(
            session_id=uuid.uuid4().hex[:12],
            graph=graph,
            scenario=scenario,
            limits=dict(limits),
            book=OrderBook(product_time=product_time_of(scenario)),
        )
        with registry_lock:
            sessions[session.session_id] = session
        return schemas.SessionCreated(
            session_id=session.session_id,
            product_time=session.book.product_time,
            limits=_limits_out(session.limits),
        )

    @app.get("/sessions/{session_id}", response_model=schemas.SessionState)
    def session_state(session_id: str) -> schemas.SessionState:
        return get_session(session_id).state()

    @app.post("/sessions/{session_id}/orders", response_model=schemas.SessionState)
    def session_submit(session_id: str, order: OrderModel) -> schemas.SessionState:
        session = get_session(session_id)
        customer = next(
            (c for c in session.scenario.customers if c.node == order.customer), None
        )
        if customer is None:
            raise InputError(f"order {order.id} references unknown customer {order.customer!r}")
        if not customer.participates_in_market:
            raise InputError(
                f"customer {order.customer!r} does not participate in the market"
            )
        domain_order = Order(
            id=order.id,
            customer=order.customer,
            type=order.type,
            bound=order.bound,
            delta_kw=order.delta_kw,
            price_eur_per_kw=order.price_eur_per_kw,
            power=order.power,
            product_time=order.product_time,
        )
        with session.lock:
            session.book = submit_order(session.book, domain_order)
        return session.state()

    @app.post("/sessions/{session_id}/clear", response_model=schemas.ClearResponse)
    def session_clear(session_id: str, dump_lp: bool = Query(False)) -> schemas.ClearResponse:
        session = get_session(session_id)
        with session.lock:
            outcome = clear(session.graph, session.limits, session.book, keep_lp_text=dump_lp)
            session.limits = outcome.updated_limits
            session.book = outcome.updated_book
        return _clear_response(outcome, dump_lp)

    @app.post("/sessions/{session_id}/close", response_model=schemas.SessionState)
    def session_close(session_id: str) -> schemas.SessionState:
        session = get_session(session_id)
        with session.lock:
            session.book = close_session(session.book)
        return session.state()

    return app


app = create_app()
