"""Command-line client.

Every subcommand parses a scenario file, sends it to the service layer
(in-process by default, or a remote instance via --server), and renders
the response as an aligned table, RFC-4180 CSV, or JSON.

Exit codes: 0 success; 1 verified-insecure but checker and oracle agree;
2 usage or parse error; 3 domain infeasibility; 4 broken internal
invariant (including checker/oracle disagreement).
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import io
import json
import os
import sys
from decimal import Decimal
from typing import Any, Sequence

import httpx

from .errors import InputError
from .scenario import ScenarioModel, dump_scenario, parse_scenario_text

EXIT_OK = 0
EXIT_INSECURE = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_INTERNAL = 4

_STATUS_EXIT = {400: EXIT_USAGE, 404: EXIT_USAGE, 422: EXIT_USAGE, 409: EXIT_DOMAIN, 500: EXIT_INTERNAL}

_SCHEME_TITLES = {"no_control": "No Control", "anm": "ANM", "static": "Static envelopes", "seculex": "SecuLEx"}


class _Fail(Exception):
    """Abort the command with a message on stderr and an exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- rendering

def _color_enabled(stream: Any) -> bool:
    if os.environ.get("SECULEX_COLOR") == "0":
        return False
    if os.environ.get("TERM") == "dumb":
        return False
    return bool(getattr(stream, "isatty", lambda: False)())


class _Style:
    def __init__(self, enabled: bool):
        self.enabled = enabled

    def _wrap(self, code: str, text: str) -> str:
        return f"\x1b[{code}m{text}\x1b[0m" if self.enabled else text

    def bold(self, text: str) -> str:
        return self._wrap("1", text)

    def green(self, text: str) -> str:
        return self._wrap("32", text)

    def red(self, text: str) -> str:
        return self._wrap("31", text)


def _fnum(value: float | int) -> str:
    """Shortest faithful rendering; integral floats print as integers."""
    x = float(value)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _money(value: Decimal | str) -> str:
    """At least two decimals, more only when the amount needs them."""
    d = Decimal(value)
    cents = d.quantize(Decimal("0.01")) if -(10**24) < d < 10**24 else d
    return str(cents) if cents == d else str(d)


def _render_table(headers: Sequence[str], rows: Sequence[Sequence[str]], align: str, style: _Style) -> str:
    """Align columns ('l'/'r' per column) with a two-space gutter."""
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def fmt(cells: Sequence[str], decorate: bool = False) -> str:
        parts = []
        for i, cell in enumerate(cells):
            pad = widths[i] - len(cell)
            text = cell + " " * pad if align[i] == "l" else " " * pad + cell
            parts.append(style.bold(text) if decorate else text)
        return "  ".join(parts).rstrip()

    lines = [fmt(headers, decorate=True)]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def _csv_text(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()


def _emit_json(body: Any) -> None:
    sys.stdout.write(json.dumps(body, indent=2, ensure_ascii=False) + "\n")


def _emit_lp_dumps(dumps: Sequence[str] | None) -> None:
    for i, text in enumerate(dumps or [], start=1):
        sys.stderr.write(f"--- LP {i} ---\n{text}\n")


# ---------------------------------------------------------------- transport

def _request(server: str | None, method: str, path: str, payload: Any, params: dict | None) -> httpx.Response:
    async def go() -> httpx.Response:
        if server is not None:
            async with httpx.AsyncClient(base_url=server, timeout=120.0) as client:
                return await client.request(method, path, json=payload, params=params)
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://seculex") as client:
            return await client.request(method, path, json=payload, params=params)

    try:
        return asyncio.run(go())
    except httpx.HTTPError as exc:
        raise _Fail(EXIT_USAGE, f"request failed: {exc}") from exc


def _expect_ok(response: httpx.Response) -> dict:
    if response.status_code in (200, 201):
        return response.json()
    try:
        body = response.json()
        message = f"{body.get('error', 'error')}: {body.get('message', '')}".strip()
    except ValueError:
        message = response.text.strip() or f"HTTP {response.status_code}"
    raise _Fail(_STATUS_EXIT.get(response.status_code, EXIT_INTERNAL), message)


def _load_scenario(args: argparse.Namespace) -> tuple[ScenarioModel, dict]:
    try:
        with open(args.scenario, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _Fail(EXIT_USAGE, f"cannot read {args.scenario}: {exc.strerror or exc}") from exc
    try:
        model, warnings = parse_scenario_text(text, lenient=args.lenient)
    except InputError as exc:
        raise _Fail(EXIT_USAGE, f"{args.scenario}: {exc}") from exc
    for note in warnings:
        sys.stderr.write(f"seculex: warning: {note}\n")
    return model, json.loads(dump_scenario(model))


# ---------------------------------------------------------------- commands

def _cmd_allocate(args: argparse.Namespace, style: _Style) -> int:
    model, payload = _load_scenario(args)
    params = {"dump_lp": "true"} if args.dump_lp else None
    body = _expect_ok(_request(args.server, "POST", "/allocate", payload, params))
    _emit_lp_dumps(body.get("lp_text"))

    limits = body["limits"]
    rows = [
        [c, _fnum(env["lower_kw"]), _fnum(env["upper_kw"]), _fnum(env["upper_kw"] - env["lower_kw"])]
        for c, env in limits.items()
    ]
    if args.format == "json":
        body.pop("lp_text", None)
        _emit_json(body)
    elif args.format == "csv":
        sys.stdout.write(_csv_text(["customer", "lower_kw", "upper_kw", "width_kw"], rows))
    else:
        if model.display and model.display.title:
            print(style.bold(model.display.title))
        print(_render_table(["Customer", "Lower [kW]", "Upper [kW]", "Width [kW]"], rows, "lrrr", style))
        for i, it in enumerate(body["iterations"], start=1):
            fixed = ", ".join(it["fixed"]) or "-"
            print(f"iteration {i}: w* = {_fnum(it['width_kw'])} kW, fixed: {fixed}")
    return EXIT_OK


def _order_rows(model: ScenarioModel, body: dict) -> list[list[str]]:
    accepted = {int(k): Decimal(v) for k, v in body["acceptances_kw"].items()}
    remaining = {o["id"]: o["delta_kw"] for o in body["remaining_orders"]}
    rows = []
    for order in sorted(model.orders, key=lambda o: o.id):
        qty = accepted.get(order.id, Decimal(0))
        price = Decimal(str(order.price_eur_per_kw))
        payment = (price if order.type == "buy" else -price) * qty
        rows.append(
            [
                str(order.id),
                order.customer,
                f"{order.type} {order.bound}",
                _fnum(order.delta_kw),
                str(qty),
                _fnum(remaining.get(order.id, 0.0)),
                str(price),
                _money(payment),
            ]
        )
    return rows


def _cmd_clear(args: argparse.Namespace, style: _Style) -> int:
    model, payload = _load_scenario(args)
    params = {"dump_lp": "true"} if args.dump_lp else None
    body = _expect_ok(_request(args.server, "POST", "/clear", payload, params))
    _emit_lp_dumps(body.get("lp_text"))

    headers = ["Order", "Customer", "Side", "Offered [kW]", "Accepted [kW]", "Left [kW]", "Price [EUR/kW]", "Payment [EUR]"]
    rows = _order_rows(model, body)
    if args.format == "json":
        body.pop("lp_text", None)
        _emit_json(body)
    elif args.format == "csv":
        csv_headers = ["order_id", "customer", "side", "offered_kw", "accepted_kw", "remaining_kw", "price_eur_per_kw", "payment_eur"]
        sys.stdout.write(_csv_text(csv_headers, rows))
    else:
        if model.display and model.display.title:
            print(style.bold(model.display.title))
        print(_render_table(headers, rows, "lllrrrrr", style))
        print()
        limit_rows = [
            [c, _fnum(env["lower_kw"]), _fnum(env["upper_kw"])] for c, env in body["updated_limits"].items()
        ]
        print(_render_table(["Customer", "Lower [kW]", "Upper [kW]"], limit_rows, "lrr", style))
        print()
        for customer, amount in body["payments_eur"].items():
            print(f"payment {customer}: {_money(amount)} EUR")
        print(f"social welfare: {_money(body['social_welfare_eur'])} EUR")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace, style: _Style) -> int:
    _, payload = _load_scenario(args)
    params = {"samples": str(args.samples), "seed": str(args.seed)}
    body = _expect_ok(_request(args.server, "POST", "/verify", payload, params))

    oracle = body["oracle"]
    agreement = body["agreement"]
    secure = body["secure"]

    if args.format == "json":
        _emit_json(body)
    elif args.format == "csv":
        headers = [
            "secure", "margin_kw", "oracle_secure", "oracle_margin_kw",
            "corners_enumerated", "corner_count", "samples_checked", "agreement",
        ]
        row = [
            str(secure).lower(),
            "" if body["margin_kw"] is None else _fnum(body["margin_kw"]),
            str(oracle["secure"]).lower(),
            "" if oracle["margin_kw"] is None else _fnum(oracle["margin_kw"]),
            str(oracle["corners_enumerated"]).lower(),
            str(oracle["corner_count"]),
            str(oracle["samples_checked"]),
            str(agreement).lower(),
        ]
        sys.stdout.write(_csv_text(headers, [row]))
    else:
        def verdict(ok: bool) -> str:
            return style.green("secure") if ok else style.red("INSECURE")

        margin = "-inf" if body["margin_kw"] is None else _fnum(body["margin_kw"])
        omargin = "-inf" if oracle["margin_kw"] is None else _fnum(oracle["margin_kw"])
        corners = f"{oracle['corner_count']} corners" + ("" if oracle["corners_enumerated"] else " (sampled only)")
        print(f"two-corner check: margin {margin} kW -> {verdict(secure)}")
        print(f"oracle:           margin {omargin} kW -> {verdict(oracle['secure'])} ({corners}, {oracle['samples_checked']} samples, seed {args.seed})")
        if agreement:
            print("agreement: yes")
        else:
            print(style.red("agreement: NO - two-corner check and oracle disagree"))

    if not agreement:
        return EXIT_INTERNAL
    return EXIT_OK if secure else EXIT_INSECURE


def _merge_static(values: list[str]) -> str:
    unique = list(dict.fromkeys(values))
    return unique[0] if len(unique) == 1 else " or ".join(unique)


def _compare_cells(schemes: list[dict]) -> tuple[list[str], list[list[str]]]:
    """Rows of display values per scheme, in scheme order (static twice)."""

    def yes_no(flag: bool) -> str:
        return "Yes" if flag else "No"

    metric_rows = [
        ("Curtailment [kW]", lambda s: _fnum(s["total_curtailment_kw"])),
        ("Renewable utilization [%]", lambda s: str(round(s["renewable_utilization_pct"]))),
        ("Security violation", lambda s: yes_no(s["security_violation"])),
        ("Incentivizes flexibility", lambda s: s["incentivizes_flexibility"].capitalize()),
        ("Opportunity loss [EUR]", lambda s: _money(s["opportunity_loss_eur"])),
        (
            "Market social welfare [EUR]",
            lambda s: "/" if s["market_social_welfare_eur"] is None else _money(s["market_social_welfare_eur"]),
        ),
    ]
    names = [metric for metric, _ in metric_rows]
    cells = [[cell(s) for s in schemes] for _, cell in metric_rows]
    return names, cells


def _cmd_compare(args: argparse.Namespace, style: _Style) -> int:
    model, payload = _load_scenario(args)
    body = _expect_ok(_request(args.server, "POST", "/compare", payload, None))
    schemes = body["schemes"]

    if args.format == "json":
        _emit_json(body)
        return EXIT_OK

    names, cells = _compare_cells(schemes)
    if args.format == "csv":
        headers = ["metric"] + [
            s["scheme"] + (f"_{s['variant']}" if s.get("variant") else "") for s in schemes
        ]
        rows = [[name] + row for name, row in zip(names, cells)]
        sys.stdout.write(_csv_text(headers, rows))
        return EXIT_OK

    # Merge the static-envelope variants into one "a or b" column.
    static_idx = [i for i, s in enumerate(schemes) if s["scheme"] == "static"]
    headers = ["Metric"]
    for i, s in enumerate(schemes):
        if i in static_idx[1:]:
            continue
        headers.append(_SCHEME_TITLES.get(s["scheme"], s["scheme"]))
    rows = []
    for name, row in zip(names, cells):
        merged = [name]
        for i in range(len(schemes)):
            if i in static_idx[1:]:
                continue
            if i in static_idx[:1]:
                merged.append(_merge_static([row[j] for j in static_idx]))
            else:
                merged.append(row[i])
        rows.append(merged)

    if model.display and model.display.title:
        print(style.bold(model.display.title))
    print(_render_table(headers, rows, "l" + "r" * (len(headers) - 1), style))
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace, _: _Style) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seculex",
        description="Secure operating envelopes with a limit-exchange market.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="path to a scenario JSON file")
    common.add_argument("--format", choices=("table", "csv", "json"), default="table")
    common.add_argument("--lenient", action="store_true", help="warn on unknown scenario fields instead of failing")
    common.add_argument("--server", metavar="URL", default=None, help="use a running service instead of in-process")

    p = sub.add_parser("allocate", parents=[common], help="compute fair operating envelopes")
    p.add_argument("--dump-lp", action="store_true", help="print each LP in text form to stderr")
    p.set_defaults(fn=_cmd_allocate)

    p = sub.add_parser("clear", parents=[common], help="clear the scenario's order book")
    p.add_argument("--dump-lp", action="store_true", help="print the clearing LP to stderr")
    p.set_defaults(fn=_cmd_clear)

    p = sub.add_parser("verify", parents=[common], help="check envelope security against the sampling oracle")
    p.add_argument("--samples", type=_positive_int, default=1000, metavar="N")
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("compare", parents=[common], help="compare management schemes on one scenario")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    style = _Style(_color_enabled(sys.stdout))
    try:
        return args.fn(args, style)
    except _Fail as fail:
        sys.stderr.write(f"seculex: {fail}\n")
        return fail.code
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
