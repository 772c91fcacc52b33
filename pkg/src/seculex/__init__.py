"""seculex: secure operating envelopes with a limit-exchange market.

The package computes fair dynamic operating envelopes for customers on
a radial distribution network, lets customers trade envelope capacity
on a continuous pay-as-bid market cleared against network security
constraints, and compares the outcome against simpler curtailment
schemes.
"""

from .allocation import AllocationBounds, AllocationResult, allocate_does
from .envelopes import Envelope, clamp_to_envelope, verify_limits, verify_limits_oracle
from .errors import DomainError, InputError, InternalError, SeculexError
from .market import ClearingOutcome, Order, OrderBook, clear, close_session, settle, submit_order
from .network import NetworkGraph, check_profile_security, dc_power_flow, validate_radial
from .scenario import ScenarioModel, parse_scenario, parse_scenario_text
from .simulate import SchemeReport, compare

__version__ = "0.1.0"

__all__ = [
    "AllocationBounds",
    "AllocationResult",
    "ClearingOutcome",
    "DomainError",
    "Envelope",
    "InputError",
    "InternalError",
    "NetworkGraph",
    "Order",
    "OrderBook",
    "ScenarioModel",
    "SchemeReport",
    "SeculexError",
    "allocate_does",
    "check_profile_security",
    "clamp_to_envelope",
    "clear",
    "close_session",
    "compare",
    "dc_power_flow",
    "parse_scenario",
    "parse_scenario_text",
    "settle",
    "submit_order",
    "validate_radial",
    "verify_limits",
    "verify_limits_oracle",
    "__version__",
]
