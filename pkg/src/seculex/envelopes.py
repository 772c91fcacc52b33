"""Operating envelopes and their security verification.

An envelope is a per-customer band ``[lower_kw, upper_kw]`` of allowed
net power.  A matrix of envelopes is *secure* when every profile drawn
from the bands keeps every line within its rating.  Because line flows
are monotone in each customer's net power on a radial network, the two
extreme profiles (everyone at the lower bound, everyone at the upper
bound) are the worst cases, so :func:`verify_limits` checks only those.
:func:`verify_limits_oracle` ignores that shortcut and brute-forces
corners and random interior profiles against an independently computed
flow, which is what the test-suite uses to corroborate the shortcut.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import isfinite
from typing import Mapping

import numpy as np

from .errors import InputError
from .network import ATOL, NetworkGraph, PowerProfile, UnknownCustomer, check_profile_security

# Enumerating 2^n corner profiles stays cheap up to this many customers.
MAX_CORNER_CUSTOMERS = 10


class InvalidEnvelope(InputError):
    """Envelope bounds are non-finite or inverted."""


class IncompleteMatrix(InputError):
    """A required customer has no envelope."""


@dataclass(frozen=True)
class Envelope:
    """Allowed net-power band in kW; negative values permit injection."""

    lower_kw: float
    upper_kw: float

    def __post_init__(self) -> None:
        if not (isfinite(self.lower_kw) and isfinite(self.upper_kw)):
            raise InvalidEnvelope(f"envelope bounds must be finite, got {self}")
        # Tolerate solver round-off on degenerate (zero-width) envelopes.
        if self.lower_kw > self.upper_kw + ATOL:
            raise InvalidEnvelope(f"lower bound exceeds upper bound: {self}")

    @property
    def width_kw(self) -> float:
        return self.upper_kw - self.lower_kw


DoeMatrix = Mapping[str, Envelope]


def require_complete(graph: NetworkGraph, limits: DoeMatrix) -> None:
    """Every graph customer needs an envelope; extra keys are rejected."""
    extra = set(limits) - graph.customers
    if extra:
        raise UnknownCustomer(f"envelopes for non-customers: {sorted(extra)}")
    missing = graph.customers - set(limits)
    if missing:
        raise IncompleteMatrix(f"customers without an envelope: {sorted(missing)}")


def corner_profiles(limits: DoeMatrix) -> tuple[dict[str, float], dict[str, float]]:
    """The all-lower and all-upper extreme profiles."""
    lower = {c: env.lower_kw for c, env in limits.items()}
    upper = {c: env.upper_kw for c, env in limits.items()}
    return lower, upper


def verify_limits(graph: NetworkGraph, limits: DoeMatrix) -> float:
    """Worst security margin over the two extreme profiles, in kW.

    A non-positive value (up to :data:`ATOL`) certifies that *every*
    profile inside the envelopes is secure; a positive value is the
    size of the worst overload.
    """
    require_complete(graph, limits)
    lower, upper = corner_profiles(limits)
    m_lower = check_profile_security(graph, lower).margin_kw
    m_upper = check_profile_security(graph, upper).margin_kw
    return max(m_lower, m_upper)


@dataclass(frozen=True)
class OracleReport:
    """Brute-force verification summary.

    ``margin_kw`` is the worst ``|flow| - limit`` seen across all checked
    profiles; ``worst_profile`` is a profile attaining it.  When there are
    more than :data:`MAX_CORNER_CUSTOMERS` customers the corner sweep is
    skipped and ``corners_enumerated`` records that.
    """

    secure: bool
    margin_kw: float
    corners_enumerated: bool
    corner_count: int
    samples_checked: int
    worst_profile: dict[str, float] | None


def verify_limits_oracle(
    graph: NetworkGraph,
    limits: DoeMatrix,
    samples: int = 1000,
    seed: int = 0,
) -> OracleReport:
    """Check envelope security by exhaustive corners plus random profiles.

    All ``2^n`` envelope corners are enumerated up to
    :data:`MAX_CORNER_CUSTOMERS` customers; beyond that the two extreme
    corners are checked and half the sample budget goes to random
    corners.  Deliberately avoids :func:`verify_limits`'s two-corner
    shortcut and the graph's cached downstream sets: flows are
    recomputed from a locally built edge/customer incidence.
    """
    require_complete(graph, limits)
    if samples < 0:
        raise InputError(f"samples must be non-negative, got {samples}")

    customers = sorted(limits)
    lower = np.array([limits[c].lower_kw for c in customers])
    upper = np.array([limits[c].upper_kw for c in customers])

    # Independent incidence: walk the tree from scratch for every edge.
    children: dict[str, list[str]] = {n: [] for n in graph.nodes}
    for ln in graph.lines:
        children[ln.from_node].append(ln.to_node)
    col = {c: i for i, c in enumerate(customers)}
    incidence = np.zeros((len(graph.lines), len(customers)))
    ratings = np.zeros(len(graph.lines))
    for row, ln in enumerate(graph.lines):
        ratings[row] = ln.limit_kw
        stack = [ln.to_node]
        while stack:
            node = stack.pop()
            if node in col:
                incidence[row, col[node]] = 1.0
            stack.extend(children[node])

    def margin_of(batch: np.ndarray) -> tuple[float, np.ndarray | None]:
        # batch: customers x profiles; returns worst margin and its profile.
        if len(graph.lines) == 0 or batch.shape[1] == 0:
            return float("-inf"), None
        margins = np.abs(incidence @ batch) - ratings[:, None]
        worst_per_profile = margins.max(axis=0) if len(graph.lines) else np.zeros(batch.shape[1])
        idx = int(worst_per_profile.argmax())
        return float(worst_per_profile[idx]), batch[:, idx]

    corners_enumerated = len(customers) <= MAX_CORNER_CUSTOMERS
    corner_count = 0
    worst = float("-inf")
    worst_vector: np.ndarray | None = None
    if not customers:
        # Only the empty profile exists; flows are zero everywhere.
        corner_count = 1
        if len(graph.lines):
            worst = float(-ratings.min())
    elif corners_enumerated:
        choices = np.array(list(itertools.product(*zip(lower, upper)))).T
        corner_count = choices.shape[1]
        worst, worst_vector = margin_of(choices)
    else:
        # Too many customers for 2^n corners: keep the two extremes and
        # let the sampling below draw random corners.
        choices = np.stack([lower, upper], axis=1)
        corner_count = 2
        worst, worst_vector = margin_of(choices)

    if samples and customers:
        rng = np.random.default_rng(seed)
        batches = []
        if not corners_enumerated:
            # Random corners are far likelier to expose an overload than
            # interior points, so spend half the budget on them.
            picks = rng.integers(0, 2, size=(len(customers), samples // 2))
            batches.append(np.where(picks == 0, lower[:, None], upper[:, None]))
        remaining = samples - (batches[0].shape[1] if batches else 0)
        if remaining:
            batches.append(
                rng.uniform(lower[:, None], upper[:, None], size=(len(customers), remaining))
            )
        sample_worst, sample_vector = margin_of(np.concatenate(batches, axis=1))
        if sample_worst > worst:
            worst, worst_vector = sample_worst, sample_vector

    worst_profile = (
        {c: float(worst_vector[i]) for i, c in enumerate(customers)}
        if worst_vector is not None
        else None
    )
    return OracleReport(
        secure=worst <= ATOL,
        margin_kw=worst,
        corners_enumerated=corners_enumerated,
        corner_count=corner_count,
        samples_checked=samples if customers else 0,
        worst_profile=worst_profile,
    )


def clamp_to_envelope(
    limits: DoeMatrix, profile: PowerProfile
) -> tuple[dict[str, float], dict[str, float]]:
    """Project a profile into the envelopes.

    Returns the clamped profile and the per-customer curtailed amount
    ``|requested - delivered|`` (zero when already inside the band).
    """
    clamped: dict[str, float] = {}
    curtailed: dict[str, float] = {}
    for customer, power in profile.items():
        if customer not in limits:
            raise IncompleteMatrix(f"no envelope for {customer!r}")
        if not isfinite(power):
            raise InputError(f"profile power for {customer!r} must be finite, got {power}")
        env = limits[customer]
        value = min(max(power, env.lower_kw), env.upper_kw)
        clamped[customer] = value
        curtailed[customer] = abs(power - value)
    return clamped, curtailed
