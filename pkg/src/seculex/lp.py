"""Small dense linear-program solver (maximization, two-phase simplex).

The programs built in this package are desk-scale (tens of variables),
so a plain dense tableau with Bland's anti-cycling rule is enough and,
crucially, deterministic: the same program yields bit-identical
solutions on every run.  General variable bounds are handled by
shifting each variable to a non-negative one:

* lower bound finite:       ``x = lower + y`` (upper bound becomes a row),
* only upper bound finite:  ``x = upper - y``,
* free:                     ``x = y_pos - y_neg``.

Reduced costs are recomputed from the tableau every iteration instead
of being carried incrementally; at this scale the extra work is
negligible and it avoids drift.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from math import inf, isfinite, isnan
from typing import Mapping

import numpy as np

from .errors import InputError, InternalError

# Entries smaller than this are unusable as pivots.
PIVOT_TOL = 1e-10
# Feasibility (phase-1 residual) and optimality (reduced-cost) tolerance.
FEAS_TOL = 1e-9


class MalformedProgram(InputError):
    """The program references unknown variables or non-finite data."""


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


RELATIONS = ("<=", "=", ">=")


@dataclass(frozen=True)
class _Constraint:
    name: str
    coeffs: dict[str, float]
    relation: str
    rhs: float


@dataclass(frozen=True)
class LpSolution:
    """Solver outcome; ``values`` is populated only when optimal."""

    status: LpStatus
    values: dict[str, float]
    objective_value: float | None


class LinearProgram:
    """A maximization LP assembled variable by variable, row by row."""

    def __init__(self) -> None:
        self._bounds: dict[str, tuple[float, float]] = {}
        self._objective: dict[str, float] = {}
        self._constraints: list[_Constraint] = []

    # -- construction -------------------------------------------------

    def add_variable(self, name: str, lower: float = -inf, upper: float = inf) -> None:
        if not name:
            raise MalformedProgram("variable name must be non-empty")
        if name in self._bounds:
            raise MalformedProgram(f"duplicate variable {name!r}")
        if isnan(lower) or isnan(upper):
            raise MalformedProgram(f"bounds for {name!r} must not be NaN")
        self._bounds[name] = (lower, upper)

    def set_objective(self, coeffs: Mapping[str, float]) -> None:
        self._check_coeffs(coeffs, "objective")
        self._objective = dict(coeffs)

    def add_constraint(
        self,
        coeffs: Mapping[str, float],
        relation: str,
        rhs: float,
        name: str | None = None,
    ) -> None:
        if relation not in RELATIONS:
            raise MalformedProgram(f"relation must be one of {RELATIONS}, got {relation!r}")
        label = name if name is not None else f"r{len(self._constraints) + 1}"
        self._check_coeffs(coeffs, f"constraint {label!r}")
        if not isfinite(rhs):
            raise MalformedProgram(f"constraint {label!r} has non-finite rhs {rhs}")
        self._constraints.append(_Constraint(label, dict(coeffs), relation, rhs))

    def _check_coeffs(self, coeffs: Mapping[str, float], where: str) -> None:
        for var, coef in coeffs.items():
            if var not in self._bounds:
                raise MalformedProgram(f"{where} references unknown variable {var!r}")
            if not isfinite(coef):
                raise MalformedProgram(f"{where} has non-finite coefficient for {var!r}")

    # -- inspection ---------------------------------------------------

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(self._bounds)

    def residuals(self, values: Mapping[str, float]) -> dict[str, float]:
        """Constraint violations at a point: positive means violated."""
        out: dict[str, float] = {}
        for con in self._constraints:
            lhs = sum(coef * values[var] for var, coef in con.coeffs.items())
            if con.relation == "<=":
                out[con.name] = lhs - con.rhs
            elif con.relation == ">=":
                out[con.name] = con.rhs - lhs
            else:
                out[con.name] = abs(lhs - con.rhs)
        for var, (lo, hi) in self._bounds.items():
            v = values[var]
            if lo > -inf:
                out[f"{var}>=lb"] = lo - v
            if hi < inf:
                out[f"{var}<=ub"] = v - hi
        return out

    def dump(self) -> str:
        """Human-readable program listing."""

        def fnum(v: float) -> str:
            return format(v, ".12g")

        def terms(coeffs: Mapping[str, float]) -> str:
            if not coeffs:
                return "0"
            return " + ".join(f"{fnum(c)} {v}" for v, c in coeffs.items())

        lines = [f"maximize: {terms(self._objective)}", "subject to:"]
        for con in self._constraints:
            lines.append(f"  {con.name}: {terms(con.coeffs)} {con.relation} {fnum(con.rhs)}")
        lines.append("bounds:")
        for var, (lo, hi) in self._bounds.items():
            if lo == -inf and hi == inf:
                lines.append(f"  {var} free")
            elif lo == -inf:
                lines.append(f"  {var} <= {fnum(hi)}")
            elif hi == inf:
                lines.append(f"  {var} >= {fnum(lo)}")
            else:
                lines.append(f"  {fnum(lo)} <= {var} <= {fnum(hi)}")
        return "\n".join(lines) + "\n"

    # -- solving ------------------------------------------------------

    def solve(self) -> LpSolution:
        for var, (lo, hi) in self._bounds.items():
            if lo > hi:
                return LpSolution(LpStatus.INFEASIBLE, {}, None)
        tableau = _Tableau.build(self)
        return tableau.solve()


class _Tableau:
    """Standard-form data for the two-phase simplex."""

    def __init__(
        self,
        program: LinearProgram,
        columns: list[tuple[str, int]],
        shifts: dict[str, float],
        signs: dict[str, float],
        rows: list[tuple[np.ndarray, str, float]],
        n_structural: int,
    ) -> None:
        self.program = program
        self.columns = columns  # (variable, part) with part +1 / -1 for free split
        self.shifts = shifts
        self.signs = signs
        self.rows = rows
        self.n_structural = n_structural

    @classmethod
    def build(cls, program: LinearProgram) -> "_Tableau":
        columns: list[tuple[str, int]] = []
        shifts: dict[str, float] = {}
        signs: dict[str, float] = {}
        col_of: dict[str, int] = {}
        bound_rows: list[tuple[str, float]] = []  # (variable, upper - lower)
        for var, (lo, hi) in program._bounds.items():
            if lo > -inf:
                shifts[var], signs[var] = lo, 1.0
                col_of[var] = len(columns)
                columns.append((var, 1))
                if hi < inf:
                    bound_rows.append((var, hi - lo))
            elif hi < inf:
                shifts[var], signs[var] = hi, -1.0
                col_of[var] = len(columns)
                columns.append((var, 1))
            else:
                shifts[var], signs[var] = 0.0, 1.0
                col_of[var] = len(columns)
                columns.append((var, 1))
                columns.append((var, -1))
        n_structural = len(columns)

        rows: list[tuple[np.ndarray, str, float]] = []
        for con in program._constraints:
            coeffs = np.zeros(n_structural)
            rhs = con.rhs
            for var, coef in con.coeffs.items():
                rhs -= coef * shifts[var]
                j = col_of[var]
                coeffs[j] += coef * signs[var]
                if columns[j + 1 : j + 2] == [(var, -1)]:
                    coeffs[j + 1] -= coef * signs[var]
            rows.append((coeffs, con.relation, rhs))
        for var, width in bound_rows:
            coeffs = np.zeros(n_structural)
            coeffs[col_of[var]] = 1.0
            rows.append((coeffs, "<=", width))

        return cls(program, columns, shifts, signs, rows, n_structural)

    def solve(self) -> LpSolution:
        m = len(self.rows)
        n = self.n_structural

        # Normalize rhs >= 0, then attach slack/surplus and artificials.
        slack_cols: list[tuple[int, float]] = []  # (row, sign)
        artificial_rows: list[int] = []
        norm_rows: list[tuple[np.ndarray, float]] = []
        for i, (coeffs, relation, rhs) in enumerate(self.rows):
            if rhs < 0:
                coeffs, rhs = -coeffs, -rhs
                relation = {"<=": ">=", ">=": "<=", "=": "="}[relation]
            if relation == "<=":
                slack_cols.append((i, 1.0))
            elif relation == ">=":
                slack_cols.append((i, -1.0))
                artificial_rows.append(i)
            else:
                artificial_rows.append(i)
            norm_rows.append((coeffs, rhs))

        n_slack = len(slack_cols)
        n_art = len(artificial_rows)
        total = n + n_slack + n_art
        T = np.zeros((m, total + 1))
        for i, (coeffs, rhs) in enumerate(norm_rows):
            T[i, :n] = coeffs
            T[i, -1] = rhs
        basis = np.empty(m, dtype=int)
        art_of_row: dict[int, int] = {}
        for k, (i, sign) in enumerate(slack_cols):
            T[i, n + k] = sign
            if sign > 0:
                basis[i] = n + k
        for k, i in enumerate(artificial_rows):
            col = n + n_slack + k
            T[i, col] = 1.0
            basis[i] = col
            art_of_row[i] = col

        # Phase 1: drive artificials to zero.
        if n_art:
            c1 = np.zeros(total)
            c1[n + n_slack :] = -1.0
            status = _iterate(T, basis, c1)
            if status is not LpStatus.OPTIMAL:
                raise InternalError("phase-1 program cannot be unbounded")
            art_total = sum(T[i, -1] for i in range(m) if basis[i] >= n + n_slack)
            if art_total > FEAS_TOL:
                return LpSolution(LpStatus.INFEASIBLE, {}, None)
            T, basis, m = _evict_artificials(T, basis, n + n_slack)
            T = np.delete(T, np.s_[n + n_slack : total], axis=1)
            total = n + n_slack

        # Phase 2: original objective over structural columns.
        c2 = np.zeros(total)
        for var, coef in self.program._objective.items():
            j = next(k for k, (v, part) in enumerate(self.columns) if v == var and part == 1)
            c2[j] += coef * self.signs[var]
            if (var, -1) in self.columns[j + 1 : j + 2]:
                c2[j + 1] -= coef * self.signs[var]
        status = _iterate(T, basis, c2)
        if status is LpStatus.UNBOUNDED:
            return LpSolution(LpStatus.UNBOUNDED, {}, None)

        y = np.zeros(total)
        y[basis] = T[:, -1]
        values: dict[str, float] = {}
        for j, (var, part) in enumerate(self.columns):
            if part == 1:
                values[var] = float(self.shifts[var] + self.signs[var] * y[j])
            else:
                values[var] = float(values[var] - y[j])
        objective = float(
            sum(coef * values[var] for var, coef in self.program._objective.items())
        )
        return LpSolution(LpStatus.OPTIMAL, values, objective)


def _iterate(T: np.ndarray, basis: np.ndarray, cost: np.ndarray) -> LpStatus:
    """Run primal simplex pivots in place until optimal or unbounded.

    Bland's rule throughout (smallest eligible entering index, ties on
    the leaving row broken by smallest basis index), which guarantees
    termination on degenerate programs.
    """
    m = T.shape[0]
    max_iter = 10_000 + 200 * T.shape[1]
    for _ in range(max_iter):
        reduced = cost - cost[basis] @ T[:, :-1]
        reduced[basis] = 0.0
        candidates = np.nonzero(reduced > FEAS_TOL)[0]
        if candidates.size == 0:
            return LpStatus.OPTIMAL
        j = int(candidates[0])
        col = T[:, j]
        eligible = np.nonzero(col > PIVOT_TOL)[0]
        if eligible.size == 0:
            return LpStatus.UNBOUNDED
        ratios = T[eligible, -1] / col[eligible]
        best = ratios.min()
        ties = eligible[ratios <= best + 1e-12]
        r = int(ties[np.argmin(basis[ties])])
        _pivot(T, r, j)
        basis[r] = j
    raise InternalError("simplex iteration limit exceeded")


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])


def _evict_artificials(
    T: np.ndarray, basis: np.ndarray, first_artificial: int
) -> tuple[np.ndarray, np.ndarray, int]:
    """Pivot zero-valued basic artificials out; drop rows that went redundant."""
    keep = np.ones(T.shape[0], dtype=bool)
    for i in range(T.shape[0]):
        if basis[i] < first_artificial:
            continue
        pivots = np.nonzero(np.abs(T[i, :first_artificial]) > PIVOT_TOL)[0]
        if pivots.size:
            j = int(pivots[0])
            _pivot(T, i, j)
            basis[i] = j
        else:
            keep[i] = False
    T = T[keep]
    basis = basis[keep]
    return T, basis, T.shape[0]
