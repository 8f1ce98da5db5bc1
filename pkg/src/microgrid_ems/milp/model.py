"""Sparse MILP container shared by the builders and the solvers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SENSES = ("<=", ">=", "==")


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible-with-gap"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT = "time-limit"
    NUMERICAL = "numerical-failure"


class ModelError(ValueError):
    """Raised for malformed models (bad bounds, unknown variables, ...)."""


@dataclass
class Variable:
    index: int
    name: str
    lower: float
    upper: float
    is_binary: bool = False


@dataclass
class Row:
    name: str
    coeffs: dict[int, float]
    sense: str
    rhs: float


@dataclass
class MilpModel:
    """Minimisation model with finite variable bounds and linear rows.

    Variables are addressed by integer id; names only matter for export and
    diagnostics. ``obj_constant`` is carried along but never touches the
    solver.
    """

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    obj_constant: float = 0.0

    def add_var(self, name: str, lower: float = 0.0, upper: float = 1.0,
                binary: bool = False, obj: float = 0.0) -> int:
        if binary:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        if not (math.isfinite(lower) and math.isfinite(upper)):
            raise ModelError(f"variable {name!r} needs finite bounds")
        if lower > upper:
            raise ModelError(f"variable {name!r} has lower {lower} > upper {upper}")
        idx = len(self.variables)
        self.variables.append(Variable(idx, name, float(lower), float(upper), binary))
        if obj:
            self.objective[idx] = float(obj)
        return idx

    def add_row(self, coeffs, sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        merged: dict[int, float] = {}
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        for j, a in items:
            if not 0 <= j < len(self.variables):
                raise ModelError(f"row {name!r} references undeclared variable {j}")
            merged[j] = merged.get(j, 0.0) + float(a)
        merged = {j: a for j, a in merged.items() if a != 0.0}
        idx = len(self.rows)
        self.rows.append(Row(name or f"r{idx}", merged, sense, float(rhs)))
        return idx

    def add_obj(self, j: int, coef: float) -> None:
        self.objective[j] = self.objective.get(j, 0.0) + float(coef)
        if self.objective[j] == 0.0:
            del self.objective[j]

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def binaries(self) -> list[int]:
        return [v.index for v in self.variables if v.is_binary]

    def var_index(self, name: str) -> int:
        for v in self.variables:
            if v.name == name:
                return v.index
        raise KeyError(name)

    def copy(self) -> "MilpModel":
        return MilpModel(
            name=self.name,
            variables=[Variable(v.index, v.name, v.lower, v.upper, v.is_binary)
                       for v in self.variables],
            rows=[Row(r.name, dict(r.coeffs), r.sense, r.rhs) for r in self.rows],
            objective=dict(self.objective),
            obj_constant=self.obj_constant,
        )

    # -- array views used by the solvers -------------------------------------

    def arrays(self):
        """Return ``(c, A, row_lo, row_hi, lb, ub, is_bin)`` with ``A`` in CSC."""
        n, m = self.num_vars, self.num_rows
        c = np.zeros(n)
        for j, a in self.objective.items():
            c[j] = a
        rows, cols, vals = [], [], []
        row_lo = np.full(m, -np.inf)
        row_hi = np.full(m, np.inf)
        for i, r in enumerate(self.rows):
            for j, a in r.coeffs.items():
                rows.append(i)
                cols.append(j)
                vals.append(a)
            if r.sense in ("<=", "=="):
                row_hi[i] = r.rhs
            if r.sense in (">=", "=="):
                row_lo[i] = r.rhs
        A = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
        lb = np.array([v.lower for v in self.variables])
        ub = np.array([v.upper for v in self.variables])
        is_bin = np.array([v.is_binary for v in self.variables], dtype=bool)
        return c, A, row_lo, row_hi, lb, ub, is_bin

    def objective_value(self, x) -> float:
        return float(sum(a * x[j] for j, a in self.objective.items())) + self.obj_constant

    def violations(self, x, tol: float = 1e-6) -> list[str]:
        """Names of rows and bounds violated by ``x`` beyond a scaled tolerance."""
        out = []
        for v in self.variables:
            if x[v.index] < v.lower - tol or x[v.index] > v.upper + tol:
                out.append(f"bound:{v.name}")
            elif v.is_binary and abs(x[v.index] - round(x[v.index])) > 1e-6:
                out.append(f"integrality:{v.name}")
        for r in self.rows:
            act = sum(a * x[j] for j, a in r.coeffs.items())
            scale = tol * max(1.0, abs(r.rhs))
            if r.sense == "<=" and act > r.rhs + scale:
                out.append(r.name)
            elif r.sense == ">=" and act < r.rhs - scale:
                out.append(r.name)
            elif r.sense == "==" and abs(act - r.rhs) > scale:
                out.append(r.name)
        return out


@dataclass
class MilpSolution:
    status: Status
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int = 0
    iterations: int = 0
    wall_time: float = 0.0
    history: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.FEASIBLE)


def relative_gap(objective: float, bound: float) -> float:
    if not (math.isfinite(objective) and math.isfinite(bound)):
        return math.inf
    return max(0.0, (objective - bound) / max(1.0, abs(objective)))
