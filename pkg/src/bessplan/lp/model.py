"""Problem and solution containers for the linear-programming core.

A :class:`LinearProgram` is always a minimization over box-bounded variables
with two-sided row bounds.  Row duals follow the shadow-price convention
``dual = d(objective)/d(rhs)``: positive when a row's lower bound is active,
negative when its upper bound is active, unrestricted for equality rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

INF = float("inf")


class LpStructureError(ValueError):
    """Malformed problem data: dimension mismatches, bad bounds, bad indices."""


class SolverFailureError(RuntimeError):
    """Numerical stall or iteration/node limit; distinct from infeasibility."""


class RowKind(Enum):
    EQ = "eq"
    LE = "le"
    GE = "ge"
    RANGE = "range"


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


# Variable-status codes shared by the solver and sensitivity analysis.
BASIC = 0
AT_LOWER = 1
AT_UPPER = 2
FREE_NONBASIC = 3


@dataclass(frozen=True)
class LinearProgram:
    """Minimize ``objective @ x`` subject to row and variable bounds.

    Rows are stored sparsely as parallel (column-index, coefficient) arrays.
    ``row_lower``/``row_upper`` hold the canonical two-sided form of every
    row; the original kind is kept for reporting and the debug dump.
    """

    objective: np.ndarray
    rows: list[tuple[np.ndarray, np.ndarray]]
    row_kinds: list[RowKind]
    row_lower: np.ndarray
    row_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    var_names: list[str] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)

    @property
    def num_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def dense_matrix(self) -> np.ndarray:
        a = np.zeros((self.num_rows, self.num_vars))
        for i, (cols, vals) in enumerate(self.rows):
            a[i, cols] = vals
        return a

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LinearProgram":
        """Copy of this problem with replaced variable bounds (rows shared)."""
        return LinearProgram(
            objective=self.objective,
            rows=self.rows,
            row_kinds=self.row_kinds,
            row_lower=self.row_lower,
            row_upper=self.row_upper,
            lower=np.asarray(lower, dtype=float),
            upper=np.asarray(upper, dtype=float),
            var_names=self.var_names,
            row_names=self.row_names,
        )

    def validate(self) -> None:
        n, m = self.num_vars, self.num_rows
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise LpStructureError(
                f"variable bounds have shape {self.lower.shape}/{self.upper.shape}, "
                f"expected ({n},)"
            )
        if len(self.row_kinds) != m or self.row_lower.shape != (m,) or self.row_upper.shape != (m,):
            raise LpStructureError("row kind/bound arrays do not match the row count")
        if np.any(np.isnan(self.objective)) or np.any(np.isnan(self.lower)) or np.any(
            np.isnan(self.upper)
        ):
            raise LpStructureError("NaN in objective or variable bounds")
        bad = np.flatnonzero(self.lower > self.upper)
        if bad.size:
            raise LpStructureError(f"lower bound exceeds upper bound for variable {bad[0]}")
        for i, (cols, vals) in enumerate(self.rows):
            if cols.shape != vals.shape:
                raise LpStructureError(f"row {i}: index/value arrays differ in length")
            if cols.size and (cols.min() < 0 or cols.max() >= n):
                raise LpStructureError(f"row {i}: column index out of range")
        bad_rows = np.flatnonzero(self.row_lower > self.row_upper)
        if bad_rows.size:
            raise LpStructureError(f"row {bad_rows[0]}: lower bound exceeds upper bound")
        for i, kind in enumerate(self.row_kinds):
            lo, up = self.row_lower[i], self.row_upper[i]
            if kind is RowKind.EQ and not (np.isfinite(lo) and lo == up):
                raise LpStructureError(f"row {i}: equality row needs a single finite rhs")
            if kind is RowKind.LE and not np.isfinite(up):
                raise LpStructureError(f"row {i}: <= row needs a finite upper bound")
            if kind is RowKind.GE and not np.isfinite(lo):
                raise LpStructureError(f"row {i}: >= row needs a finite lower bound")
            if kind is RowKind.RANGE and not (np.isfinite(lo) and np.isfinite(up)):
                raise LpStructureError(f"row {i}: range row needs two finite bounds")

    @staticmethod
    def from_dense(
        objective,
        matrix,
        row_kinds,
        row_lower,
        row_upper,
        lower,
        upper,
    ) -> "LinearProgram":
        """Convenience constructor for tests and small hand-written problems."""
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        rows = []
        for i in range(a.shape[0]):
            cols = np.flatnonzero(a[i] != 0.0)
            rows.append((cols, a[i, cols].copy()))
        return LinearProgram(
            objective=np.asarray(objective, dtype=float),
            rows=rows,
            row_kinds=list(row_kinds),
            row_lower=np.asarray(row_lower, dtype=float),
            row_upper=np.asarray(row_upper, dtype=float),
            lower=np.asarray(lower, dtype=float),
            upper=np.asarray(upper, dtype=float),
        )


class LpBuilder:
    """Incremental construction of a :class:`LinearProgram`."""

    def __init__(self) -> None:
        self._costs: list[float] = []
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._var_names: list[str] = []
        self._rows: list[dict[int, float]] = []
        self._kinds: list[RowKind] = []
        self._row_lower: list[float] = []
        self._row_upper: list[float] = []
        self._row_names: list[str] = []

    @property
    def num_vars(self) -> int:
        return len(self._costs)

    @property
    def num_rows(self) -> int:
        return len(self._rows)

    def add_var(self, cost: float, lower: float, upper: float, name: str = "") -> int:
        self._costs.append(float(cost))
        self._lower.append(float(lower))
        self._upper.append(float(upper))
        self._var_names.append(name or f"x{len(self._costs) - 1}")
        return len(self._costs) - 1

    def _add_row(self, kind, lo, up, coeffs, name) -> int:
        self._rows.append(dict(coeffs))
        self._kinds.append(kind)
        self._row_lower.append(float(lo))
        self._row_upper.append(float(up))
        self._row_names.append(name or f"r{len(self._rows) - 1}")
        return len(self._rows) - 1

    def add_eq(self, rhs: float, coeffs: dict[int, float], name: str = "") -> int:
        return self._add_row(RowKind.EQ, rhs, rhs, coeffs, name)

    def add_le(self, rhs: float, coeffs: dict[int, float], name: str = "") -> int:
        return self._add_row(RowKind.LE, -INF, rhs, coeffs, name)

    def add_ge(self, rhs: float, coeffs: dict[int, float], name: str = "") -> int:
        return self._add_row(RowKind.GE, rhs, INF, coeffs, name)

    def add_range(self, lo: float, up: float, coeffs: dict[int, float], name: str = "") -> int:
        return self._add_row(RowKind.RANGE, lo, up, coeffs, name)

    def build(self) -> LinearProgram:
        rows = []
        for coeffs in self._rows:
            cols = np.fromiter(coeffs.keys(), dtype=int, count=len(coeffs))
            vals = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
            order = np.argsort(cols)
            rows.append((cols[order], vals[order]))
        lp = LinearProgram(
            objective=np.array(self._costs, dtype=float),
            rows=rows,
            row_kinds=list(self._kinds),
            row_lower=np.array(self._row_lower, dtype=float),
            row_upper=np.array(self._row_upper, dtype=float),
            lower=np.array(self._lower, dtype=float),
            upper=np.array(self._upper, dtype=float),
            var_names=list(self._var_names),
            row_names=list(self._row_names),
        )
        lp.validate()
        return lp


@dataclass
class BasisInfo:
    """Internal basis state retained for sensitivity analysis.

    ``state`` covers the n structural plus m logical (row-slack) columns;
    ``basis`` holds extended column indices, ``basis_inverse`` the explicit
    inverse of the final basis matrix.
    """

    basis: np.ndarray
    state: np.ndarray
    basis_inverse: np.ndarray
    ext_lower: np.ndarray
    ext_upper: np.ndarray
    num_vars: int
    num_rows: int


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray
    objective_value: float
    row_duals: np.ndarray
    reduced_costs: np.ndarray
    row_activity: np.ndarray
    iterations: int = 0
    basis_info: BasisInfo | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass(frozen=True)
class MilpProblem:
    base: LinearProgram
    binary_vars: tuple[int, ...]

    def validate(self) -> None:
        self.base.validate()
        n = self.base.num_vars
        for j in self.binary_vars:
            if not 0 <= j < n:
                raise LpStructureError(f"binary index {j} out of range")
            if self.base.lower[j] < -1e-9 or self.base.upper[j] > 1.0 + 1e-9:
                raise LpStructureError(f"binary variable {j} has bounds outside [0, 1]")


@dataclass
class MilpSolution(LpSolution):
    nodes_explored: int = 0
    proven_optimal: bool = True
    relaxation_objective: float = float("nan")


@dataclass(frozen=True)
class SensitivityRange:
    """Objective-coefficient interval over which the current primal stays optimal."""

    var_index: int
    coeff_low: float
    coeff_high: float
    conservative: bool = False
