"""Two-phase revised simplex for box-bounded variables and two-sided rows.

Rows ``lo <= a_i @ x <= up`` are rewritten as ``a_i @ x - s_i = 0`` with a
logical variable ``s_i`` bounded by the row bounds, so the working system is
``[A | -I] z = 0`` and every bound lives on a column.  Phase 1 introduces one
artificial column per row whose initial logical value had to be clamped into
its range; phase 2 keeps those columns fixed at zero.  The basis inverse is
held explicitly and updated by product-form pivots with periodic
refactorization.  Dantzig pricing switches to Bland's rule after a stall to
guarantee termination.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .model import (
    AT_LOWER,
    AT_UPPER,
    BASIC,
    FREE_NONBASIC,
    BasisInfo,
    INF,
    LinearProgram,
    LpSolution,
    LpStatus,
    SolverFailureError,
)


@dataclass
class SolverOptions:
    """Numerical tolerances and limits, shared across the LP/MILP layers."""

    feas_tol: float = 1e-7
    comp_tol: float = 1e-6
    gap_tol: float = 1e-6
    int_tol: float = 1e-6
    pivot_tol: float = 1e-9
    dual_tol: float = 1e-9
    ratio_tol: float = 1e-9
    stall_limit: int = 60
    refactor_every: int = 50
    max_iters: int | None = None
    node_limit: int = 50_000
    check: bool = False


_PHASE1 = 1
_PHASE2 = 2


class _Simplex:
    """Bounded-variable revised simplex over the extended column system."""

    def __init__(self, matrix: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                 opts: SolverOptions) -> None:
        # matrix is m x k over all extended columns (structural, logical, artificial)
        self.mat = matrix
        self.lower = lower
        self.upper = upper
        self.opts = opts
        self.m, self.k = matrix.shape
        self.state = np.empty(self.k, dtype=np.int8)
        self.value = np.zeros(self.k)
        self.basis = np.zeros(self.m, dtype=int)
        self.binv = np.eye(self.m)
        self.iterations = 0
        self._since_refactor = 0

    # ------------------------------------------------------------------ setup

    def start_from(self, basis: np.ndarray, state: np.ndarray, value: np.ndarray) -> None:
        self.basis = basis.copy()
        self.state = state.copy()
        self.value = value.copy()
        self.refactor()

    def refactor(self) -> None:
        b = self.mat[:, self.basis]
        try:
            self.binv = np.linalg.inv(b)
        except np.linalg.LinAlgError as exc:
            raise SolverFailureError("singular basis during refactorization") from exc
        self._since_refactor = 0
        self.recompute_basic_values()

    def recompute_basic_values(self) -> None:
        nb_value = self.value.copy()
        nb_value[self.basis] = 0.0
        rhs = -(self.mat @ nb_value)
        self.value[self.basis] = self.binv @ rhs

    # ------------------------------------------------------------------ core

    def duals(self, cost: np.ndarray) -> np.ndarray:
        return self.binv.T @ cost[self.basis]

    def reduced_costs(self, cost: np.ndarray, y: np.ndarray) -> np.ndarray:
        return cost - self.mat.T @ y

    def objective(self, cost: np.ndarray) -> float:
        return float(cost @ self.value)

    def run(self, cost: np.ndarray, phase: int) -> LpStatus:
        """Iterate to optimality for the given cost; returns OPTIMAL or UNBOUNDED."""
        opts = self.opts
        max_iters = opts.max_iters or max(200, 25 * (self.m + self.k))
        bland = False
        stall = 0
        best_obj = self.objective(cost)
        fixed = self.upper - self.lower <= 0.0

        for _ in range(max_iters):
            if self._since_refactor >= opts.refactor_every:
                self.refactor()
            y = self.duals(cost)
            d = self.reduced_costs(cost, y)

            nonbasic = self.state != BASIC
            eligible = nonbasic & ~fixed & (
                ((self.state == AT_LOWER) & (d < -opts.dual_tol))
                | ((self.state == AT_UPPER) & (d > opts.dual_tol))
                | ((self.state == FREE_NONBASIC) & (np.abs(d) > opts.dual_tol))
            )
            candidates = np.flatnonzero(eligible)
            if candidates.size == 0:
                return LpStatus.OPTIMAL

            if bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(d[candidates]))])
            # direction of travel for the entering variable
            step_sign = 1.0 if d[q] < 0.0 else -1.0

            w = self.binv @ self.mat[:, q]
            tw = step_sign * w

            # ratio test over basic variables, then the entering variable's own span
            basic_vals = self.value[self.basis]
            basic_lo = self.lower[self.basis]
            basic_up = self.upper[self.basis]
            dec = tw > opts.pivot_tol
            inc = tw < -opts.pivot_tol
            with np.errstate(invalid="ignore", divide="ignore"):
                lo_room = np.where(dec & np.isfinite(basic_lo),
                                   (basic_vals - basic_lo) / tw, INF)
                up_room = np.where(inc & np.isfinite(basic_up),
                                   (basic_vals - basic_up) / tw, INF)
            limits = np.minimum(lo_room, up_room)
            limits = np.maximum(limits, 0.0)  # clamp tiny negative drift
            theta_block = float(limits.min()) if self.m else INF

            span = self.upper[q] - self.lower[q]
            if span < theta_block:
                # bound flip: the entering variable crosses to its other bound
                self.value[self.basis] -= span * tw
                self.value[q] = self.upper[q] if self.state[q] == AT_LOWER else self.lower[q]
                self.state[q] = AT_UPPER if self.state[q] == AT_LOWER else AT_LOWER
                self.iterations += 1
            elif not np.isfinite(theta_block):
                if phase == _PHASE1:
                    raise SolverFailureError("unbounded auxiliary problem")
                return LpStatus.UNBOUNDED
            else:
                near = np.flatnonzero(limits <= theta_block + opts.ratio_tol)
                if bland:
                    r = int(near[np.argmin(self.basis[near])])
                else:
                    r = int(near[np.argmax(np.abs(tw[near]))])
                theta = max(theta_block, 0.0)
                leaving = self.basis[r]

                self.value[self.basis] -= theta * tw
                entering_from = self.value[q]
                self.value[q] = entering_from + step_sign * theta
                # the leaving variable lands on whichever bound blocked
                if tw[r] > 0.0:
                    self.value[leaving] = self.lower[leaving]
                    self.state[leaving] = AT_LOWER
                else:
                    self.value[leaving] = self.upper[leaving]
                    self.state[leaving] = AT_UPPER
                self.state[q] = BASIC
                self.basis[r] = q

                # product-form update of the explicit inverse
                pivot = w[r]
                if abs(pivot) < opts.pivot_tol:
                    self.refactor()
                else:
                    self.binv[r, :] /= pivot
                    col = w.copy()
                    col[r] = 0.0
                    self.binv -= np.outer(col, self.binv[r, :])
                    self._since_refactor += 1
                self.iterations += 1

            obj = self.objective(cost)
            if obj < best_obj - 1e-10 * (1.0 + abs(best_obj)):
                best_obj = obj
                stall = 0
                bland = False
            else:
                stall += 1
                if stall >= opts.stall_limit:
                    bland = True
        raise SolverFailureError(f"simplex iteration limit reached ({max_iters})")

    def pivot_out_artificials(self, art_start: int) -> None:
        """Degenerate pivots replacing basic artificial columns where possible."""
        real = np.arange(art_start)
        for r in range(self.m):
            if self.basis[r] < art_start:
                continue
            row = self.binv[r, :] @ self.mat[:, real]
            row[self.state[real] == BASIC] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) <= 1e-7:
                continue  # dependent row; the artificial stays basic at zero
            leaving = self.basis[r]
            self.value[leaving] = 0.0
            self.state[leaving] = AT_LOWER
            self.state[j] = BASIC
            self.basis[r] = j
            self.refactor()


def _bounds_only_solution(lp: LinearProgram, opts: SolverOptions) -> LpSolution:
    # no rows: each variable independently sits at whichever bound its cost favors
    n = lp.num_vars
    x = np.zeros(n)
    state = np.empty(n, dtype=np.int8)
    for j in range(n):
        c = lp.objective[j]
        if c > opts.dual_tol:
            if not np.isfinite(lp.lower[j]):
                return _non_optimal(lp, LpStatus.UNBOUNDED)
            x[j], state[j] = lp.lower[j], AT_LOWER
        elif c < -opts.dual_tol:
            if not np.isfinite(lp.upper[j]):
                return _non_optimal(lp, LpStatus.UNBOUNDED)
            x[j], state[j] = lp.upper[j], AT_UPPER
        elif np.isfinite(lp.lower[j]):
            x[j], state[j] = lp.lower[j], AT_LOWER
        elif np.isfinite(lp.upper[j]):
            x[j], state[j] = lp.upper[j], AT_UPPER
        else:
            x[j], state[j] = 0.0, FREE_NONBASIC
    info = BasisInfo(
        basis=np.zeros(0, dtype=int),
        state=state,
        basis_inverse=np.zeros((0, 0)),
        ext_lower=lp.lower.copy(),
        ext_upper=lp.upper.copy(),
        num_vars=n,
        num_rows=0,
    )
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=x,
        objective_value=float(lp.objective @ x),
        row_duals=np.zeros(0),
        reduced_costs=lp.objective.copy(),
        row_activity=np.zeros(0),
        iterations=0,
        basis_info=info,
    )


def _non_optimal(lp: LinearProgram, status: LpStatus) -> LpSolution:
    n, m = lp.num_vars, lp.num_rows
    return LpSolution(
        status=status,
        x=np.full(n, np.nan),
        objective_value=-INF if status is LpStatus.UNBOUNDED else float("nan"),
        row_duals=np.full(m, np.nan),
        reduced_costs=np.full(n, np.nan),
        row_activity=np.full(m, np.nan),
    )


def solve_lp(lp: LinearProgram, options: SolverOptions | None = None) -> LpSolution:
    """Solve to proven optimality, returning primal, duals and basis state.

    Raises :class:`SolverFailureError` on numerical breakdown or iteration
    limits; infeasible and unbounded problems are reported via ``status``.
    """
    opts = options or SolverOptions()
    lp.validate()
    n, m = lp.num_vars, lp.num_rows
    if m == 0:
        return _bounds_only_solution(lp, opts)

    a = lp.dense_matrix()
    resid = 0.0
    for attempt_opts in (opts, _paranoid(opts)):
        sol = _solve_once(lp, a, attempt_opts)
        if sol.status is not LpStatus.OPTIMAL:
            return sol
        resid = _feasibility_residual(lp, sol)
        scale = 1.0 + float(np.max(np.abs(sol.x))) if n else 1.0
        if resid <= opts.feas_tol * scale:
            return sol
    raise SolverFailureError(
        f"optimal basis violates feasibility tolerance (residual {resid:.3e})"
    )


def _paranoid(opts: SolverOptions) -> SolverOptions:
    # retry profile: refactorize on every pivot to eliminate inverse drift
    return dataclasses.replace(opts, refactor_every=1)


def _feasibility_residual(lp: LinearProgram, sol: LpSolution) -> float:
    parts = [0.0]
    if lp.num_vars:
        parts.append(float(np.max(np.maximum(lp.lower - sol.x, 0.0))))
        parts.append(float(np.max(np.maximum(sol.x - lp.upper, 0.0))))
    if lp.num_rows:
        act = sol.row_activity
        parts.append(float(np.max(np.maximum(lp.row_lower - act, 0.0))))
        parts.append(float(np.max(np.maximum(act - lp.row_upper, 0.0))))
    return max(parts)


def _solve_once(lp: LinearProgram, a: np.ndarray, opts: SolverOptions) -> LpSolution:
    n, m = lp.num_vars, lp.num_rows

    # initial nonbasic point: every structural variable on a bound (or 0 if free)
    x0 = np.zeros(n)
    state0 = np.empty(n, dtype=np.int8)
    finite_lo = np.isfinite(lp.lower)
    finite_up = np.isfinite(lp.upper)
    for j in range(n):
        if finite_lo[j]:
            x0[j], state0[j] = lp.lower[j], AT_LOWER
        elif finite_up[j]:
            x0[j], state0[j] = lp.upper[j], AT_UPPER
        else:
            x0[j], state0[j] = 0.0, FREE_NONBASIC

    activity0 = a @ x0
    s0 = np.clip(activity0, lp.row_lower, lp.row_upper)
    resid = activity0 - s0
    art_rows = np.flatnonzero(np.abs(resid) > 0.0)
    k_art = art_rows.size

    # extended system [A | -I | -D] z = 0
    ext = np.hstack([a, -np.eye(m)])
    lower = np.concatenate([lp.lower, lp.row_lower])
    upper = np.concatenate([lp.upper, lp.row_upper])
    if k_art:
        d_cols = np.zeros((m, k_art))
        for idx, r in enumerate(art_rows):
            d_cols[r, idx] = -np.sign(resid[r])
        ext = np.hstack([ext, d_cols])
        lower = np.concatenate([lower, np.zeros(k_art)])
        upper = np.concatenate([upper, np.full(k_art, INF)])

    core = _Simplex(ext, lower, upper, opts)

    basis = np.empty(m, dtype=int)
    state = np.empty(n + m + k_art, dtype=np.int8)
    value = np.zeros(n + m + k_art)
    state[:n] = state0
    value[:n] = x0
    art_of_row = {int(r): n + m + i for i, r in enumerate(art_rows)}
    for i in range(m):
        if i in art_of_row:
            basis[i] = art_of_row[i]
            state[basis[i]] = BASIC
            value[basis[i]] = abs(resid[i])
            state[n + i] = AT_LOWER if activity0[i] < lp.row_lower[i] else AT_UPPER
            value[n + i] = s0[i]
        else:
            basis[i] = n + i
            state[n + i] = BASIC
            value[n + i] = s0[i]
    core.start_from(basis, state, value)

    if k_art:
        cost1 = np.zeros(n + m + k_art)
        cost1[n + m:] = 1.0
        core.run(cost1, _PHASE1)
        if core.objective(cost1) > opts.feas_tol * (1.0 + float(np.abs(s0).max(initial=0.0))):
            return _non_optimal(lp, LpStatus.INFEASIBLE)
        core.pivot_out_artificials(n + m)
        # freeze artificials at zero for phase 2
        core.lower[n + m:] = 0.0
        core.upper[n + m:] = 0.0
        core.value[n + m:] = np.where(core.state[n + m:] == BASIC, core.value[n + m:], 0.0)

    cost2 = np.concatenate([lp.objective, np.zeros(m + k_art)])
    status = core.run(cost2, _PHASE2)
    if status is LpStatus.UNBOUNDED:
        return _non_optimal(lp, LpStatus.UNBOUNDED)

    core.refactor()
    y = core.duals(cost2)
    d = core.reduced_costs(cost2, y)
    x = core.value[:n].copy()
    reduced = d[:n].copy()
    reduced[core.state[:n] == BASIC] = 0.0
    info = BasisInfo(
        basis=core.basis.copy(),
        state=core.state[: n + m].copy(),
        basis_inverse=core.binv.copy(),
        ext_lower=core.lower[: n + m].copy(),
        ext_upper=core.upper[: n + m].copy(),
        num_vars=n,
        num_rows=m,
    )
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=x,
        objective_value=float(lp.objective @ x),
        row_duals=y.copy(),
        reduced_costs=reduced,
        row_activity=a @ x,
        iterations=core.iterations,
        basis_info=info,
    )
