"""Objective-coefficient ranging from a retained optimal basis.

For a nonbasic variable the range is the half-line over which its reduced
cost keeps the sign required by the bound it sits on.  For a basic variable
perturbing its cost by ``delta`` shifts every nonbasic reduced cost by
``-delta * alpha_k`` (``alpha_k`` the variable's tableau row), and the range
is the tightest interval keeping all of them sign-feasible.  A primal
degenerate basis can understate the true interval, so such ranges carry a
``conservative`` flag.
"""
from __future__ import annotations

import numpy as np

from .model import (
    AT_LOWER,
    AT_UPPER,
    BASIC,
    FREE_NONBASIC,
    INF,
    LinearProgram,
    LpStatus,
    LpSolution,
    LpStructureError,
    SensitivityRange,
)
from .simplex import SolverOptions


def _primal_degenerate(sol: LpSolution, tol: float) -> bool:
    info = sol.basis_info
    vals = np.concatenate([sol.x, sol.row_activity])
    for col in info.basis:
        if col >= info.num_vars + info.num_rows:
            continue  # leftover artificial, pinned at zero
        lo, up = info.ext_lower[col], info.ext_upper[col]
        v = vals[col]
        if (np.isfinite(lo) and abs(v - lo) <= tol) or (np.isfinite(up) and abs(v - up) <= tol):
            return True
    return False


def objective_range(
    lp: LinearProgram,
    sol: LpSolution,
    var_index: int,
    options: SolverOptions | None = None,
) -> SensitivityRange:
    """Interval of objective coefficients keeping the current primal optimal."""
    opts = options or SolverOptions()
    if sol.status is not LpStatus.OPTIMAL or sol.basis_info is None:
        raise LpStructureError("sensitivity needs an optimal solution with basis info")
    info = sol.basis_info
    n, m = info.num_vars, info.num_rows
    if not 0 <= var_index < n:
        raise LpStructureError(f"variable index {var_index} out of range")

    degen = _primal_degenerate(sol, 1e-9)
    c_j = float(lp.objective[var_index])
    s_j = info.state[var_index]
    d_ext = np.concatenate([sol.reduced_costs, sol.row_duals])

    if s_j == AT_LOWER:
        return SensitivityRange(var_index, c_j - float(d_ext[var_index]), INF, degen)
    if s_j == AT_UPPER:
        return SensitivityRange(var_index, -INF, c_j - float(d_ext[var_index]), degen)
    if s_j == FREE_NONBASIC:
        return SensitivityRange(var_index, c_j, c_j, True)

    # basic variable: scan the tableau row against all movable nonbasic columns
    pos = np.flatnonzero(info.basis == var_index)
    if pos.size != 1:
        raise LpStructureError("basis bookkeeping mismatch for sensitivity")
    r = int(pos[0])
    binv_row = info.basis_inverse[r, :]
    alpha = np.empty(n + m)
    alpha[:n] = binv_row @ lp.dense_matrix()
    alpha[n:] = -binv_row

    movable = (info.state != BASIC) & (info.ext_upper - info.ext_lower > 0.0)
    lo_shift, hi_shift = -INF, INF
    tol = opts.pivot_tol
    for k in np.flatnonzero(movable):
        a_k = alpha[k]
        if abs(a_k) <= tol:
            continue
        ratio = float(d_ext[k] / a_k)
        s_k = info.state[k]
        if s_k == AT_LOWER:
            if a_k > 0.0:
                hi_shift = min(hi_shift, ratio)
            else:
                lo_shift = max(lo_shift, ratio)
        elif s_k == AT_UPPER:
            if a_k > 0.0:
                lo_shift = max(lo_shift, ratio)
            else:
                hi_shift = min(hi_shift, ratio)
        else:  # free nonbasic with a nonzero tableau entry pins the coefficient
            lo_shift = max(lo_shift, 0.0)
            hi_shift = min(hi_shift, 0.0)
    return SensitivityRange(var_index, c_j + lo_shift, c_j + hi_shift, degen)
