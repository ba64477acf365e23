"""Independent oracles used to freeze expected values in the test suite.

Everything here leans on scipy.optimize.linprog (HiGHS) or brute-force
enumeration so that the production solver is checked against code that
shares none of its implementation.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from bessplan.lp import LinearProgram, LpStatus, RowKind


def scipy_solve(lp: LinearProgram):
    """Returns (status, x, objective) from the HiGHS-backed reference solver."""
    a = lp.dense_matrix()
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for i, kind in enumerate(lp.row_kinds):
        lo, up = lp.row_lower[i], lp.row_upper[i]
        if kind is RowKind.EQ:
            a_eq.append(a[i])
            b_eq.append(lo)
        else:
            if np.isfinite(up):
                a_ub.append(a[i])
                b_ub.append(up)
            if np.isfinite(lo):
                a_ub.append(-a[i])
                b_ub.append(-lo)
    bounds = [
        (None if not np.isfinite(lo) else lo, None if not np.isfinite(up) else up)
        for lo, up in zip(lp.lower, lp.upper)
    ]
    res = linprog(
        lp.objective,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 0:
        return LpStatus.OPTIMAL, res.x, res.fun
    if res.status == 2:
        return LpStatus.INFEASIBLE, None, None
    if res.status == 3:
        return LpStatus.UNBOUNDED, None, None
    raise RuntimeError(f"reference solver failed: {res.message}")


def scipy_row_dual_fd(lp: LinearProgram, row: int, h: float = 1e-4):
    """Finite-difference shadow price d(obj)/d(rhs) for one row, or None if the
    objective is kinked there (active-set change within +-h)."""
    def shifted(delta):
        lo = lp.row_lower.copy()
        up = lp.row_upper.copy()
        if np.isfinite(lo[row]):
            lo[row] += delta
        if np.isfinite(up[row]):
            up[row] += delta
        moved = LinearProgram(
            objective=lp.objective, rows=lp.rows, row_kinds=lp.row_kinds,
            row_lower=lo, row_upper=up, lower=lp.lower, upper=lp.upper,
        )
        return scipy_solve(moved)

    st_p, _, f_p = shifted(+h)
    st_m, _, f_m = shifted(-h)
    st_0, _, f_0 = scipy_solve(lp)
    if not (st_p is LpStatus.OPTIMAL and st_m is LpStatus.OPTIMAL and st_0 is LpStatus.OPTIMAL):
        return None
    right = (f_p - f_0) / h
    left = (f_0 - f_m) / h
    if abs(right - left) > 1e-4 * (1.0 + abs(right) + abs(left)):
        return None  # one-sided derivatives disagree: degenerate point
    return 0.5 * (right + left)


def brute_force_milp(lp: LinearProgram, binaries):
    """Enumerate all binary assignments; returns (best_obj, best_assignment)."""
    binaries = list(binaries)
    best_obj, best_asg = np.inf, None
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        lo = lp.lower.copy()
        up = lp.upper.copy()
        for j, v in zip(binaries, bits):
            lo[j] = up[j] = v
        status, _, obj = scipy_solve(lp.with_bounds(lo, up))
        if status is LpStatus.OPTIMAL and obj < best_obj - 1e-12:
            best_obj, best_asg = obj, bits
    return (best_obj, best_asg) if best_asg is not None else (None, None)


def random_feasible_lp(rng: np.random.Generator, max_vars: int = 8, max_rows: int = 6):
    """Random box-bounded LP that is feasible by construction (row bounds are
    placed around the activity of an interior point)."""
    n = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(0, max_rows + 1))
    lower = rng.uniform(-5, 0, n)
    upper = lower + rng.uniform(0.5, 8, n)
    # a sprinkling of infinite bounds, kept one-sided so the LP stays bounded
    for j in range(n):
        if rng.random() < 0.15:
            lower[j] = -np.inf
    c = rng.uniform(-3, 3, n)
    c[~np.isfinite(lower)] = np.abs(c[~np.isfinite(lower)]) + 0.1  # push unbounded-below vars up
    x0 = np.where(np.isfinite(lower), lower, 0.0) + rng.uniform(0.1, 0.9, n) * np.where(
        np.isfinite(lower), upper - lower, 1.0
    )
    a = np.round(rng.uniform(-2, 2, (m, n)) * (rng.random((m, n)) < 0.7), 3)
    act = a @ x0
    kinds, row_lo, row_up = [], [], []
    for i in range(m):
        kind = rng.choice(["eq", "le", "ge", "range"])
        slack = float(rng.uniform(0.1, 2.0))
        if kind == "eq":
            kinds.append(RowKind.EQ)
            row_lo.append(act[i])
            row_up.append(act[i])
        elif kind == "le":
            kinds.append(RowKind.LE)
            row_lo.append(-np.inf)
            row_up.append(act[i] + slack)
        elif kind == "ge":
            kinds.append(RowKind.GE)
            row_lo.append(act[i] - slack)
            row_up.append(np.inf)
        else:
            kinds.append(RowKind.RANGE)
            row_lo.append(act[i] - slack)
            row_up.append(act[i] + float(rng.uniform(0.1, 2.0)))
    return LinearProgram.from_dense(c, a.reshape(m, n), kinds, row_lo, row_up, lower, upper)
