"""Optimality diagnostics: primal feasibility, complementary slackness, gap."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LinearProgram, LpSolution, LpStatus


@dataclass(frozen=True)
class KktReport:
    primal_residual: float
    complementarity_residual: float
    duality_gap: float

    def ok(self, feas_tol: float = 1e-7, comp_tol: float = 1e-6, gap_tol: float = 1e-6) -> bool:
        return (
            self.primal_residual <= feas_tol
            and self.complementarity_residual <= comp_tol
            and self.duality_gap <= gap_tol
        )


_SNAP = 1e-11  # multipliers below this are numerical noise


def _comp_terms(mult: np.ndarray, value: np.ndarray, lower: np.ndarray,
                upper: np.ndarray) -> float:
    """Multiplier-weighted distance to the bound each multiplier sign points at."""
    worst = 0.0
    for u, v, lo, up in zip(mult, value, lower, upper):
        if u > _SNAP:
            worst = max(worst, u * (np.inf if not np.isfinite(lo) else abs(v - lo)))
        elif u < -_SNAP:
            worst = max(worst, -u * (np.inf if not np.isfinite(up) else abs(up - v)))
    return worst


def kkt_report(lp: LinearProgram, sol: LpSolution) -> KktReport:
    """Residuals scaled by (1 + |x|_inf); meaningful only for OPTIMAL solutions."""
    if sol.status is not LpStatus.OPTIMAL:
        return KktReport(np.inf, np.inf, np.inf)
    scale = 1.0 + float(np.max(np.abs(sol.x), initial=0.0))

    primal = 0.0
    if lp.num_vars:
        primal = max(
            float(np.max(np.maximum(lp.lower - sol.x, 0.0))),
            float(np.max(np.maximum(sol.x - lp.upper, 0.0))),
        )
    if lp.num_rows:
        act = lp.dense_matrix() @ sol.x
        primal = max(
            primal,
            float(np.max(np.maximum(lp.row_lower - act, 0.0))),
            float(np.max(np.maximum(act - lp.row_upper, 0.0))),
        )
    else:
        act = np.zeros(0)

    comp = max(
        _comp_terms(sol.row_duals, act, lp.row_lower, lp.row_upper),
        _comp_terms(sol.reduced_costs, sol.x, lp.lower, lp.upper),
    )

    # dual objective: each multiplier pays for the bound its sign selects
    dual_obj = 0.0
    for u, lo, up in zip(sol.row_duals, lp.row_lower, lp.row_upper):
        if u > _SNAP:
            dual_obj += u * lo
        elif u < -_SNAP:
            dual_obj += u * up
    for u, lo, up in zip(sol.reduced_costs, lp.lower, lp.upper):
        if u > _SNAP:
            dual_obj += u * lo
        elif u < -_SNAP:
            dual_obj += u * up
    gap = abs(sol.objective_value - dual_obj)
    if not np.isfinite(gap):
        gap = np.inf

    return KktReport(primal / scale, comp / scale, gap / scale)
