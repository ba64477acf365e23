"""Branch and bound over binary variables on top of the LP solver.

Branching fixes the most fractional binary; the search dives depth-first on
the rounded child and parks the sibling on a best-bound heap.  Hitting the
node limit returns the incumbent flagged ``proven_optimal=False``.
"""
from __future__ import annotations

import heapq

import numpy as np

from .model import LinearProgram, LpStatus, MilpProblem, MilpSolution
from .simplex import SolverOptions, solve_lp


def _to_milp(sol, nodes: int, proven: bool, relax_obj: float) -> MilpSolution:
    return MilpSolution(
        status=sol.status,
        x=sol.x,
        objective_value=sol.objective_value,
        row_duals=sol.row_duals,
        reduced_costs=sol.reduced_costs,
        row_activity=sol.row_activity,
        iterations=sol.iterations,
        basis_info=sol.basis_info,
        nodes_explored=nodes,
        proven_optimal=proven,
        relaxation_objective=relax_obj,
    )


def solve_milp(problem: MilpProblem, options: SolverOptions | None = None) -> MilpSolution:
    """Solve a binary MILP; duals in the result are those of the LP with the
    incumbent's binaries fixed."""
    opts = options or SolverOptions()
    problem.validate()
    lp = problem.base
    binaries = np.array(sorted(set(problem.binary_vars)), dtype=int)

    if binaries.size == 0:
        sol = solve_lp(lp, opts)
        return _to_milp(sol, 1, True, sol.objective_value)

    root = solve_lp(lp, opts)
    if root.status is not LpStatus.OPTIMAL:
        return _to_milp(root, 1, True, float("nan"))
    relax_obj = root.objective_value

    incumbent: MilpSolution | None = None
    best_obj = np.inf
    nodes = 0
    limit_hit = False
    counter = 0
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    pending: tuple[np.ndarray, np.ndarray] | None = (lp.lower.copy(), lp.upper.copy())
    pending_bound = -np.inf

    while True:
        if pending is None:
            if not heap:
                break
            bound, _, lo, up = heapq.heappop(heap)
            if bound >= best_obj - opts.gap_tol:
                break  # heap is sorted by bound; nothing left can improve
            pending, pending_bound = (lo, up), bound
        if nodes >= opts.node_limit:
            limit_hit = True
            break
        lo, up = pending
        pending = None
        if pending_bound >= best_obj - opts.gap_tol:
            continue
        nodes += 1
        sol = solve_lp(lp.with_bounds(lo, up), opts)
        if sol.status is not LpStatus.OPTIMAL:
            continue
        if sol.objective_value >= best_obj - opts.gap_tol:
            continue
        frac = np.abs(sol.x[binaries] - np.round(sol.x[binaries]))
        if float(frac.max(initial=0.0)) <= opts.int_tol:
            # pin every binary so the reported duals describe the integer point,
            # not whatever relaxation happened to come out integral
            p_lo, p_up = lo.copy(), up.copy()
            p_lo[binaries] = p_up[binaries] = np.round(sol.x[binaries])
            pinned = solve_lp(lp.with_bounds(p_lo, p_up), opts)
            if pinned.status is LpStatus.OPTIMAL:
                sol = pinned
            best_obj = sol.objective_value
            incumbent = _to_milp(sol, nodes, True, relax_obj)
            continue
        j = int(binaries[np.argmin(np.abs(sol.x[binaries] - 0.5))])
        first = 1.0 if sol.x[j] >= 0.5 else 0.0
        for fix in (1.0 - first, first):  # push sibling, then dive on `first`
            c_lo, c_up = lo.copy(), up.copy()
            c_lo[j] = c_up[j] = fix
            if fix == first:
                pending = (c_lo, c_up)
                pending_bound = sol.objective_value
            else:
                counter += 1
                heapq.heappush(heap, (sol.objective_value, counter, c_lo, c_up))

    if incumbent is not None:
        incumbent.nodes_explored = nodes
        incumbent.proven_optimal = not limit_hit
        return incumbent
    # exhausted with no feasible integer point (or truncated before finding one)
    out = _to_milp(root, nodes, not limit_hit, relax_obj)
    out.status = LpStatus.INFEASIBLE
    out.x = np.full(lp.num_vars, np.nan)
    out.objective_value = float("nan")
    out.row_duals = np.full(lp.num_rows, np.nan)
    out.reduced_costs = np.full(lp.num_vars, np.nan)
    out.row_activity = np.full(lp.num_rows, np.nan)
    out.basis_info = None
    return out
