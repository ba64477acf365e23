"""Alternating price-settlement loop between grid dispatch and battery owner.

One iteration clears the day's dispatch against the current battery bids,
reads the nodal prices off the dual solution, lets the owner re-optimize
its charge/discharge plan against those prices, and converts the new plan
into bids for the next clearing.  The loop stops once consecutive price
vectors agree in L2 norm, the iteration budget runs out, or the deltas
start climbing (a sign of bouncing between competing fixed points).
"""
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dispatch import (
    BidSet,
    DispatchInfeasibleError,
    DispatchSolution,
    LmpVector,
    build_dispatch,
    extract_lmps,
    solve_dispatch,
)
from .lp import LpStatus
from .network import LoadSeries, PowerNetwork, PtdfMatrix
from .scheduling import (
    BessCandidate,
    BessConfig,
    ScheduleSolution,
    build_schedule,
    make_bids,
    solve_schedule,
)


class SettlementError(RuntimeError):
    """The alternating loop had to abort; carries the iteration index."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"settlement iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class AusParams:
    """Stopping rule for the alternating loop."""

    epsilon: float = 1e-3       # $/MWh, L2 over all buses and periods
    max_iter: int = 10
    bid_margin: float = 0.05    # passed through to bid construction


@dataclass(frozen=True)
class AusState:
    """Trace of the loop: one entry per dispatch solve (entry 0 is bid-free)."""

    iteration: int
    bids: BidSet
    lmps: LmpVector
    delta_history: tuple[float, ...]          # entry k-1 compares rounds k, k-1
    iso_costs: tuple[float, ...]              # dispatch objective per round
    owner_costs: tuple[float, ...]            # battery energy cost per round
    lmp_means: tuple[tuple[float, ...], ...]  # per round, period-mean price per bus

    def validate(self) -> None:
        if len(self.delta_history) != self.iteration:
            raise ValueError("delta history length must equal the iteration count")
        if not (
            len(self.iso_costs)
            == len(self.owner_costs)
            == len(self.lmp_means)
            == self.iteration + 1
        ):
            raise ValueError("cost traces must cover every round including round 0")


@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    iterations: int
    final_delta: float
    oscillation: bool


@dataclass(frozen=True)
class AusOutcome:
    """Last consistent dispatch/schedule pair plus the full trace."""

    dispatch: DispatchSolution
    schedule: ScheduleSolution
    report: ConvergenceReport
    state: AusState


def price_delta(a, b) -> float:
    """Euclidean distance between two price fields over all buses and periods."""
    va = a.values if isinstance(a, LmpVector) else np.asarray(a, dtype=float)
    vb = b.values if isinstance(b, LmpVector) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ValueError(f"price shapes differ: {va.shape} vs {vb.shape}")
    return float(np.linalg.norm(va - vb))


def _owner_cost(dispatch: DispatchSolution, lmps: LmpVector) -> float:
    """Settle the cleared battery quantities at the published prices."""
    dt = dispatch.problem.period_hours
    total = 0.0
    for bid in dispatch.problem.bids.bids:
        lam = lmps.at(bid.bus)
        for k, t in enumerate(dispatch.problem.periods):
            pc = dispatch.charge[bid.battery_id, t]
            pd = dispatch.discharge[bid.battery_id, t]
            total += lam[k] * (pc - pd) * dt
    return float(total)


def _clear(net, ptdf, loads, bids, periods, period_hours, iteration):
    try:
        problem = build_dispatch(net, ptdf, loads, bids, periods, period_hours)
        return solve_dispatch(problem)
    except DispatchInfeasibleError as exc:
        raise SettlementError(iteration, str(exc)) from exc


def run_aus(
    net: PowerNetwork,
    ptdf: PtdfMatrix,
    loads: list[LoadSeries],
    catalog: list[BessCandidate],
    config: BessConfig,
    params: AusParams = AusParams(),
    periods: list[int] | None = None,
    period_hours: float = 1.0,
) -> AusOutcome:
    """Iterate dispatch and owner scheduling until prices stop moving.

    The investment (which sites, what capacity) is fixed by ``config``; only
    the operating plan and bids evolve.  Returns the last dispatch/schedule
    pair, or the lowest-delta pair when the loop is cut short by oscillation.
    """
    config.validate({c.id: c for c in catalog})

    dispatch = _clear(net, ptdf, loads, BidSet.empty(), periods, period_hours, 0)
    lmps = extract_lmps(dispatch, ptdf)
    schedule = None
    bids = BidSet.empty()

    iso_costs = [dispatch.total_cost]
    owner_costs = [0.0]
    lmp_means = [tuple(lmps.values.mean(axis=1))]
    deltas: list[float] = []

    best = None            # (delta, dispatch, schedule, lmps, bids)
    rise_streak = 0
    converged = False
    oscillation = False

    for k in range(1, params.max_iter + 1):
        prices = {c.id: lmps.at(c.bus) for c in catalog}
        schedule = solve_schedule(
            build_schedule(
                catalog, prices, config.budget,
                fixed_config=config, period_hours=period_hours,
            )
        )
        if schedule.status is not LpStatus.OPTIMAL:
            raise SettlementError(k, "owner schedule is infeasible under the fixed sizing")
        bids = make_bids(schedule, catalog, prices, margin=params.bid_margin)

        dispatch = _clear(net, ptdf, loads, bids, periods, period_hours, k)
        new_lmps = extract_lmps(dispatch, ptdf)
        delta = price_delta(new_lmps, lmps)
        lmps = new_lmps

        deltas.append(delta)
        iso_costs.append(dispatch.total_cost)
        owner_costs.append(_owner_cost(dispatch, lmps))
        lmp_means.append(tuple(lmps.values.mean(axis=1)))

        if best is None or delta < best[0]:
            best = (delta, dispatch, schedule, lmps, bids)
        if delta < params.epsilon:
            converged = True
            break
        rise_streak = rise_streak + 1 if len(deltas) >= 2 and delta >= deltas[-2] else 0
        if rise_streak >= 2:
            oscillation = True
            _, dispatch, schedule, lmps, bids = best
            break

    final_delta = deltas[-1] if not oscillation else best[0]
    state = AusState(
        iteration=len(deltas),
        bids=bids,
        lmps=lmps,
        delta_history=tuple(deltas),
        iso_costs=tuple(iso_costs),
        owner_costs=tuple(owner_costs),
        lmp_means=tuple(lmp_means),
    )
    state.validate()
    report = ConvergenceReport(
        converged=converged,
        iterations=len(deltas),
        final_delta=final_delta,
        oscillation=oscillation,
    )
    return AusOutcome(dispatch=dispatch, schedule=schedule, report=report, state=state)


def pareto_check(state: AusState, tol: float = 1e-7) -> tuple[bool, ...]:
    """Flag round transitions where both agents' costs strictly decreased.

    A flagged transition is a joint (Pareto) improvement; finding one after
    the loop has settled means the claimed fixed point was not one.
    """
    if state.iteration < 1:
        raise ValueError("need at least two rounds to compare transitions")
    flags = []
    for j in range(state.iteration):
        f_now, f_next = state.iso_costs[j], state.iso_costs[j + 1]
        g_now, g_next = state.owner_costs[j], state.owner_costs[j + 1]
        scale_f = tol * (1.0 + abs(f_now))
        scale_g = tol * (1.0 + abs(g_now))
        flags.append(bool(f_next < f_now - scale_f and g_next < g_now - scale_g))
    return tuple(flags)


@dataclass(frozen=True)
class DeviationRecord:
    """Market outcome after rescaling one battery's discharge asks."""

    scale: float
    iso_cost: float
    owner_cost: float


def bid_deviation_scan(
    outcome: AusOutcome,
    net: PowerNetwork,
    ptdf: PtdfMatrix,
    loads: list[LoadSeries],
    battery_id: int | None = None,
    n_points: int = 21,
    scale_range: tuple[float, float] = (0.0, 2.0),
) -> list[DeviationRecord]:
    """Re-clear the market across a grid of one battery's discharge ask prices.

    Used to probe the settled point: no rescaling should lower the owner's
    cost without raising the dispatch cost.  Only objective coefficients
    change, so every deviation stays feasible.
    """
    base_bids = outcome.dispatch.problem.bids
    if not base_bids.bids:
        raise ValueError("no battery bids to deviate")
    if battery_id is None:
        battery_id = base_bids.bids[0].battery_id
    periods = outcome.dispatch.problem.periods
    period_hours = outcome.dispatch.problem.period_hours

    records = []
    for scale in np.linspace(scale_range[0], scale_range[1], n_points):
        bids = []
        for bid in base_bids.bids:
            if bid.battery_id == battery_id:
                bid = replace(bid, discharge_price=bid.discharge_price * float(scale))
            bids.append(bid)
        dispatch = _clear(
            net, ptdf, loads, BidSet(bids=tuple(bids)), periods, period_hours, -1
        )
        lmps = extract_lmps(dispatch, ptdf)
        records.append(
            DeviationRecord(
                scale=float(scale),
                iso_cost=dispatch.total_cost,
                owner_cost=_owner_cost(dispatch, lmps),
            )
        )
    return records


def has_improving_deviation(
    records: list[DeviationRecord], base_iso: float, base_owner: float,
    tol: float = 1e-6,
) -> bool:
    return any(
        r.owner_cost < base_owner - tol * (1.0 + abs(base_owner))
        and r.iso_cost <= base_iso + tol * (1.0 + abs(base_iso))
        for r in records
    )


def write_trace_json(outcome: AusOutcome, path: str | Path) -> None:
    """Plot-ready per-round trace: delta, both costs, mean price per bus."""
    state = outcome.state
    rounds = []
    for j in range(state.iteration + 1):
        rounds.append(
            {
                "k": j,
                "delta": None if j == 0 else state.delta_history[j - 1],
                "iso_cost": state.iso_costs[j],
                "owner_cost": state.owner_costs[j],
                "lmp_mean_by_bus": {
                    str(b): state.lmp_means[j][i]
                    for i, b in enumerate(state.lmps.bus_ids)
                },
            }
        )
    payload = {
        "converged": outcome.report.converged,
        "iterations": outcome.report.iterations,
        "final_delta": outcome.report.final_delta,
        "oscillation": outcome.report.oscillation,
        "rounds": rounds,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_trace_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
