"""Battery owner self-scheduling: sizing/arbitrage MILP, variants, bid making.

The full model chooses install flags y_i, capacities c_i and a charge/
discharge plan against fixed prices, minimizing investment plus energy cost
(arbitrage revenue enters negatively).  The big-M linking capacity to the
install flag is budget-derived.  Inside market simulation the investment is
already decided, so builders accept a fixed configuration and treat those
terms as a constant offset.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dispatch import BatteryBid, BidSet
from .lp import (
    LpBuilder,
    LpStatus,
    LpStructureError,
    MilpProblem,
    SolverOptions,
    solve_milp,
)


class BudgetError(ValueError):
    """Requested installation cannot fit the budget."""


@dataclass(frozen=True)
class BessCandidate:
    """A potential battery site with cost and physical coefficients.

    Rates scale with capacity: max charge power is kappa_c * c (MW per MWh of
    installed capacity), likewise discharge.  SOC bounds and the initial SOC
    are fractions of capacity.
    """

    id: int
    bus: int
    fixed_cost: float        # F, $ once if installed
    unit_cost: float         # G, $ per MWh of capacity
    kappa_c: float
    kappa_d: float
    soc_min: float
    soc_max: float
    eta_c: float
    eta_d: float
    initial_soc: float | None = None   # fraction; defaults to soc_min

    def validate(self) -> None:
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise LpStructureError(
                f"candidate {self.id}: need 0 <= Sl < Su <= 1, got [{self.soc_min}, {self.soc_max}]"
            )
        if self.kappa_c <= 0 or self.kappa_d <= 0:
            raise LpStructureError(f"candidate {self.id}: rate coefficients must be > 0")
        if not (0.0 < self.eta_c <= 1.0 and 0.0 < self.eta_d <= 1.0):
            raise LpStructureError(f"candidate {self.id}: efficiencies must lie in (0, 1]")
        if self.unit_cost <= 0:
            raise LpStructureError(f"candidate {self.id}: unit cost must be > 0")
        if self.fixed_cost < 0:
            raise LpStructureError(f"candidate {self.id}: negative fixed cost")
        s0 = self.start_fraction
        if not 0.0 <= s0 <= 1.0:
            raise LpStructureError(f"candidate {self.id}: initial SOC fraction outside [0, 1]")

    @property
    def start_fraction(self) -> float:
        return self.soc_min if self.initial_soc is None else self.initial_soc

    def capacity_cap(self, budget: float) -> float:
        """Largest capacity the budget allows at this site alone (big-M)."""
        return max(0.0, (budget - self.fixed_cost) / self.unit_cost)


@dataclass(frozen=True)
class BessConfig:
    """A concrete investment: which sites are built and at what capacity."""

    installed: tuple[int, ...]           # candidate ids with y_i = 1
    capacity: dict[int, float]           # candidate id -> MWh
    budget: float

    def investment(self, catalog: dict[int, BessCandidate]) -> float:
        total = 0.0
        for cid in self.installed:
            total += catalog[cid].fixed_cost + catalog[cid].unit_cost * self.capacity.get(cid, 0.0)
        return total

    def validate(self, catalog: dict[int, BessCandidate], tol: float = 1e-6) -> None:
        for cid, cap in self.capacity.items():
            if cap < -tol:
                raise LpStructureError(f"negative capacity for candidate {cid}")
            if cap > tol and cid not in self.installed:
                raise LpStructureError(f"candidate {cid} has capacity but is not installed")
        for cid in self.installed:
            if cid not in catalog:
                raise LpStructureError(f"installed candidate {cid} not in catalog")
        if self.investment(catalog) > self.budget + tol:
            raise BudgetError(
                f"investment {self.investment(catalog):.2f} exceeds budget {self.budget:.2f}"
            )

    @staticmethod
    def empty(budget: float) -> "BessConfig":
        return BessConfig(installed=(), capacity={}, budget=budget)


@dataclass(frozen=True)
class VariantSpec:
    zero_fixed_cost: bool = False
    enforce_complementarity: bool = False


@dataclass
class SchedulingProblem:
    milp: MilpProblem
    candidates: list[BessCandidate]
    prices: dict[int, np.ndarray]        # candidate id -> price series
    horizon: int
    period_hours: float
    budget: float
    variant: VariantSpec
    fixed_config: BessConfig | None
    objective_offset: float              # investment constant when config fixed
    cap_var: dict[int, int]
    install_var: dict[int, int]
    charge_var: dict[tuple[int, int], int]
    discharge_var: dict[tuple[int, int], int]
    soc_var: dict[tuple[int, int], int]
    comp_var: dict[tuple[int, int], int]


@dataclass
class ScheduleSolution:
    status: LpStatus
    objective: float                     # investment + energy cost (revenue negative)
    investment: float
    installed: tuple[int, ...]
    capacity: dict[int, float]
    charge: dict[int, np.ndarray]
    discharge: dict[int, np.ndarray]
    soc: dict[int, np.ndarray]           # length T+1, start-of-period energy
    cashflow: dict[int, np.ndarray]      # lambda * (pc - pd) * dt, per period
    proven_optimal: bool = True
    nodes_explored: int = 0


def _normalize_prices(
    candidates: list[BessCandidate], prices
) -> dict[int, np.ndarray]:
    if isinstance(prices, dict):
        out = {}
        for cand in candidates:
            if cand.id not in prices:
                raise LpStructureError(f"no price series for candidate {cand.id}")
            out[cand.id] = np.asarray(prices[cand.id], dtype=float)
        return out
    arr = np.asarray(prices, dtype=float)
    return {cand.id: arr.copy() for cand in candidates}


def build_schedule(
    candidates: list[BessCandidate],
    prices,
    budget: float,
    variant: VariantSpec = VariantSpec(),
    fixed_config: BessConfig | None = None,
    period_hours: float = 1.0,
) -> SchedulingProblem:
    """Assemble the owner MILP.

    ``prices`` is either one array shared by every candidate or a dict keyed
    by candidate id.  With ``fixed_config`` the investment variables vanish:
    capacities become constants, rate and SOC limits become plain bounds, and
    the investment cost is carried as an objective offset.
    """
    if not candidates:
        raise LpStructureError("no candidates supplied")
    for cand in candidates:
        cand.validate()
    ids = [c.id for c in candidates]
    if len(set(ids)) != len(ids):
        raise LpStructureError("duplicate candidate ids")
    price_map = _normalize_prices(candidates, prices)
    horizons = {len(v) for v in price_map.values()}
    if len(horizons) != 1:
        raise LpStructureError("price series lengths differ across candidates")
    horizon = horizons.pop()
    if horizon == 0:
        raise LpStructureError("empty price horizon")

    catalog = {c.id: c for c in candidates}
    if fixed_config is not None:
        fixed_config.validate(catalog)

    dt = float(period_hours)
    b = LpBuilder()
    cap_var: dict[int, int] = {}
    install_var: dict[int, int] = {}
    charge_var: dict[tuple[int, int], int] = {}
    discharge_var: dict[tuple[int, int], int] = {}
    soc_var: dict[tuple[int, int], int] = {}
    comp_var: dict[tuple[int, int], int] = {}
    binaries: list[int] = []
    offset = 0.0

    for cand in candidates:
        cid = cand.id
        lam = price_map[cid]
        big_m = cand.capacity_cap(budget)

        if fixed_config is None:
            cap_var[cid] = b.add_var(cand.unit_cost, 0.0, big_m, f"c[{cid}]")
            if not variant.zero_fixed_cost:
                install_var[cid] = b.add_var(cand.fixed_cost, 0.0, 1.0, f"y[{cid}]")
                binaries.append(install_var[cid])
                # capacity only with the install decision: c <= M y
                b.add_le(0.0, {cap_var[cid]: 1.0, install_var[cid]: -big_m}, f"link[{cid}]")
            cap_value = None
        else:
            cap_value = fixed_config.capacity.get(cid, 0.0)
            if cid in fixed_config.installed:
                offset += (0.0 if variant.zero_fixed_cost else cand.fixed_cost)
                offset += cand.unit_cost * cap_value
            elif cap_value > 0:
                raise LpStructureError(f"capacity without installation for candidate {cid}")

        rate_c = cand.kappa_c * (big_m if cap_value is None else cap_value)
        rate_d = cand.kappa_d * (big_m if cap_value is None else cap_value)
        for t in range(horizon):
            charge_var[cid, t] = b.add_var(lam[t] * dt, 0.0, rate_c, f"pc[{cid},{t}]")
            discharge_var[cid, t] = b.add_var(-lam[t] * dt, 0.0, rate_d, f"pd[{cid},{t}]")
        for t in range(horizon + 1):
            if cap_value is None:
                soc_var[cid, t] = b.add_var(0.0, 0.0, big_m, f"e[{cid},{t}]")
            else:
                soc_var[cid, t] = b.add_var(
                    0.0, cand.soc_min * cap_value, cand.soc_max * cap_value, f"e[{cid},{t}]"
                )

        if cap_value is None:
            # rate limits scale with the capacity variable
            for t in range(horizon):
                b.add_le(0.0, {charge_var[cid, t]: 1.0, cap_var[cid]: -cand.kappa_c},
                         f"ratec[{cid},{t}]")
                b.add_le(0.0, {discharge_var[cid, t]: 1.0, cap_var[cid]: -cand.kappa_d},
                         f"rated[{cid},{t}]")
            for t in range(horizon + 1):
                b.add_ge(0.0, {soc_var[cid, t]: 1.0, cap_var[cid]: -cand.soc_min},
                         f"soclo[{cid},{t}]")
                b.add_le(0.0, {soc_var[cid, t]: 1.0, cap_var[cid]: -cand.soc_max},
                         f"sochi[{cid},{t}]")
            b.add_eq(0.0, {soc_var[cid, 0]: 1.0, cap_var[cid]: -cand.start_fraction},
                     f"start[{cid}]")
            b.add_ge(0.0, {soc_var[cid, horizon]: 1.0, cap_var[cid]: -cand.start_fraction},
                     f"final[{cid}]")
        else:
            start = cand.start_fraction * cap_value
            b.add_eq(start, {soc_var[cid, 0]: 1.0}, f"start[{cid}]")
            b.add_ge(start, {soc_var[cid, horizon]: 1.0}, f"final[{cid}]")

        for t in range(horizon):
            # SOC recursion: e_{t+1} = e_t + eta_c dt pc - dt/eta_d pd
            b.add_eq(
                0.0,
                {
                    soc_var[cid, t + 1]: 1.0,
                    soc_var[cid, t]: -1.0,
                    charge_var[cid, t]: -cand.eta_c * dt,
                    discharge_var[cid, t]: dt / cand.eta_d,
                },
                f"soc[{cid},{t}]",
            )

        if variant.enforce_complementarity:
            m_c = cand.kappa_c * big_m
            m_d = cand.kappa_d * big_m
            for t in range(horizon):
                comp_var[cid, t] = b.add_var(0.0, 0.0, 1.0, f"z[{cid},{t}]")
                binaries.append(comp_var[cid, t])
                b.add_le(0.0, {charge_var[cid, t]: 1.0, comp_var[cid, t]: -m_c},
                         f"compc[{cid},{t}]")
                b.add_le(m_d, {discharge_var[cid, t]: 1.0, comp_var[cid, t]: m_d},
                         f"compd[{cid},{t}]")

    if fixed_config is None:
        # budget row: sum F y + sum G c <= A
        budget_coeffs: dict[int, float] = {}
        for cand in candidates:
            budget_coeffs[cap_var[cand.id]] = cand.unit_cost
            if cand.id in install_var:
                budget_coeffs[install_var[cand.id]] = cand.fixed_cost
        b.add_le(budget, budget_coeffs, "budget")

    return SchedulingProblem(
        milp=MilpProblem(base=b.build(), binary_vars=tuple(binaries)),
        candidates=list(candidates),
        prices=price_map,
        horizon=horizon,
        period_hours=dt,
        budget=budget,
        variant=variant,
        fixed_config=fixed_config,
        objective_offset=offset,
        cap_var=cap_var,
        install_var=install_var,
        charge_var=charge_var,
        discharge_var=discharge_var,
        soc_var=soc_var,
        comp_var=comp_var,
    )


def solve_schedule(
    problem: SchedulingProblem, options: SolverOptions | None = None
) -> ScheduleSolution:
    opts = options or SolverOptions()
    sol = solve_milp(problem.milp, opts)
    if sol.status is not LpStatus.OPTIMAL:
        return ScheduleSolution(
            status=sol.status, objective=float("nan"), investment=float("nan"),
            installed=(), capacity={}, charge={}, discharge={}, soc={}, cashflow={},
            proven_optimal=sol.proven_optimal, nodes_explored=sol.nodes_explored,
        )

    T = problem.horizon
    dt = problem.period_hours
    capacity: dict[int, float] = {}
    installed: list[int] = []
    charge: dict[int, np.ndarray] = {}
    discharge: dict[int, np.ndarray] = {}
    soc: dict[int, np.ndarray] = {}
    cashflow: dict[int, np.ndarray] = {}
    investment = 0.0

    for cand in problem.candidates:
        cid = cand.id
        if problem.fixed_config is None:
            cap = float(sol.x[problem.cap_var[cid]])
            if cid in problem.install_var:
                built = sol.x[problem.install_var[cid]] > 0.5
            else:
                built = cap > opts.int_tol
            if cap <= opts.int_tol:
                cap = 0.0
            if built:
                installed.append(cid)
                investment += (0.0 if problem.variant.zero_fixed_cost else cand.fixed_cost)
                investment += cand.unit_cost * cap
        else:
            cap = problem.fixed_config.capacity.get(cid, 0.0)
            if cid in problem.fixed_config.installed:
                installed.append(cid)
        capacity[cid] = cap
        charge[cid] = np.array([sol.x[problem.charge_var[cid, t]] for t in range(T)])
        discharge[cid] = np.array([sol.x[problem.discharge_var[cid, t]] for t in range(T)])
        soc[cid] = np.array([sol.x[problem.soc_var[cid, t]] for t in range(T + 1)])
        lam = problem.prices[cid]
        cashflow[cid] = lam * (charge[cid] - discharge[cid]) * dt

    if problem.fixed_config is not None:
        investment = problem.objective_offset
    objective = float(sol.objective_value) + problem.objective_offset

    return ScheduleSolution(
        status=LpStatus.OPTIMAL,
        objective=objective,
        investment=investment,
        installed=tuple(installed),
        capacity=capacity,
        charge=charge,
        discharge=discharge,
        soc=soc,
        cashflow=cashflow,
        proven_optimal=sol.proven_optimal,
        nodes_explored=sol.nodes_explored,
    )


def make_bids(
    schedule: ScheduleSolution,
    candidates: list[BessCandidate],
    prices,
    margin: float = 0.05,
) -> BidSet:
    """Price the planned quantities for the market.

    Discharge offers sit ``margin`` below the price that justified them,
    charge bids the same margin above (as a negative willingness to pay), so
    cleared prices at or near the planning prices still accept the plan.
    """
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    price_map = _normalize_prices(candidates, prices)
    bids = []
    for cand in candidates:
        cid = cand.id
        if cid not in schedule.charge:
            continue
        lam = price_map[cid]
        pc = schedule.charge[cid]
        pd = schedule.discharge[cid]
        zero = np.zeros_like(lam)
        bids.append(
            BatteryBid(
                battery_id=cid,
                bus=cand.bus,
                charge_price=np.minimum(-lam * (1.0 + margin), 0.0),
                discharge_price=np.maximum(lam * (1.0 - margin), 0.0),
                charge_min=zero.copy(),
                charge_max=pc.copy(),
                discharge_min=zero.copy(),
                discharge_max=pd.copy(),
            )
        )
    return BidSet(tuple(bids))


def complementarity_violation(charge, discharge) -> float:
    """Worst simultaneous charge*discharge product across batteries/periods.

    Accepts the dict-of-arrays form carried by both schedule and dispatch
    solutions, or two plain arrays.
    """
    if isinstance(charge, dict):
        worst = 0.0
        for cid, pc in charge.items():
            pd = discharge[cid]
            if np.size(pc):
                worst = max(worst, float(np.max(np.asarray(pc) * np.asarray(pd))))
        return worst
    pc = np.asarray(charge, dtype=float)
    pd = np.asarray(discharge, dtype=float)
    if pc.size == 0:
        return 0.0
    return float(np.max(pc * pd))


# ------------------------------------------------------------------- file io

_CATALOG_COLUMNS = ["id", "bus_id", "F", "G", "kc", "kd", "Sl", "Su", "etac", "etad"]


def read_catalog(path: str | Path) -> list[BessCandidate]:
    from .network import _num, _read_rows

    p = Path(path)
    out = []
    for line_num, row in _read_rows(p, _CATALOG_COLUMNS):
        cand = BessCandidate(
            id=_num(p, line_num, row, "id", int),
            bus=_num(p, line_num, row, "bus_id", int),
            fixed_cost=_num(p, line_num, row, "F"),
            unit_cost=_num(p, line_num, row, "G"),
            kappa_c=_num(p, line_num, row, "kc"),
            kappa_d=_num(p, line_num, row, "kd"),
            soc_min=_num(p, line_num, row, "Sl"),
            soc_max=_num(p, line_num, row, "Su"),
            eta_c=_num(p, line_num, row, "etac"),
            eta_d=_num(p, line_num, row, "etad"),
        )
        try:
            cand.validate()
        except LpStructureError as exc:
            raise LpStructureError(f"{p}:{line_num}: {exc}") from exc
        out.append(cand)
    if not out:
        raise LpStructureError(f"{p}: empty candidate catalog")
    return out


def write_catalog(candidates: list[BessCandidate], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CATALOG_COLUMNS)
        for c in candidates:
            w.writerow([c.id, c.bus, c.fixed_cost, c.unit_cost, c.kappa_c, c.kappa_d,
                        c.soc_min, c.soc_max, c.eta_c, c.eta_d])


def write_schedule_csv(schedule: ScheduleSolution, path: str | Path) -> None:
    """Per-period plan: battery_id, t, pc, pd, e (start-of-period), cashflow."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["battery_id", "t", "pc", "pd", "e", "cashflow"])
        for cid in schedule.charge:
            pc = schedule.charge[cid]
            for t in range(len(pc)):
                w.writerow([
                    cid, t,
                    repr(float(pc[t])),
                    repr(float(schedule.discharge[cid][t])),
                    repr(float(schedule.soc[cid][t])),
                    repr(float(schedule.cashflow[cid][t])),
                ])


def read_schedule_csv(path: str | Path):
    from .network import _num, _read_rows

    p = Path(path)
    rows: dict[int, dict[int, tuple]] = {}
    for line_num, row in _read_rows(p, ["battery_id", "t", "pc", "pd", "e", "cashflow"]):
        cid = _num(p, line_num, row, "battery_id", int)
        t = _num(p, line_num, row, "t", int)
        rows.setdefault(cid, {})[t] = (
            _num(p, line_num, row, "pc"),
            _num(p, line_num, row, "pd"),
            _num(p, line_num, row, "e"),
            _num(p, line_num, row, "cashflow"),
        )
    out = {}
    for cid, periods in rows.items():
        T = max(periods) + 1
        out[cid] = {
            "pc": np.array([periods[t][0] for t in range(T)]),
            "pd": np.array([periods[t][1] for t in range(T)]),
            "e": np.array([periods[t][2] for t in range(T)]),
            "cashflow": np.array([periods[t][3] for t in range(T)]),
        }
    return out
