"""System-operator economic dispatch: LP construction, duals, LMPs, congestion.

One LP covers a whole simulation day.  Per period there is one power-balance
equality and one two-sided range row per line; flows enter through shift
factors with the constant load contribution folded into the row bounds.
Cleared storage appears through bid variables: discharge like generation with
price >= 0, charge like negative load with price <= 0.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lp import (
    LinearProgram,
    LpBuilder,
    LpStatus,
    LpStructureError,
    SolverOptions,
    solve_lp,
)
from .network import LoadSeries, PowerNetwork, PtdfMatrix


class DispatchInfeasibleError(RuntimeError):
    """Demand cannot be met; carries the first offending period."""

    def __init__(self, period: int):
        super().__init__(f"dispatch infeasible at period {period}")
        self.period = period


@dataclass(frozen=True)
class BatteryBid:
    """Price/quantity offer of one battery for every period of the horizon."""

    battery_id: int
    bus: int
    charge_price: np.ndarray     # $/MWh, <= 0
    discharge_price: np.ndarray  # $/MWh, >= 0
    charge_min: np.ndarray
    charge_max: np.ndarray
    discharge_min: np.ndarray
    discharge_max: np.ndarray

    def validate(self, horizon: int) -> None:
        arrays = (
            self.charge_price, self.discharge_price,
            self.charge_min, self.charge_max,
            self.discharge_min, self.discharge_max,
        )
        for a in arrays:
            if a.shape != (horizon,):
                raise LpStructureError(
                    f"battery {self.battery_id}: bid arrays must have length {horizon}"
                )
        if np.any(self.charge_price > 1e-12) or np.any(self.discharge_price < -1e-12):
            raise LpStructureError(
                f"battery {self.battery_id}: need charge price <= 0 <= discharge price"
            )
        for lo, hi, kind in (
            (self.charge_min, self.charge_max, "charge"),
            (self.discharge_min, self.discharge_max, "discharge"),
        ):
            if np.any(lo < -1e-12) or np.any(lo > hi + 1e-12):
                raise LpStructureError(
                    f"battery {self.battery_id}: {kind} bounds must satisfy 0 <= lo <= hi"
                )


@dataclass(frozen=True)
class BidSet:
    bids: tuple[BatteryBid, ...] = ()

    @staticmethod
    def empty() -> "BidSet":
        return BidSet()

    def validate(self, horizon: int) -> None:
        seen = set()
        for b in self.bids:
            if b.battery_id in seen:
                raise LpStructureError(f"duplicate bid for battery {b.battery_id}")
            seen.add(b.battery_id)
            b.validate(horizon)


@dataclass
class DispatchProblem:
    """The day LP plus index maps back to physical quantities."""

    lp: LinearProgram
    net: PowerNetwork
    ptdf: PtdfMatrix
    periods: list[int]
    period_hours: float
    gen_var: dict[tuple[int, int], int]        # (gen_id, t) -> column
    charge_var: dict[tuple[int, int], int]     # (battery_id, t) -> column
    discharge_var: dict[tuple[int, int], int]
    balance_row: dict[int, int]                # t -> row
    line_row: dict[tuple[int, int], int]       # (line_id, t) -> row
    bids: BidSet
    loads: list[LoadSeries]


@dataclass
class DispatchSolution:
    problem: DispatchProblem
    gen_output: dict[tuple[int, int], float]
    charge: dict[tuple[int, int], float]
    discharge: dict[tuple[int, int], float]
    balance_dual: np.ndarray          # mu_t, indexed by position in periods
    line_dual: np.ndarray             # signed row duals, lines x periods
    flows: np.ndarray                 # MW, lines x periods
    total_cost: float
    degenerate_duals: bool
    lp_solution: object = field(repr=False, default=None)

    @property
    def pi_upper(self) -> np.ndarray:
        """Dual magnitude on the forward (upper) flow limit."""
        return np.maximum(-self.line_dual, 0.0)

    @property
    def pi_lower(self) -> np.ndarray:
        """Dual magnitude on the reverse (lower) flow limit."""
        return np.maximum(self.line_dual, 0.0)


@dataclass(frozen=True)
class LmpVector:
    """Per-bus, per-period prices; rows follow bus_ids, columns the periods."""

    values: np.ndarray
    bus_ids: tuple[int, ...]
    periods: tuple[int, ...]

    def at(self, bus_id: int) -> np.ndarray:
        return self.values[self.bus_ids.index(bus_id), :]


def _load_matrix(net: PowerNetwork, loads: list[LoadSeries], periods: list[int]) -> np.ndarray:
    index = net.bus_index()
    out = np.zeros((len(net.buses), len(periods)))
    for ls in loads:
        if ls.bus not in index:
            raise LpStructureError(f"load series references undefined bus {ls.bus}")
        for k, t in enumerate(periods):
            if t < 0 or t >= len(ls.values):
                raise LpStructureError(f"period {t} outside load horizon")
            out[index[ls.bus], k] += ls.values[t]
    return out


def build_dispatch(
    net: PowerNetwork,
    ptdf: PtdfMatrix,
    loads: list[LoadSeries],
    bids: BidSet = BidSet(),
    periods: list[int] | None = None,
    period_hours: float = 1.0,
) -> DispatchProblem:
    """Assemble the day LP: balance equality plus one line range row per period."""
    if periods is None:
        horizon = min(len(ls.values) for ls in loads) if loads else 0
        periods = list(range(horizon))
    periods = list(periods)
    if not periods:
        raise LpStructureError("empty period range")
    bids.validate(len(periods))
    index = net.bus_index()
    for b in bids.bids:
        if b.bus not in index:
            raise LpStructureError(f"bid for battery {b.battery_id} at unknown bus {b.bus}")

    load_mat = _load_matrix(net, loads, periods)
    sf = ptdf.matrix
    builder = LpBuilder()
    gen_var: dict[tuple[int, int], int] = {}
    charge_var: dict[tuple[int, int], int] = {}
    discharge_var: dict[tuple[int, int], int] = {}
    balance_row: dict[int, int] = {}
    line_row: dict[tuple[int, int], int] = {}

    for k, t in enumerate(periods):
        for g in net.generators:
            gen_var[g.id, t] = builder.add_var(g.cost, g.pmin, g.pmax, f"p[{g.id},{t}]")
        for b in bids.bids:
            charge_var[b.battery_id, t] = builder.add_var(
                float(b.charge_price[k]), float(b.charge_min[k]), float(b.charge_max[k]),
                f"pc[{b.battery_id},{t}]",
            )
            discharge_var[b.battery_id, t] = builder.add_var(
                float(b.discharge_price[k]), float(b.discharge_min[k]),
                float(b.discharge_max[k]), f"pd[{b.battery_id},{t}]",
            )

    for k, t in enumerate(periods):
        coeffs: dict[int, float] = {}
        for g in net.generators:
            coeffs[gen_var[g.id, t]] = 1.0
        for b in bids.bids:
            coeffs[discharge_var[b.battery_id, t]] = 1.0
            coeffs[charge_var[b.battery_id, t]] = -1.0
        balance_row[t] = builder.add_eq(
            float(load_mat[:, k].sum()), coeffs, f"balance[{t}]"
        )
        for li, ln in enumerate(net.lines):
            row: dict[int, float] = {}
            for g in net.generators:
                w = sf[li, index[g.bus]]
                if w != 0.0:
                    row[gen_var[g.id, t]] = row.get(gen_var[g.id, t], 0.0) + w
            for b in bids.bids:
                w = sf[li, index[b.bus]]
                if w != 0.0:
                    row[discharge_var[b.battery_id, t]] = (
                        row.get(discharge_var[b.battery_id, t], 0.0) + w
                    )
                    row[charge_var[b.battery_id, t]] = (
                        row.get(charge_var[b.battery_id, t], 0.0) - w
                    )
            shift = float(sf[li] @ load_mat[:, k])  # constant load contribution
            line_row[ln.id, t] = builder.add_range(
                -ln.limit_mw + shift, ln.limit_mw + shift, row, f"flow[{ln.id},{t}]"
            )

    return DispatchProblem(
        lp=builder.build(),
        net=net,
        ptdf=ptdf,
        periods=periods,
        period_hours=period_hours,
        gen_var=gen_var,
        charge_var=charge_var,
        discharge_var=discharge_var,
        balance_row=balance_row,
        line_row=line_row,
        bids=bids,
        loads=loads,
    )


def _first_infeasible_period(problem: DispatchProblem, opts: SolverOptions) -> int:
    # periods are uncoupled, so some single-period restriction must fail
    for t in problem.periods:
        sub = build_dispatch(
            problem.net, problem.ptdf, problem.loads, problem.bids,
            periods=[t], period_hours=problem.period_hours,
        )
        if solve_lp(sub.lp, opts).status is not LpStatus.OPTIMAL:
            return t
    return problem.periods[0]


def _basis_degenerate(sol, tol: float = 1e-9) -> bool:
    info = sol.basis_info
    if info is None:
        return False
    vals = np.concatenate([sol.x, sol.row_activity])
    for col in info.basis:
        if col >= info.num_vars + info.num_rows:
            continue
        lo, up = info.ext_lower[col], info.ext_upper[col]
        v = vals[col]
        if (np.isfinite(lo) and abs(v - lo) <= tol) or (np.isfinite(up) and abs(v - up) <= tol):
            return True
    return False


def solve_dispatch(
    problem: DispatchProblem, options: SolverOptions | None = None
) -> DispatchSolution:
    opts = options or SolverOptions()
    sol = solve_lp(problem.lp, opts)
    if sol.status is LpStatus.INFEASIBLE:
        raise DispatchInfeasibleError(_first_infeasible_period(problem, opts))
    if sol.status is not LpStatus.OPTIMAL:
        raise LpStructureError(f"dispatch LP ended with status {sol.status.value}")

    periods = problem.periods
    n_l = len(problem.net.lines)
    balance = np.array([sol.row_duals[problem.balance_row[t]] for t in periods])
    line_dual = np.zeros((n_l, len(periods)))
    flows = np.zeros((n_l, len(periods)))
    load_mat = _load_matrix(problem.net, problem.loads, periods)
    for k, t in enumerate(periods):
        for li, ln in enumerate(problem.net.lines):
            r = problem.line_row[ln.id, t]
            line_dual[li, k] = sol.row_duals[r]
            shift = float(problem.ptdf.matrix[li] @ load_mat[:, k])
            flows[li, k] = sol.row_activity[r] - shift

    return DispatchSolution(
        problem=problem,
        gen_output={key: float(sol.x[j]) for key, j in problem.gen_var.items()},
        charge={key: float(sol.x[j]) for key, j in problem.charge_var.items()},
        discharge={key: float(sol.x[j]) for key, j in problem.discharge_var.items()},
        balance_dual=balance,
        line_dual=line_dual,
        flows=flows,
        total_cost=sol.objective_value,
        degenerate_duals=_basis_degenerate(sol),
        lp_solution=sol,
    )


def extract_lmps(sol: DispatchSolution, ptdf: PtdfMatrix) -> LmpVector:
    """Bus price = balance dual + shift-factor-weighted line duals."""
    values = sol.balance_dual[None, :] + ptdf.matrix.T @ sol.line_dual
    return LmpVector(
        values=values,
        bus_ids=ptdf.bus_ids,
        periods=tuple(sol.problem.periods),
    )


def congestion_score(line_duals: np.ndarray, ptdf: PtdfMatrix) -> dict[int, float]:
    """Per-bus score: time-mean of |SF|-weighted binding-line dual magnitudes.

    ``line_duals`` is lines x periods (signed); the score is nonnegative and
    zero exactly when no line dual was ever active.
    """
    duals = np.atleast_2d(np.asarray(line_duals, dtype=float))
    if duals.shape[1] == 0:
        raise ValueError("congestion score needs at least one solved period")
    if duals.shape[0] != ptdf.matrix.shape[0]:
        raise ValueError("line dual history does not match the PTDF line count")
    per_bus = np.abs(ptdf.matrix).T @ np.abs(duals)   # buses x periods
    means = per_bus.mean(axis=1)
    return {bid: float(means[j]) for j, bid in enumerate(ptdf.bus_ids)}


def write_lmp_csv(lmp: LmpVector, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus_id", "period_index", "lmp"])
        for j, bid in enumerate(lmp.bus_ids):
            for k, t in enumerate(lmp.periods):
                w.writerow([bid, t, repr(float(lmp.values[j, k]))])


def read_lmp_csv(path: str | Path) -> LmpVector:
    from .network import _num, _read_rows

    p = Path(path)
    entries: dict[tuple[int, int], float] = {}
    bus_ids: list[int] = []
    periods: list[int] = []
    for line_num, row in _read_rows(p, ["bus_id", "period_index", "lmp"]):
        bid = _num(p, line_num, row, "bus_id", int)
        t = _num(p, line_num, row, "period_index", int)
        if bid not in bus_ids:
            bus_ids.append(bid)
        if t not in periods:
            periods.append(t)
        entries[bid, t] = _num(p, line_num, row, "lmp")
    values = np.zeros((len(bus_ids), len(periods)))
    for (bid, t), v in entries.items():
        values[bus_ids.index(bid), periods.index(t)] = v
    return LmpVector(values=values, bus_ids=tuple(bus_ids), periods=tuple(periods))


def write_congestion_csv(scores: dict[int, float], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus_id", "score"])
        for bid in scores:
            w.writerow([bid, repr(float(scores[bid]))])


def read_congestion_csv(path: str | Path) -> dict[int, float]:
    from .network import _num, _read_rows

    p = Path(path)
    out: dict[int, float] = {}
    for line_num, row in _read_rows(p, ["bus_id", "score"]):
        out[_num(p, line_num, row, "bus_id", int)] = _num(p, line_num, row, "score")
    return out
