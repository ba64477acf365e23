"""Network data model, CSV case ingestion, and PTDF (shift factor) computation.

A case directory holds ``buses.csv``, ``lines.csv``, ``generators.csv`` and
``loads.csv``.  Shift factors use the DC approximation: lossless lines, unit
voltage magnitudes, per-unit reactance.  The slack bus is either marked in
``buses.csv`` (``slack`` column) or defaults to the lowest-id generator bus,
and its PTDF column is identically zero.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CaseFormatError(ValueError):
    """Unreadable or inconsistent case data; message carries file and line."""


@dataclass(frozen=True)
class Bus:
    id: int
    name: str = ""


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    reactance: float
    limit_mw: float


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    cost: float       # $/MWh marginal cost
    pmin: float
    pmax: float


@dataclass(frozen=True)
class LoadSeries:
    bus: int
    values: np.ndarray      # MW per period
    period_hours: float = 1.0


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    slack_bus: int

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    def validate(self) -> None:
        ids = self.bus_ids
        if len(set(ids)) != len(ids):
            raise CaseFormatError("duplicate bus ids")
        known = set(ids)
        if self.slack_bus not in known:
            raise CaseFormatError(f"slack bus {self.slack_bus} is not a defined bus")
        for ln in self.lines:
            if ln.from_bus not in known:
                raise CaseFormatError(f"line {ln.id} references undefined bus {ln.from_bus}")
            if ln.to_bus not in known:
                raise CaseFormatError(f"line {ln.id} references undefined bus {ln.to_bus}")
            if ln.reactance <= 0:
                raise CaseFormatError(f"line {ln.id} has nonpositive reactance {ln.reactance}")
            if ln.limit_mw <= 0:
                raise CaseFormatError(f"line {ln.id} has nonpositive limit {ln.limit_mw}")
        for g in self.generators:
            if g.bus not in known:
                raise CaseFormatError(f"generator {g.id} references undefined bus {g.bus}")
            if not 0 <= g.pmin <= g.pmax:
                raise CaseFormatError(
                    f"generator {g.id} needs 0 <= pmin <= pmax, got [{g.pmin}, {g.pmax}]"
                )
        unreachable = self._unreachable_from(self.slack_bus)
        if unreachable:
            raise CaseFormatError(
                "network is disconnected; unreachable from slack: "
                + ", ".join(str(b) for b in sorted(unreachable))
            )

    def _unreachable_from(self, start: int) -> set[int]:
        adj: dict[int, set[int]] = {b.id: set() for b in self.buses}
        for ln in self.lines:
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
        seen = {start}
        stack = [start]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return set(self.bus_ids) - seen


@dataclass(frozen=True)
class PtdfMatrix:
    """Dense shift factors: rows follow net.lines, columns follow net.buses."""

    matrix: np.ndarray
    line_ids: tuple[int, ...]
    bus_ids: tuple[int, ...]

    def column(self, bus_id: int) -> np.ndarray:
        return self.matrix[:, self.bus_ids.index(bus_id)]


# ----------------------------------------------------------------- ingestion

def _read_rows(path: Path, required: list[str]):
    if not path.exists():
        raise CaseFormatError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise CaseFormatError(f"{path}: missing columns {', '.join(missing)}")
        for row in reader:
            yield reader.line_num, row


def _num(path: Path, line: int, row: dict, col: str, cast=float):
    raw = (row.get(col) or "").strip()
    try:
        return cast(raw)
    except ValueError as exc:
        raise CaseFormatError(f"{path}:{line}: bad value {raw!r} in column {col}") from exc


def load_case(case_dir: str | Path) -> PowerNetwork:
    """Read buses/lines/generators CSVs and return a validated network."""
    case = Path(case_dir)
    buses: list[Bus] = []
    slack_marks: list[int] = []
    bus_path = case / "buses.csv"
    for line_num, row in _read_rows(bus_path, ["bus_id"]):
        bid = _num(bus_path, line_num, row, "bus_id", int)
        buses.append(Bus(id=bid, name=(row.get("name") or "").strip()))
        if (row.get("slack") or "").strip() in {"1", "true", "yes"}:
            slack_marks.append(bid)

    lines: list[Line] = []
    line_path = case / "lines.csv"
    for line_num, row in _read_rows(
        line_path, ["line_id", "from_bus", "to_bus", "reactance", "limit_mw"]
    ):
        lines.append(
            Line(
                id=_num(line_path, line_num, row, "line_id", int),
                from_bus=_num(line_path, line_num, row, "from_bus", int),
                to_bus=_num(line_path, line_num, row, "to_bus", int),
                reactance=_num(line_path, line_num, row, "reactance"),
                limit_mw=_num(line_path, line_num, row, "limit_mw"),
            )
        )
        if lines[-1].reactance <= 0:
            raise CaseFormatError(
                f"{line_path}:{line_num}: nonpositive reactance for line {lines[-1].id}"
            )

    gens: list[Generator] = []
    gen_path = case / "generators.csv"
    for line_num, row in _read_rows(gen_path, ["gen_id", "bus_id", "cost", "pmax_mw"]):
        has_pmin = (row.get("pmin_mw") or "").strip() != ""
        gens.append(
            Generator(
                id=_num(gen_path, line_num, row, "gen_id", int),
                bus=_num(gen_path, line_num, row, "bus_id", int),
                cost=_num(gen_path, line_num, row, "cost"),
                pmin=_num(gen_path, line_num, row, "pmin_mw") if has_pmin else 0.0,
                pmax=_num(gen_path, line_num, row, "pmax_mw"),
            )
        )

    if len(slack_marks) > 1:
        raise CaseFormatError(f"{bus_path}: multiple slack buses marked: {slack_marks}")
    if slack_marks:
        slack = slack_marks[0]
    elif gens:
        slack = min(g.bus for g in gens)
    elif buses:
        slack = min(b.id for b in buses)
    else:
        raise CaseFormatError(f"{bus_path}: no buses defined")

    net = PowerNetwork(
        buses=tuple(buses), lines=tuple(lines), generators=tuple(gens), slack_bus=slack
    )
    net.validate()
    return net


def load_series(case_dir: str | Path, period_hours: float = 1.0) -> list[LoadSeries]:
    """Read long-format loads.csv (bus_id, period_index, load_mw)."""
    path = Path(case_dir) / "loads.csv"
    per_bus: dict[int, dict[int, float]] = {}
    for line_num, row in _read_rows(path, ["bus_id", "period_index", "load_mw"]):
        bid = _num(path, line_num, row, "bus_id", int)
        t = _num(path, line_num, row, "period_index", int)
        mw = _num(path, line_num, row, "load_mw")
        if t < 0:
            raise CaseFormatError(f"{path}:{line_num}: negative period index {t}")
        if mw < 0:
            raise CaseFormatError(f"{path}:{line_num}: negative load {mw} at bus {bid}")
        per_bus.setdefault(bid, {})
        if t in per_bus[bid]:
            raise CaseFormatError(f"{path}:{line_num}: duplicate period {t} for bus {bid}")
        per_bus[bid][t] = mw

    out: list[LoadSeries] = []
    for bid in sorted(per_bus):
        periods = per_bus[bid]
        horizon = max(periods) + 1
        if sorted(periods) != list(range(horizon)):
            raise CaseFormatError(f"{path}: bus {bid} has gaps in its period series")
        vals = np.array([periods[t] for t in range(horizon)])
        out.append(LoadSeries(bus=bid, values=vals, period_hours=period_hours))
    return out


def validate_series(net: PowerNetwork, loads: list[LoadSeries]) -> int:
    """Check loads against the network; returns the common horizon length T."""
    known = set(net.bus_ids)
    stray = [ls.bus for ls in loads if ls.bus not in known]
    if stray:
        raise CaseFormatError(
            "load series reference undefined buses: " + ", ".join(map(str, sorted(set(stray))))
        )
    horizons = {ls.bus: len(ls.values) for ls in loads}
    if not horizons:
        raise CaseFormatError("no load series supplied")
    lengths = set(horizons.values())
    if len(lengths) > 1:
        longest = max(lengths)
        bad = sorted(b for b, h in horizons.items() if h != longest)
        raise CaseFormatError(
            f"load series horizons differ (lengths {sorted(lengths)}); "
            f"offending buses: {', '.join(map(str, bad))}"
        )
    for ls in loads:
        if np.any(ls.values < 0):
            raise CaseFormatError(f"negative load in series for bus {ls.bus}")
    return lengths.pop()


# ----------------------------------------------------------------- shift factors

def compute_ptdf(net: PowerNetwork) -> PtdfMatrix:
    """Shift factors from the reduced susceptance system.

    Line flow response is ``b_l (theta_from - theta_to)`` with ``b_l = 1/x_l``;
    angles come from inverting the slack-reduced bus susceptance matrix.
    """
    net.validate()
    n_bus = len(net.buses)
    n_line = len(net.lines)
    index = net.bus_index()
    slack_pos = index[net.slack_bus]

    incidence = np.zeros((n_line, n_bus))
    suscept = np.zeros(n_line)
    for k, ln in enumerate(net.lines):
        incidence[k, index[ln.from_bus]] = 1.0
        incidence[k, index[ln.to_bus]] = -1.0
        suscept[k] = 1.0 / ln.reactance

    laplacian = incidence.T @ (suscept[:, None] * incidence)
    keep = [k for k in range(n_bus) if k != slack_pos]
    reduced = laplacian[np.ix_(keep, keep)]
    try:
        theta_sens = np.linalg.solve(reduced, np.eye(len(keep)))
    except np.linalg.LinAlgError as exc:
        raise CaseFormatError(
            "singular reduced susceptance system; check connectivity"
        ) from exc

    sf = np.zeros((n_line, n_bus))
    sf[:, keep] = (suscept[:, None] * incidence[:, keep]) @ theta_sens
    sf[:, slack_pos] = 0.0
    return PtdfMatrix(
        matrix=sf,
        line_ids=tuple(ln.id for ln in net.lines),
        bus_ids=tuple(net.bus_ids),
    )


def write_ptdf_csv(ptdf: PtdfMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id", "bus_id", "factor"])
        for i, lid in enumerate(ptdf.line_ids):
            for j, bid in enumerate(ptdf.bus_ids):
                w.writerow([lid, bid, repr(float(ptdf.matrix[i, j]))])


def read_ptdf_csv(path: str | Path) -> PtdfMatrix:
    entries: dict[tuple[int, int], float] = {}
    line_ids: list[int] = []
    bus_ids: list[int] = []
    p = Path(path)
    for line_num, row in _read_rows(p, ["line_id", "bus_id", "factor"]):
        lid = _num(p, line_num, row, "line_id", int)
        bid = _num(p, line_num, row, "bus_id", int)
        if lid not in line_ids:
            line_ids.append(lid)
        if bid not in bus_ids:
            bus_ids.append(bid)
        entries[lid, bid] = _num(p, line_num, row, "factor")
    mat = np.zeros((len(line_ids), len(bus_ids)))
    for (lid, bid), v in entries.items():
        mat[line_ids.index(lid), bus_ids.index(bid)] = v
    return PtdfMatrix(matrix=mat, line_ids=tuple(line_ids), bus_ids=tuple(bus_ids))
