"""Plain-text round-trip format for LP instances, for debugging and bug reports.

Layout::

    lp <num_vars> <num_rows>
    obj <c0> <c1> ...
    bnd <lower> <upper>            (one line per variable, in order)
    row <kind> <lower> <upper> <col>:<coeff> ...

Floats use ``repr`` so a dump/parse cycle reproduces the instance exactly.
"""
from __future__ import annotations

import numpy as np

from .model import LinearProgram, LpStructureError, RowKind


def _fmt(v: float) -> str:
    if v == float("inf"):
        return "inf"
    if v == float("-inf"):
        return "-inf"
    return repr(float(v))


def dump_lp(lp: LinearProgram) -> str:
    lines = [f"lp {lp.num_vars} {lp.num_rows}"]
    lines.append("obj " + " ".join(_fmt(c) for c in lp.objective))
    for lo, up in zip(lp.lower, lp.upper):
        lines.append(f"bnd {_fmt(lo)} {_fmt(up)}")
    for (cols, vals), kind, lo, up in zip(lp.rows, lp.row_kinds, lp.row_lower, lp.row_upper):
        coeffs = " ".join(f"{c}:{_fmt(v)}" for c, v in zip(cols, vals))
        lines.append(f"row {kind.value} {_fmt(lo)} {_fmt(up)} {coeffs}".rstrip())
    return "\n".join(lines) + "\n"


def parse_lp(text: str) -> LinearProgram:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("lp "):
        raise LpStructureError("dump must start with an 'lp <vars> <rows>' header")
    try:
        _, n_s, m_s = lines[0].split()
        n, m = int(n_s), int(m_s)
    except ValueError as exc:
        raise LpStructureError(f"bad header line: {lines[0]!r}") from exc
    if len(lines) != 2 + n + m:
        raise LpStructureError(
            f"expected {2 + n + m} lines for {n} vars / {m} rows, got {len(lines)}"
        )

    obj_parts = lines[1].split()
    if obj_parts[0] != "obj" or len(obj_parts) != n + 1:
        raise LpStructureError("objective line malformed")
    objective = np.array([float(p) for p in obj_parts[1:]])

    lower = np.empty(n)
    upper = np.empty(n)
    for j in range(n):
        parts = lines[2 + j].split()
        if parts[0] != "bnd" or len(parts) != 3:
            raise LpStructureError(f"bound line {j} malformed: {lines[2 + j]!r}")
        lower[j], upper[j] = float(parts[1]), float(parts[2])

    rows, kinds = [], []
    row_lower = np.empty(m)
    row_upper = np.empty(m)
    for i in range(m):
        parts = lines[2 + n + i].split()
        if parts[0] != "row" or len(parts) < 4:
            raise LpStructureError(f"row line {i} malformed: {lines[2 + n + i]!r}")
        try:
            kinds.append(RowKind(parts[1]))
        except ValueError as exc:
            raise LpStructureError(f"row line {i}: unknown kind {parts[1]!r}") from exc
        row_lower[i], row_upper[i] = float(parts[2]), float(parts[3])
        cols, vals = [], []
        for tok in parts[4:]:
            c_s, _, v_s = tok.partition(":")
            cols.append(int(c_s))
            vals.append(float(v_s))
        rows.append((np.array(cols, dtype=int), np.array(vals)))

    lp = LinearProgram(
        objective=objective,
        rows=rows,
        row_kinds=kinds,
        row_lower=row_lower,
        row_upper=row_upper,
        lower=lower,
        upper=upper,
    )
    lp.validate()
    return lp
