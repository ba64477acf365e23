"""Self-contained LP/MILP toolkit: bounded simplex, duals, ranging, B&B."""
from .checks import KktReport, kkt_report
from .dump import dump_lp, parse_lp
from .milp import solve_milp
from .model import (
    AT_LOWER,
    AT_UPPER,
    BASIC,
    FREE_NONBASIC,
    BasisInfo,
    LinearProgram,
    LpBuilder,
    LpSolution,
    LpStatus,
    LpStructureError,
    MilpProblem,
    MilpSolution,
    RowKind,
    SensitivityRange,
    SolverFailureError,
)
from .sensitivity import objective_range
from .simplex import SolverOptions, solve_lp

__all__ = [
    "AT_LOWER",
    "AT_UPPER",
    "BASIC",
    "BasisInfo",
    "FREE_NONBASIC",
    "KktReport",
    "LinearProgram",
    "LpBuilder",
    "LpSolution",
    "LpStatus",
    "LpStructureError",
    "MilpProblem",
    "MilpSolution",
    "RowKind",
    "SensitivityRange",
    "SolverFailureError",
    "SolverOptions",
    "dump_lp",
    "kkt_report",
    "objective_range",
    "parse_lp",
    "solve_lp",
    "solve_milp",
]
