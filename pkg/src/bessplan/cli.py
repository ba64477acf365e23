"""Command-line front end: ingestion, single solves, settlement runs, searches.

Every subcommand builds the same request models the HTTP service accepts and
either calls the handlers in process (default) or POSTs to a running server
(``--server``).  Artifacts are written with the repo's own writers so they
round-trip through the repo's own parsers.

Options resolve as: explicit flag > config-file entry > built-in default.
The output directory additionally honours the BESSPLAN_OUT environment
variable (flag > BESSPLAN_OUT > config > current directory); no other
setting has an environment override.

Exit codes: 0 success; 1 input error; 2 infeasible (dispatch, budget, or
settlement abort); 3 settlement loop hit its iteration cap without the
prices converging.
"""
import functools
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from .dispatch import DispatchInfeasibleError, read_lmp_csv, write_congestion_csv, write_lmp_csv
from .lp import LpStatus
from .market import SettlementError
from .network import PtdfMatrix, load_case, load_series, write_ptdf_csv
from .planner import write_history_jsonl, write_summary_csv
from .scheduling import BudgetError, ScheduleSolution, read_catalog, write_schedule_csv
from .service import core, models

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_NO_CONVERGENCE = 3

_HANDLERS = {
    "/ptdf": (core.handle_ptdf, models.PtdfResponse),
    "/dispatch": (core.handle_dispatch, models.DispatchResponse),
    "/schedule": (core.handle_schedule, models.ScheduleResponse),
    "/aus": (core.handle_aus, models.AusResponse),
    "/search": (core.handle_search, models.SearchResponse),
}


class ServerError(RuntimeError):
    """Non-200 reply from a remote server; carries the HTTP status."""

    def __init__(self, status: int, detail):
        super().__init__(f"HTTP {status}: {detail}")
        self.status = status
        self.detail = detail


@dataclass
class RunConfig:
    """Shared config file: defaults for any flag, resolved relative to it."""

    values: dict = field(default_factory=dict)
    base: Path = field(default_factory=Path)

    @staticmethod
    def load(path) -> "RunConfig":
        if path is None:
            return RunConfig()
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file {p} does not exist")
        data = json.loads(p.read_text())
        if not isinstance(data, dict):
            raise ValueError(f"config file {p} must hold a JSON object")
        return RunConfig(values=data, base=p.parent)

    def get(self, key: str, flag, default=None):
        if flag is not None:
            return flag
        return self.values.get(key, default)

    def path(self, key: str, flag, required: bool = False) -> Path | None:
        """Flag paths are relative to the cwd, config paths to the config."""
        if flag is not None:
            out = Path(flag)
        elif key in self.values:
            out = self.base / self.values[key]
        elif required:
            raise ValueError(f"missing required input: --{key.replace('_', '-')}")
        else:
            return None
        if not out.exists():
            raise FileNotFoundError(f"{key} path {out} does not exist")
        return out

    def out_dir(self, flag) -> Path:
        env = os.environ.get("BESSPLAN_OUT")
        if flag is not None:
            out = Path(flag)
        elif env:
            out = Path(env)
        elif "out" in self.values:
            out = self.base / self.values["out"]
        else:
            out = Path(".")
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"output directory {out} is not writable")
        return out


def call(server: str | None, path: str, request):
    """Run a request in process, or against a server when one is given."""
    handler, resp_type = _HANDLERS[path]
    if not server:
        return handler(request)
    import httpx

    reply = httpx.post(
        server.rstrip("/") + path,
        json=request.model_dump(mode="json"),
        timeout=600.0,
    )
    if reply.status_code != 200:
        try:
            detail = reply.json().get("detail", reply.text)
        except ValueError:
            detail = reply.text
        raise ServerError(reply.status_code, detail)
    return resp_type.model_validate(reply.json())


def run_command(fn):
    """Map domain errors to exit codes; success paths return their own."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except (DispatchInfeasibleError, BudgetError, SettlementError) as exc:
            click.echo(f"infeasible: {exc}", err=True)
            sys.exit(EXIT_INFEASIBLE)
        except ServerError as exc:
            click.echo(f"server error: {exc}", err=True)
            sys.exit(EXIT_INFEASIBLE if exc.status == 409 else EXIT_INPUT)
        except (OSError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        sys.exit(code)

    return wrapper


def _case_models(case_dir: Path, period_hours: float):
    net = load_case(case_dir)
    loads = load_series(case_dir, period_hours)
    return (
        models.NetworkModel.from_network(net),
        [models.LoadSeriesModel(bus=ls.bus, values=ls.values.tolist()) for ls in loads],
    )


def _day_periods(day, day_length: int) -> list[int] | None:
    if day is None:
        return None
    if day < 0 or day_length < 1:
        raise ValueError("day index and day length must be non-negative")
    return list(range(day * day_length, (day + 1) * day_length))


def _schedule_solution(resp: models.ScheduleResponse) -> ScheduleSolution:
    return ScheduleSolution(
        status=LpStatus[resp.status],
        objective=resp.objective,
        investment=resp.investment,
        installed=tuple(resp.installed),
        capacity=dict(resp.capacity),
        charge={p.id: np.asarray(p.charge) for p in resp.plans},
        discharge={p.id: np.asarray(p.discharge) for p in resp.plans},
        soc={p.id: np.asarray(p.soc) for p in resp.plans},
        cashflow={p.id: np.asarray(p.cashflow) for p in resp.plans},
        proven_optimal=resp.proven_optimal,
        nodes_explored=resp.nodes_explored,
    )


def _write_trace(resp: models.AusResponse, path: Path) -> None:
    payload = {
        "converged": resp.converged,
        "iterations": resp.iterations,
        "final_delta": resp.final_delta,
        "oscillation": resp.oscillation,
        "rounds": [r.model_dump() for r in resp.rounds],
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _bess_config(path: Path) -> models.ConfigModel:
    data = json.loads(path.read_text())
    try:
        return models.ConfigModel.model_validate(data)
    except Exception as exc:
        raise ValueError(f"bad battery config {path}: {exc}") from exc


_config_opt = click.option(
    "--config", "config_path", default=None,
    help="JSON file with defaults for any flag; flags win.",
)
_server_opt = click.option(
    "--server", default=None, help="Base URL of a running server; default in-process."
)
_out_opt = click.option("--out", "out_flag", default=None, help="Output directory.")


@click.group()
def cli():
    """Planning toolkit for battery storage in a wholesale energy market."""


@cli.command()
@_config_opt
@click.option("--case", "case_flag", default=None, help="Case directory of CSV files.")
@_out_opt
@_server_opt
@run_command
def ptdf(config_path, case_flag, out_flag, server):
    """Write the line-to-bus sensitivity matrix for a case."""
    cfg = RunConfig.load(config_path)
    case = cfg.path("case", case_flag, required=True)
    out = cfg.out_dir(out_flag)
    net_model, _ = _case_models(case, 1.0)
    resp = call(
        cfg.get("server", server), "/ptdf", models.PtdfRequest(network=net_model)
    )
    matrix = PtdfMatrix(
        matrix=np.asarray(resp.matrix),
        line_ids=tuple(resp.line_ids),
        bus_ids=tuple(resp.bus_ids),
    )
    write_ptdf_csv(matrix, out / "ptdf.csv")
    click.echo(f"wrote {out / 'ptdf.csv'}")
    return EXIT_OK


@cli.command()
@_config_opt
@click.option("--case", "case_flag", default=None, help="Case directory of CSV files.")
@click.option("--period-hours", "period_hours", type=float, default=None)
@click.option("--day", type=int, default=None, help="Solve one day only.")
@click.option("--day-length", "day_length", type=int, default=None)
@_out_opt
@_server_opt
@run_command
def dispatch(config_path, case_flag, period_hours, day, day_length, out_flag, server):
    """Solve one battery-free dispatch; write price and congestion CSVs."""
    cfg = RunConfig.load(config_path)
    case = cfg.path("case", case_flag, required=True)
    out = cfg.out_dir(out_flag)
    hours = cfg.get("period_hours", period_hours, 1.0)
    net_model, load_models = _case_models(case, hours)
    req = models.DispatchRequest(
        network=net_model,
        loads=load_models,
        period_hours=hours,
        periods=_day_periods(
            cfg.get("day", day), cfg.get("day_length", day_length, 24)
        ),
    )
    resp = call(cfg.get("server", server), "/dispatch", req)
    write_lmp_csv(resp.to_lmps(), out / "lmp.csv")
    write_congestion_csv(resp.congestion, out / "congestion.csv")
    click.echo(
        f"dispatch cost {resp.total_cost:.6f}; wrote lmp.csv, congestion.csv to {out}"
    )
    return EXIT_OK


@cli.command()
@_config_opt
@click.option("--catalog", "catalog_flag", default=None, help="Candidate CSV file.")
@click.option("--prices", "prices_flag", default=None, help="Price CSV (lmp.csv).")
@click.option("--budget", type=float, default=None)
@click.option("--period-hours", "period_hours", type=float, default=None)
@click.option("--zero-fixed-cost", is_flag=True, default=False)
@click.option("--enforce-complementarity", is_flag=True, default=False)
@_out_opt
@_server_opt
@run_command
def schedule(config_path, catalog_flag, prices_flag, budget, period_hours,
             zero_fixed_cost, enforce_complementarity, out_flag, server):
    """Optimise siting, sizing, and operation against fixed prices."""
    cfg = RunConfig.load(config_path)
    catalog = read_catalog(cfg.path("catalog", catalog_flag, required=True))
    lmps = read_lmp_csv(cfg.path("prices", prices_flag, required=True))
    out = cfg.out_dir(out_flag)
    budget = cfg.get("budget", budget)
    if budget is None:
        raise ValueError("missing required input: --budget")
    req = models.ScheduleRequest(
        catalog=[models.CandidateModel.from_candidate(c) for c in catalog],
        prices=[
            models.PriceSeriesModel(id=c.id, values=lmps.at(c.bus).tolist())
            for c in catalog
        ],
        budget=budget,
        period_hours=cfg.get("period_hours", period_hours, 1.0),
        variant=models.VariantModel(
            zero_fixed_cost=zero_fixed_cost or cfg.get("zero_fixed_cost", None, False),
            enforce_complementarity=enforce_complementarity
            or cfg.get("enforce_complementarity", None, False),
        ),
    )
    resp = call(cfg.get("server", server), "/schedule", req)
    write_schedule_csv(_schedule_solution(resp), out / "schedule.csv")
    if resp.status != "OPTIMAL":
        click.echo(f"schedule {resp.status}", err=True)
        return EXIT_INFEASIBLE
    click.echo(
        f"objective {resp.objective:.6f} (investment {resp.investment:.6f}); "
        f"installed {resp.installed}; wrote schedule.csv to {out}"
    )
    return EXIT_OK


@cli.command()
@_config_opt
@click.option("--case", "case_flag", default=None, help="Case directory of CSV files.")
@click.option("--catalog", "catalog_flag", default=None, help="Candidate CSV file.")
@click.option("--bess", "bess_flag", default=None,
              help="JSON with installed sites, capacities, and budget.")
@click.option("--epsilon", type=float, default=None)
@click.option("--max-iter", "max_iter", type=int, default=None)
@click.option("--bid-margin", "bid_margin", type=float, default=None)
@click.option("--period-hours", "period_hours", type=float, default=None)
@click.option("--day", type=int, default=None)
@click.option("--day-length", "day_length", type=int, default=None)
@_out_opt
@_server_opt
@run_command
def aus(config_path, case_flag, catalog_flag, bess_flag, epsilon, max_iter,
        bid_margin, period_hours, day, day_length, out_flag, server):
    """Alternate owner scheduling and market clearing to a fixed point."""
    cfg = RunConfig.load(config_path)
    hours = cfg.get("period_hours", period_hours, 1.0)
    net_model, load_models = _case_models(
        cfg.path("case", case_flag, required=True), hours
    )
    catalog = read_catalog(cfg.path("catalog", catalog_flag, required=True))
    config = _bess_config(cfg.path("bess", bess_flag, required=True))
    out = cfg.out_dir(out_flag)
    req = models.AusRequest(
        network=net_model,
        loads=load_models,
        catalog=[models.CandidateModel.from_candidate(c) for c in catalog],
        config=config,
        params=models.AusParamsModel(
            epsilon=cfg.get("epsilon", epsilon, 1e-3),
            max_iter=cfg.get("max_iter", max_iter, 10),
            bid_margin=cfg.get("bid_margin", bid_margin, 0.05),
        ),
        period_hours=hours,
        periods=_day_periods(
            cfg.get("day", day), cfg.get("day_length", day_length, 24)
        ),
    )
    resp = call(cfg.get("server", server), "/aus", req)
    _write_trace(resp, out / "trace.json")
    write_lmp_csv(resp.to_lmps(), out / "lmp.csv")
    write_schedule_csv(_schedule_solution(resp.schedule), out / "schedule.csv")
    click.echo(
        f"{'converged' if resp.converged else 'did not converge'} after "
        f"{resp.iterations} iterations (final delta {resp.final_delta:.6g}); "
        f"wrote trace.json, lmp.csv, schedule.csv to {out}"
    )
    return EXIT_OK if resp.converged else EXIT_NO_CONVERGENCE


@cli.command()
@_config_opt
@click.option("--case", "case_flag", default=None, help="Case directory of CSV files.")
@click.option("--catalog", "catalog_flag", default=None, help="Candidate CSV file.")
@click.option("--budget", type=float, default=None)
@click.option("--max-sites", "max_sites", type=int, default=None)
@click.option("--capacity-min", "capacity_min", type=float, default=None)
@click.option("--capacity-max", "capacity_max", type=float, default=None)
@click.option("--method", type=click.Choice(["tpe", "random"]), default=None)
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None,
              help="Worker threads per trial (default: all cores); "
                   "--threads 1 guarantees determinism.")
@click.option("--day-length", "day_length", type=int, default=None)
@click.option("--years", type=int, default=None)
@click.option("--discount-rate", "discount_rate", type=float, default=None)
@click.option("--peak-fraction", "peak_fraction", type=float, default=None)
@click.option("--days-per-year", "days_per_year", type=int, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--max-iter", "max_iter", type=int, default=None)
@click.option("--bid-margin", "bid_margin", type=float, default=None)
@click.option("--period-hours", "period_hours", type=float, default=None)
@click.option("--fixed-price", "fixed_price", is_flag=True, default=False,
              help="Also report the return the best config would show if "
                   "prices ignored the battery's own dispatch.")
@_out_opt
@_server_opt
@run_command
def search(config_path, case_flag, catalog_flag, budget, max_sites, capacity_min,
           capacity_max, method, trials, seed, threads, day_length, years,
           discount_rate, peak_fraction, days_per_year, epsilon, max_iter,
           bid_margin, period_hours, fixed_price, out_flag, server):
    """Search battery sitings and sizings for the best discounted return."""
    cfg = RunConfig.load(config_path)
    hours = cfg.get("period_hours", period_hours, 1.0)
    net_model, load_models = _case_models(
        cfg.path("case", case_flag, required=True), hours
    )
    catalog = read_catalog(cfg.path("catalog", catalog_flag, required=True))
    out = cfg.out_dir(out_flag)
    budget = cfg.get("budget", budget)
    if budget is None:
        raise ValueError("missing required input: --budget")
    cap_lo = cfg.get("capacity_min", capacity_min)
    cap_hi = cfg.get("capacity_max", capacity_max)
    if (cap_lo is None) != (cap_hi is None):
        raise ValueError("--capacity-min and --capacity-max go together")
    req = models.SearchRequest(
        network=net_model,
        loads=load_models,
        catalog=[models.CandidateModel.from_candidate(c) for c in catalog],
        max_sites=cfg.get("max_sites", max_sites, 1),
        budget=budget,
        capacity_range=None if cap_lo is None else (cap_lo, cap_hi),
        horizon=models.HorizonModel(
            day_length=cfg.get("day_length", day_length, 24),
            years=cfg.get("years", years, 1),
            discount_rate=cfg.get("discount_rate", discount_rate, 0.05),
            peak_fraction=cfg.get("peak_fraction", peak_fraction, 1.0),
            days_per_year=cfg.get("days_per_year", days_per_year, 365),
        ),
        params=models.AusParamsModel(
            epsilon=cfg.get("epsilon", epsilon, 1e-3),
            max_iter=cfg.get("max_iter", max_iter, 10),
            bid_margin=cfg.get("bid_margin", bid_margin, 0.05),
        ),
        method=cfg.get("method", method, "tpe"),
        n_trials=cfg.get("trials", trials, 10),
        seed=cfg.get("seed", seed, 0),
        threads=cfg.get("threads", threads, os.cpu_count() or 1),
        period_hours=hours,
        fixed_price=fixed_price or cfg.get("fixed_price", None, False),
    )
    resp = call(cfg.get("server", server), "/search", req)
    history = core.history_from_response(resp)
    write_history_jsonl(history, out / "history.jsonl")
    write_summary_csv(history, out / "summary.csv")
    artifacts = "history.jsonl, summary.csv"
    if resp.comparison is not None:
        (out / "comparison.json").write_text(
            json.dumps(resp.comparison, indent=2, sort_keys=True) + "\n"
        )
        artifacts += ", comparison.json"
    best = resp.trials[resp.best_index]
    if best.failed or best.R is None:
        click.echo("no trial settled successfully", err=True)
        return EXIT_INFEASIBLE
    click.echo(
        f"best trial {best.trial}: R {best.R:.6f} at sites {best.installed}; "
        f"wrote {artifacts} to {out}"
    )
    return EXIT_OK


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


def main(argv=None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(EXIT_INPUT)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_INPUT)
    except click.exceptions.Abort:
        sys.exit(EXIT_INPUT)
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
