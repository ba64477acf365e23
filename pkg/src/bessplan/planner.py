"""Investment search over battery sites and sizes.

Candidate placements start from congestion-weighted sampling, each trial
simulates the settlement loop day by day to put a net-present-value return
on a configuration, and a density-ratio proposer (with a pure random
baseline) decides what to try next.  Histories persist as JSON lines plus
a summary CSV so a search can be audited or replayed.
"""
import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dispatch import build_dispatch, congestion_score, extract_lmps, solve_dispatch
from .market import AusParams, SettlementError, run_aus
from .network import LoadSeries, PowerNetwork, PtdfMatrix
from .scheduling import (
    BessCandidate,
    BessConfig,
    build_schedule,
    solve_schedule,
)


@dataclass(frozen=True)
class HorizonSpec:
    """How simulated days map onto discounted calendar time."""

    day_length: int = 24          # periods per simulation day
    years: int = 1                # whole-year repetitions of the base pattern
    discount_rate: float = 0.05   # annual
    peak_fraction: float = 1.0    # fraction of days actually simulated
    days_per_year: int = 365

    def validate(self) -> None:
        if self.day_length < 1:
            raise ValueError("day length must be at least one period")
        if self.years < 1:
            raise ValueError("need at least one year")
        if self.discount_rate < 0.0:
            raise ValueError("discount rate must be non-negative")
        if not 0.0 < self.peak_fraction <= 1.0:
            raise ValueError("peak-day fraction must lie in (0, 1]")
        if self.days_per_year < 1:
            raise ValueError("days per year must be positive")


@dataclass(frozen=True)
class SearchSpace:
    catalog: tuple[BessCandidate, ...]
    max_sites: int
    budget: float
    capacity_range: tuple[float, float] | None = None

    def validate(self) -> None:
        if not self.catalog:
            raise ValueError("search space has no candidate sites")
        if not 1 <= self.max_sites <= len(self.catalog):
            raise ValueError("max_sites must lie between 1 and the catalog size")
        if self.budget <= 0.0:
            raise ValueError("budget must be positive")
        if self.capacity_range is not None:
            lo, hi = self.capacity_range
            if not 0.0 <= lo <= hi:
                raise ValueError("capacity range must satisfy 0 <= lo <= hi")
            best = max(c.capacity_cap(self.budget) for c in self.catalog)
            if lo > best + 1e-9:
                raise ValueError("capacity range lies above what the budget allows")

    def cap_bounds(self, cand: BessCandidate) -> tuple[float, float]:
        """Capacity interval for one site alone under the budget."""
        hi = cand.capacity_cap(self.budget)
        lo = 0.0
        if self.capacity_range is not None:
            lo, r_hi = self.capacity_range
            hi = min(hi, r_hi)
            lo = min(lo, hi)
        return lo, hi


@dataclass(frozen=True)
class Trial:
    config: BessConfig
    R: float                      # NPV of arbitrage cashflows minus investment
    scores: dict[int, float]      # refreshed per-bus congestion snapshot
    wall_time: float
    failed: bool = False


@dataclass
class SearchHistory:
    trials: list[Trial] = field(default_factory=list)

    @property
    def best_index(self) -> int:
        if not self.trials:
            raise ValueError("empty history has no best trial")
        returns = [t.R for t in self.trials]
        return int(np.argmax(returns))

    def best(self) -> Trial:
        return self.trials[self.best_index]


def npv(cashflows, annual_rate: float, days_per_year: int = 365) -> float:
    """Discounted sum of a dense per-day cashflow array (day 0 undiscounted)."""
    if annual_rate < 0.0:
        raise ValueError("discount rate must be non-negative")
    cf = np.asarray(cashflows, dtype=float)
    if cf.size == 0:
        return 0.0
    days = np.arange(cf.size)
    return float(np.sum(cf / (1.0 + annual_rate) ** (days / days_per_year)))


def select_peak_days(day_scores, fraction: float) -> tuple[int, ...]:
    """Indices of the top ceil(fraction * D) days by score, ties to lower index."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    scores = list(day_scores)
    keep = math.ceil(fraction * len(scores))
    ranked = sorted(range(len(scores)), key=lambda d: (-scores[d], d))[:keep]
    return tuple(sorted(ranked))


def _site_weights(
    candidates: list[BessCandidate], scores: dict[int, float]
) -> np.ndarray:
    missing = [c.bus for c in candidates if c.bus not in scores]
    if missing:
        raise ValueError(f"congestion scores missing for buses {sorted(set(missing))}")
    w = np.array([scores[c.bus] for c in candidates], dtype=float)
    if np.any(w < 0.0):
        raise ValueError("congestion scores must be non-negative")
    return w


def congestion_seed(
    space: SearchSpace,
    scores: dict[int, float],
    n: int,
    rng: np.random.Generator,
) -> list[BessConfig]:
    """Draw n single-site configs, sites without replacement, odds by score.

    When the remaining scores are all zero the draw falls back to uniform.
    Capacities are uniform within what the budget allows at the site.
    """
    space.validate()
    if not 1 <= n <= len(space.catalog):
        raise ValueError(f"cannot seed {n} configs from {len(space.catalog)} sites")
    remaining = list(space.catalog)
    weights = _site_weights(remaining, scores)
    configs = []
    for _ in range(n):
        total = weights.sum()
        probs = weights / total if total > 0.0 else np.full(len(remaining), 1.0 / len(remaining))
        pick = int(rng.choice(len(remaining), p=probs))
        cand = remaining.pop(pick)
        weights = np.delete(weights, pick)
        lo, hi = space.cap_bounds(cand)
        cap = lo + float(rng.random()) * (hi - lo)
        config = BessConfig(installed=(cand.id,), capacity={cand.id: cap}, budget=space.budget)
        config.validate({c.id: c for c in space.catalog})
        configs.append(config)
    return configs


def uniform_scores(space: SearchSpace) -> dict[int, float]:
    return {c.bus: 1.0 for c in space.catalog}


@dataclass(frozen=True)
class TpeParams:
    gamma: float = 0.15       # quantile separating good from bad trials
    n_startup: int = 10       # seeded trials before the model kicks in
    n_ei: int = 24            # candidate proposals scored per suggestion
    smoothing: float = 1.0    # Laplace count added to site frequencies


def _kde_pdf(x: float, obs: list[float], lo: float, hi: float) -> float:
    """Gaussian kernels at the observations, truncated to [lo, hi], blended
    with one uniform pseudo-observation so sparse sides keep bounded ratios."""
    if hi <= lo:
        return 1.0
    uniform = 1.0 / (hi - lo)
    if not obs:
        return uniform
    arr = np.asarray(obs, dtype=float)
    spread = float(arr.std())
    bw = max(1.06 * spread * len(arr) ** -0.2, (hi - lo) / 20.0, 1e-9)
    z = (x - arr) / bw
    dens = np.exp(-0.5 * z * z) / (bw * math.sqrt(2.0 * math.pi))
    mass = _norm_cdf((hi - arr) / bw) - _norm_cdf((lo - arr) / bw)
    mass = np.maximum(mass, 1e-12)
    return float((np.sum(dens / mass) + uniform) / (len(obs) + 1))


def _norm_cdf(z):
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(z) / math.sqrt(2.0)))


def _repair_budget(
    space: SearchSpace,
    sites: list[BessCandidate],
    caps: dict[int, float],
    include_p: dict[int, float],
) -> tuple[list[BessCandidate], dict[int, float]]:
    """Drop least-favored sites, then shrink capacities, until affordable."""
    sites = sorted(sites, key=lambda c: (-include_p[c.id], c.id))
    while sites and sum(c.fixed_cost for c in sites) > space.budget:
        sites.pop()
    if not sites:
        return [], {}
    fixed = sum(c.fixed_cost for c in sites)
    variable = sum(c.unit_cost * caps[c.id] for c in sites)
    room = space.budget - fixed
    if variable > room:
        shrink = room / variable if variable > 0.0 else 0.0
        caps = {c.id: caps[c.id] * shrink for c in sites}
    return sites, {c.id: caps[c.id] for c in sites}


def tpe_suggest(
    history: SearchHistory,
    space: SearchSpace,
    rng: np.random.Generator,
    params: TpeParams = TpeParams(),
    fallback_scores: dict[int, float] | None = None,
) -> BessConfig:
    """Propose the config with the best good/bad density ratio.

    Below the startup count this degenerates to the congestion-seeded
    sampler.  Site inclusion is modeled per site as a smoothed frequency;
    capacity as a truncated kernel density over observed values.  Every
    proposal is repaired to fit the budget before scoring.
    """
    space.validate()
    trials = history.trials
    if len(trials) < params.n_startup:
        scores = fallback_scores if fallback_scores else uniform_scores(space)
        return congestion_seed(space, scores, 1, rng)[0]

    order = sorted(range(len(trials)), key=lambda i: (-trials[i].R, i))
    n_good = max(1, math.ceil(params.gamma * len(trials)))
    good = [trials[i] for i in order[:n_good]]
    bad = [trials[i] for i in order[n_good:]]

    s = params.smoothing
    p_good, p_bad = {}, {}
    obs_good, obs_bad = {}, {}
    for cand in space.catalog:
        hits_g = [t for t in good if cand.id in t.config.installed]
        hits_b = [t for t in bad if cand.id in t.config.installed]
        p_good[cand.id] = (len(hits_g) + s) / (len(good) + 2.0 * s)
        p_bad[cand.id] = (len(hits_b) + s) / (len(bad) + 2.0 * s)
        obs_good[cand.id] = [t.config.capacity[cand.id] for t in hits_g]
        obs_bad[cand.id] = [t.config.capacity[cand.id] for t in hits_b]

    best_config, best_score = None, -np.inf
    for _ in range(params.n_ei):
        sites = [c for c in space.catalog if rng.random() < p_good[c.id]]
        if not sites:
            sites = [max(space.catalog, key=lambda c: (p_good[c.id], -c.id))]
        if len(sites) > space.max_sites:
            sites = sorted(sites, key=lambda c: (-p_good[c.id], c.id))[: space.max_sites]
        caps = {}
        for cand in sites:
            lo, hi = space.cap_bounds(cand)
            pool = obs_good[cand.id]
            if pool:
                center = float(pool[int(rng.integers(len(pool)))])
                draw = center + float(rng.normal()) * max((hi - lo) / 20.0, 1e-9)
                caps[cand.id] = float(np.clip(draw, lo, hi))
            else:
                caps[cand.id] = lo + float(rng.random()) * (hi - lo)
        sites, caps = _repair_budget(space, sites, caps, p_good)
        if not sites:
            continue

        log_ratio = 0.0
        chosen = {c.id for c in sites}
        for cand in space.catalog:
            if cand.id in chosen:
                log_ratio += math.log(p_good[cand.id]) - math.log(p_bad[cand.id])
                lo, hi = space.cap_bounds(cand)
                dens_g = _kde_pdf(caps[cand.id], obs_good[cand.id], lo, hi)
                dens_b = _kde_pdf(caps[cand.id], obs_bad[cand.id], lo, hi)
                log_ratio += math.log(max(dens_g, 1e-12)) - math.log(max(dens_b, 1e-12))
            else:
                log_ratio += math.log(1.0 - p_good[cand.id]) - math.log(1.0 - p_bad[cand.id])
        if log_ratio > best_score:
            best_score = log_ratio
            ordered = tuple(sorted(chosen))
            best_config = BessConfig(
                installed=ordered,
                capacity={cid: caps[cid] for cid in ordered},
                budget=space.budget,
            )

    if best_config is None:
        scores = fallback_scores if fallback_scores else uniform_scores(space)
        return congestion_seed(space, scores, 1, rng)[0]
    best_config.validate({c.id: c for c in space.catalog})
    return best_config


def _day_periods(d: int, day_length: int) -> list[int]:
    return list(range(d * day_length, (d + 1) * day_length))


def _num_days(loads: list[LoadSeries], day_length: int) -> int:
    horizon = len(loads[0].values)
    for ls in loads:
        if len(ls.values) != horizon:
            raise ValueError("load series lengths differ")
    if horizon % day_length != 0:
        raise ValueError(
            f"load horizon {horizon} is not a whole number of {day_length}-period days"
        )
    return horizon // day_length


def daily_congestion_scores(
    net: PowerNetwork,
    ptdf: PtdfMatrix,
    loads: list[LoadSeries],
    day_length: int,
) -> list[float]:
    """Aggregate no-battery congestion score per day, for peak-day picking."""
    totals = []
    for d in range(_num_days(loads, day_length)):
        sol = solve_dispatch(
            build_dispatch(net, ptdf, loads, periods=_day_periods(d, day_length))
        )
        per_bus = congestion_score(sol.line_dual, ptdf)
        totals.append(float(sum(per_bus.values())))
    return totals


def _discount_days(profits: list[float], days: list[int], horizon: HorizonSpec) -> float:
    """Lay simulated days onto the calendar, repeat per year, and discount."""
    if not profits:
        return 0.0
    span = (horizon.years - 1) * horizon.days_per_year + max(days) + 1
    dense = np.zeros(span)
    for year in range(horizon.years):
        for profit, d in zip(profits, days):
            dense[year * horizon.days_per_year + d] += profit
    return npv(dense, horizon.discount_rate, horizon.days_per_year)


def evaluate_config(
    config: BessConfig,
    net: PowerNetwork,
    ptdf: PtdfMatrix,
    loads: list[LoadSeries],
    catalog: list[BessCandidate],
    horizon: HorizonSpec,
    aus_params: AusParams = AusParams(),
    days: list[int] | None = None,
) -> Trial:
    """Simulate the settlement loop day by day and score the investment.

    The return R is the discounted sum of each day's settled arbitrage
    profit minus the up-front investment.  Any day that fails to settle
    marks the whole trial failed with R = -inf; the trial stays usable
    as a bad example for the proposer.
    """
    horizon.validate()
    start = time.perf_counter()
    catalog_map = {c.id: c for c in catalog}
    config.validate(catalog_map)
    if days is None:
        days = list(range(_num_days(loads, horizon.day_length)))

    profits = []
    all_duals = []
    for d in days:
        periods = _day_periods(d, horizon.day_length)
        try:
            out = run_aus(net, ptdf, loads, catalog, config, aus_params, periods=periods)
        except SettlementError:
            return Trial(
                config=config, R=-np.inf, scores={},
                wall_time=time.perf_counter() - start, failed=True,
            )
        profits.append(-out.state.owner_costs[-1])
        all_duals.append(out.dispatch.line_dual)

    scores = congestion_score(np.hstack(all_duals), ptdf)
    value = _discount_days(profits, days, horizon) - config.investment(catalog_map)
    return Trial(
        config=config, R=value, scores=scores,
        wall_time=time.perf_counter() - start, failed=False,
    )


def make_evaluator(
    net: PowerNetwork,
    ptdf: PtdfMatrix,
    loads: list[LoadSeries],
    catalog: list[BessCandidate],
    horizon: HorizonSpec,
    aus_params: AusParams = AusParams(),
):
    """Bind the grid data into a config -> Trial callable for run_search."""
    horizon.validate()
    if horizon.peak_fraction < 1.0:
        day_scores = daily_congestion_scores(net, ptdf, loads, horizon.day_length)
        days = list(select_peak_days(day_scores, horizon.peak_fraction))
    else:
        days = None

    def evaluate(config: BessConfig) -> Trial:
        return evaluate_config(
            config, net, ptdf, loads, catalog, horizon, aus_params, days=days
        )

    return evaluate


def run_search(
    space: SearchSpace,
    evaluator,
    n_trials: int,
    method: str = "tpe",
    seed: int = 0,
    tpe_params: TpeParams = TpeParams(),
    initial_scores: dict[int, float] | None = None,
) -> SearchHistory:
    """Sequential search; only the proposer differs between methods.

    ``random`` ignores congestion information entirely; ``tpe`` seeds its
    startup trials from the latest congestion snapshot and then proposes
    by density ratio.
    """
    if n_trials < 1:
        raise ValueError("need a positive trial budget")
    if method not in ("tpe", "random"):
        raise ValueError(f"unknown search method {method!r}")
    space.validate()
    rng = np.random.default_rng(seed)
    scores = dict(initial_scores) if initial_scores else uniform_scores(space)

    history = SearchHistory()
    for _ in range(n_trials):
        if method == "random":
            config = congestion_seed(space, uniform_scores(space), 1, rng)[0]
        else:
            config = tpe_suggest(history, space, rng, tpe_params, fallback_scores=scores)
        trial = evaluator(config)
        history.trials.append(trial)
        if not trial.failed and trial.scores:
            scores = trial.scores
    return history


def compare_lmp_impact(
    config: BessConfig,
    net: PowerNetwork,
    ptdf: PtdfMatrix,
    loads: list[LoadSeries],
    catalog: list[BessCandidate],
    horizon: HorizonSpec,
    aus_params: AusParams = AusParams(),
) -> dict[str, float]:
    """Price-feedback return vs. the naive fixed-price return.

    The fixed-price figure schedules once against no-battery prices and
    settles the plan at those same prices, ignoring that dispatching the
    battery moves the prices it trades on.
    """
    horizon.validate()
    catalog_map = {c.id: c for c in catalog}
    config.validate(catalog_map)
    days = list(range(_num_days(loads, horizon.day_length)))

    with_impact = evaluate_config(
        config, net, ptdf, loads, catalog, horizon, aus_params, days=days
    )

    profits = []
    for d in days:
        periods = _day_periods(d, horizon.day_length)
        bare = solve_dispatch(build_dispatch(net, ptdf, loads, periods=periods))
        lmps = extract_lmps(bare, ptdf)
        prices = {c.id: lmps.at(c.bus) for c in catalog}
        sched = solve_schedule(
            build_schedule(catalog, prices, config.budget, fixed_config=config)
        )
        profits.append(-sum(float(cf.sum()) for cf in sched.cashflow.values()))
    fixed = _discount_days(profits, days, horizon) - config.investment(catalog_map)

    return {"R_with_impact": with_impact.R, "R_fixed_price": fixed}


def write_history_jsonl(history: SearchHistory, path: str | Path) -> None:
    """One trial per line; wall time is deliberately left out so that
    identical runs produce identical bytes."""
    lines = []
    for i, t in enumerate(history.trials):
        lines.append(
            json.dumps(
                {
                    "trial": i,
                    "R": t.R,
                    "installed": list(t.config.installed),
                    "capacity": {str(k): v for k, v in sorted(t.config.capacity.items())},
                    "budget": t.config.budget,
                    "scores": {str(k): v for k, v in sorted(t.scores.items())},
                    "failed": t.failed,
                }
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_history_jsonl(path: str | Path) -> SearchHistory:
    history = SearchHistory()
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        config = BessConfig(
            installed=tuple(rec["installed"]),
            capacity={int(k): float(v) for k, v in rec["capacity"].items()},
            budget=float(rec["budget"]),
        )
        history.trials.append(
            Trial(
                config=config,
                R=float(rec["R"]),
                scores={int(k): float(v) for k, v in rec["scores"].items()},
                wall_time=0.0,
                failed=bool(rec["failed"]),
            )
        )
    return history


def write_summary_csv(history: SearchHistory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "R", "sites", "capacities"])
        for i, t in enumerate(history.trials):
            sites = ";".join(str(c) for c in t.config.installed)
            caps = ";".join(repr(t.config.capacity[c]) for c in t.config.installed)
            writer.writerow([i, repr(t.R), sites, caps])


def read_summary_csv(path: str | Path) -> list[tuple[int, float, tuple[int, ...], tuple[float, ...]]]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            sites = tuple(int(s) for s in rec["sites"].split(";") if s)
            caps = tuple(float(c) for c in rec["capacities"].split(";") if c)
            rows.append((int(rec["trial"]), float(rec["R"]), sites, caps))
    return rows
