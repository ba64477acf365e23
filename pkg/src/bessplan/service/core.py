"""Request handlers shared by the HTTP app and the in-process CLI client.

Each handler turns a request model into core objects, runs the solver, and
packs the result back into the matching response model.  Domain exceptions
pass through untouched; the HTTP layer and the CLI map them to status codes
and exit codes respectively.
"""
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..dispatch import congestion_score, extract_lmps, build_dispatch, solve_dispatch
from ..market import AusOutcome, AusParams, run_aus
from ..network import compute_ptdf
from ..planner import (
    HorizonSpec,
    SearchHistory,
    SearchSpace,
    Trial,
    compare_lmp_impact,
    daily_congestion_scores,
    evaluate_config,
    run_search,
    select_peak_days,
)
from ..scheduling import build_schedule, solve_schedule
from .models import (
    AusRequest,
    AusResponse,
    DispatchRequest,
    DispatchResponse,
    FlowSeriesModel,
    LmpSeriesModel,
    PlanModel,
    PtdfRequest,
    PtdfResponse,
    RoundModel,
    ScheduleRequest,
    ScheduleResponse,
    SearchRequest,
    SearchResponse,
    TrialModel,
)


def handle_ptdf(req: PtdfRequest) -> PtdfResponse:
    ptdf = compute_ptdf(req.network.to_network())
    return PtdfResponse(
        line_ids=list(ptdf.line_ids),
        bus_ids=list(ptdf.bus_ids),
        matrix=ptdf.matrix.tolist(),
    )


def handle_dispatch(req: DispatchRequest) -> DispatchResponse:
    net = req.network.to_network()
    ptdf = compute_ptdf(net)
    loads = [ls.to_series(req.period_hours) for ls in req.loads]
    sol = solve_dispatch(
        build_dispatch(
            net, ptdf, loads,
            bids=req.to_bids(), periods=req.periods, period_hours=req.period_hours,
        )
    )
    lmps = extract_lmps(sol, ptdf)
    return DispatchResponse(
        total_cost=sol.total_cost,
        periods=list(lmps.periods),
        lmps=[
            LmpSeriesModel(bus=b, values=lmps.at(b).tolist()) for b in lmps.bus_ids
        ],
        congestion=congestion_score(sol.line_dual, ptdf),
        flows=[
            FlowSeriesModel(line=l, values=sol.flows[i, :].tolist())
            for i, l in enumerate(ptdf.line_ids)
        ],
        degenerate_duals=sol.degenerate_duals,
    )


def _schedule_response(sol) -> ScheduleResponse:
    plans = [
        PlanModel(
            id=cid,
            charge=sol.charge[cid].tolist(),
            discharge=sol.discharge[cid].tolist(),
            soc=sol.soc[cid].tolist(),
            cashflow=sol.cashflow[cid].tolist(),
        )
        for cid in sorted(sol.charge)
    ]
    objective = sol.objective if math.isfinite(sol.objective) else 0.0
    return ScheduleResponse(
        status=sol.status.name,
        objective=objective,
        investment=sol.investment if math.isfinite(sol.investment) else 0.0,
        installed=list(sol.installed),
        capacity=dict(sol.capacity),
        plans=plans,
        proven_optimal=sol.proven_optimal,
        nodes_explored=sol.nodes_explored,
    )


def handle_schedule(req: ScheduleRequest) -> ScheduleResponse:
    catalog = [c.to_candidate() for c in req.catalog]
    prices = {p.id: np.asarray(p.values) for p in req.prices}
    fixed = req.fixed_config.to_config() if req.fixed_config is not None else None
    sol = solve_schedule(
        build_schedule(
            catalog, prices, req.budget,
            variant=req.variant.to_variant(),
            fixed_config=fixed,
            period_hours=req.period_hours,
        )
    )
    return _schedule_response(sol)


def _aus_response(outcome: AusOutcome) -> AusResponse:
    state = outcome.state
    rounds = [
        RoundModel(
            k=j,
            delta=None if j == 0 else state.delta_history[j - 1],
            iso_cost=state.iso_costs[j],
            owner_cost=state.owner_costs[j],
            lmp_mean_by_bus={
                str(b): state.lmp_means[j][i]
                for i, b in enumerate(state.lmps.bus_ids)
            },
        )
        for j in range(state.iteration + 1)
    ]
    return AusResponse(
        converged=outcome.report.converged,
        iterations=outcome.report.iterations,
        final_delta=outcome.report.final_delta,
        oscillation=outcome.report.oscillation,
        rounds=rounds,
        lmps=[
            LmpSeriesModel(bus=b, values=state.lmps.at(b).tolist())
            for b in state.lmps.bus_ids
        ],
        periods=list(state.lmps.periods),
        schedule=_schedule_response(outcome.schedule),
    )


def handle_aus(req: AusRequest) -> AusResponse:
    net = req.network.to_network()
    ptdf = compute_ptdf(net)
    loads = [ls.to_series(req.period_hours) for ls in req.loads]
    catalog = [c.to_candidate() for c in req.catalog]
    params = AusParams(
        epsilon=req.params.epsilon,
        max_iter=req.params.max_iter,
        bid_margin=req.params.bid_margin,
    )
    outcome = run_aus(
        net, ptdf, loads, catalog, req.config.to_config(), params,
        periods=req.periods, period_hours=req.period_hours,
    )
    return _aus_response(outcome)


def make_parallel_evaluator(
    net, ptdf, loads, catalog, horizon, aus_params, threads: int = 1
):
    """Config -> Trial callable; with threads > 1 the simulated days of a
    trial run concurrently, reduced in day order so results do not depend
    on scheduling."""
    horizon.validate()
    if horizon.peak_fraction < 1.0:
        day_scores = daily_congestion_scores(net, ptdf, loads, horizon.day_length)
        days = list(select_peak_days(day_scores, horizon.peak_fraction))
    else:
        days = None

    if threads <= 1:
        def evaluate(config) -> Trial:
            return evaluate_config(
                config, net, ptdf, loads, catalog, horizon, aus_params, days=days
            )
        return evaluate

    def evaluate_threaded(config) -> Trial:
        all_days = days if days is not None else list(
            range(len(loads[0].values) // horizon.day_length)
        )

        def one_day(d: int) -> Trial:
            return evaluate_config(
                config, net, ptdf, loads, catalog, horizon, aus_params, days=[d]
            )

        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one_day, all_days))
        if any(p.failed for p in parts):
            return Trial(
                config=config, R=-np.inf, scores={},
                wall_time=sum(p.wall_time for p in parts), failed=True,
            )
        # Per-day trials each subtract the investment and discount their own
        # day; summing the R's therefore needs the investment added back for
        # all but one day.  Scores merge by summation over days.
        catalog_map = {c.id: c for c in catalog}
        investment = config.investment(catalog_map)
        value = sum(p.R for p in parts) + investment * (len(parts) - 1)
        scores: dict[int, float] = {}
        for p in parts:
            for bus, s in p.scores.items():
                scores[bus] = scores.get(bus, 0.0) + s
        n = len(parts)
        scores = {bus: s / n for bus, s in scores.items()}
        return Trial(
            config=config, R=value, scores=scores,
            wall_time=sum(p.wall_time for p in parts), failed=False,
        )

    return evaluate_threaded


def _trial_model(i: int, t: Trial) -> TrialModel:
    return TrialModel(
        trial=i,
        R=t.R if math.isfinite(t.R) else None,
        installed=list(t.config.installed),
        capacity={k: t.config.capacity[k] for k in sorted(t.config.capacity)},
        budget=t.config.budget,
        scores={k: t.scores[k] for k in sorted(t.scores)},
        failed=t.failed,
    )


def handle_search(req: SearchRequest) -> SearchResponse:
    net = req.network.to_network()
    ptdf = compute_ptdf(net)
    loads = [ls.to_series(req.period_hours) for ls in req.loads]
    catalog = [c.to_candidate() for c in req.catalog]
    space = SearchSpace(
        catalog=tuple(catalog),
        max_sites=req.max_sites,
        budget=req.budget,
        capacity_range=req.capacity_range,
    )
    horizon = HorizonSpec(
        day_length=req.horizon.day_length,
        years=req.horizon.years,
        discount_rate=req.horizon.discount_rate,
        peak_fraction=req.horizon.peak_fraction,
        days_per_year=req.horizon.days_per_year,
    )
    aus_params = AusParams(
        epsilon=req.params.epsilon,
        max_iter=req.params.max_iter,
        bid_margin=req.params.bid_margin,
    )
    evaluator = make_parallel_evaluator(
        net, ptdf, loads, catalog, horizon, aus_params, threads=req.threads
    )
    history = run_search(
        space, evaluator, req.n_trials, method=req.method, seed=req.seed
    )
    comparison = None
    if req.fixed_price and any(not t.failed for t in history.trials):
        comparison = compare_lmp_impact(
            history.best().config, net, ptdf, loads, catalog, horizon, aus_params
        )
    return SearchResponse(
        trials=[_trial_model(i, t) for i, t in enumerate(history.trials)],
        best_index=history.best_index,
        comparison=comparison,
    )


def history_from_response(resp: SearchResponse) -> SearchHistory:
    """Rebuild a SearchHistory (without wall times) from the wire form."""
    from ..scheduling import BessConfig

    trials = []
    for tm in resp.trials:
        config = BessConfig(
            installed=tuple(tm.installed),
            capacity=dict(tm.capacity),
            budget=tm.budget,
        )
        trials.append(
            Trial(
                config=config,
                R=tm.R if tm.R is not None else -np.inf,
                scores=dict(tm.scores),
                wall_time=0.0,
                failed=tm.failed,
            )
        )
    return SearchHistory(trials=trials)
