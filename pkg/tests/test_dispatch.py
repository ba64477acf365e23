"""Economic dispatch, LMP extraction, and congestion scoring."""
import numpy as np
import pytest

from bessplan.dispatch import (
    BatteryBid,
    BidSet,
    DispatchInfeasibleError,
    build_dispatch,
    congestion_score,
    extract_lmps,
    read_congestion_csv,
    read_lmp_csv,
    solve_dispatch,
    write_congestion_csv,
    write_lmp_csv,
)
from bessplan.lp import LpStructureError, RowKind, kkt_report, objective_range
from bessplan.network import (
    Bus,
    Generator,
    Line,
    LoadSeries,
    PowerNetwork,
    compute_ptdf,
)

from gridgen import random_grid


def two_bus_net(limit=60.0, gen2_cost=30.0):
    net = PowerNetwork(
        buses=(Bus(1), Bus(2)),
        lines=(Line(1, 1, 2, 0.1, limit),),
        generators=(
            Generator(1, 1, 10.0, 0.0, 200.0),
            Generator(2, 2, gen2_cost, 0.0, 200.0),
        ),
        slack_bus=1,
    )
    net.validate()
    return net, compute_ptdf(net)


def one_period_loads(bus=2, mw=100.0, horizon=1):
    return [LoadSeries(bus=bus, values=np.full(horizon, mw))]


def flat_bid(battery_id, bus, horizon, price_c=0.0, price_d=0.0, cap_c=0.0, cap_d=0.0):
    z = np.zeros(horizon)
    return BatteryBid(
        battery_id=battery_id,
        bus=bus,
        charge_price=np.full(horizon, price_c),
        discharge_price=np.full(horizon, price_d),
        charge_min=z.copy(),
        charge_max=np.full(horizon, cap_c),
        discharge_min=z.copy(),
        discharge_max=np.full(horizon, cap_d),
    )


class TestStructure:
    def test_row_and_var_counts(self):
        net, ptdf = two_bus_net()
        prob = build_dispatch(net, ptdf, one_period_loads())
        # per period: 1 balance equality + 1 range row per line
        assert prob.lp.num_rows == 2
        assert prob.lp.num_vars == 2
        assert prob.lp.row_kinds[prob.balance_row[0]] is RowKind.EQ
        assert prob.lp.row_kinds[prob.line_row[1, 0]] is RowKind.RANGE

    def test_multi_period_counts(self):
        net, ptdf = two_bus_net()
        prob = build_dispatch(net, ptdf, one_period_loads(horizon=4))
        assert prob.lp.num_rows == 4 * 2
        assert prob.lp.num_vars == 4 * 2

    def test_zero_quantity_battery_cost_unchanged(self):
        net, ptdf = two_bus_net()
        loads = one_period_loads()
        base = solve_dispatch(build_dispatch(net, ptdf, loads))
        bids = BidSet((flat_bid(1, 2, 1),))
        with_bid = solve_dispatch(build_dispatch(net, ptdf, loads, bids))
        assert with_bid.total_cost == pytest.approx(base.total_cost, abs=1e-9)

    def test_unknown_battery_bus_rejected(self):
        net, ptdf = two_bus_net()
        bids = BidSet((flat_bid(1, 77, 1),))
        with pytest.raises(LpStructureError, match="77"):
            build_dispatch(net, ptdf, one_period_loads(), bids)

    def test_bad_bid_signs_rejected(self):
        net, ptdf = two_bus_net()
        bid = flat_bid(1, 2, 1, price_c=5.0)  # positive charge price is irrational
        with pytest.raises(LpStructureError, match="charge price"):
            build_dispatch(net, ptdf, one_period_loads(), BidSet((bid,)))


class TestSolve:
    def test_uncongested_marginal_pricing(self):
        net, ptdf = two_bus_net(limit=150.0)
        sol = solve_dispatch(build_dispatch(net, ptdf, one_period_loads()))
        assert sol.gen_output[1, 0] == pytest.approx(100.0, abs=1e-8)
        assert sol.balance_dual[0] == pytest.approx(10.0, abs=1e-8)
        np.testing.assert_allclose(sol.line_dual, 0.0, atol=1e-9)
        lmp = extract_lmps(sol, ptdf)
        np.testing.assert_allclose(lmp.values[:, 0], [10.0, 10.0], atol=1e-8)

    def test_congested_split_and_duals(self):
        net, ptdf = two_bus_net(limit=60.0)
        sol = solve_dispatch(build_dispatch(net, ptdf, one_period_loads()))
        assert sol.gen_output[1, 0] == pytest.approx(60.0, abs=1e-8)
        assert sol.gen_output[2, 0] == pytest.approx(40.0, abs=1e-8)
        assert sol.total_cost == pytest.approx(1800.0, abs=1e-6)
        assert abs(sol.flows[0, 0]) == pytest.approx(60.0, abs=1e-8)
        # exactly one side of the limit is binding
        assert (sol.pi_upper[0, 0] > 0) != (sol.pi_lower[0, 0] > 0)
        lmp = extract_lmps(sol, ptdf)
        np.testing.assert_allclose(lmp.at(1), [10.0], atol=1e-6)
        np.testing.assert_allclose(lmp.at(2), [30.0], atol=1e-6)

    def test_zero_load_sits_at_minimums(self):
        net = PowerNetwork(
            buses=(Bus(1), Bus(2)),
            lines=(Line(1, 1, 2, 0.1, 60.0),),
            generators=(
                Generator(1, 1, 10.0, 5.0, 200.0),
                Generator(2, 2, 30.0, 3.0, 200.0),
            ),
            slack_bus=1,
        )
        ptdf = compute_ptdf(net)
        loads = [LoadSeries(bus=2, values=np.array([8.0]))]  # exactly the minimums
        sol = solve_dispatch(build_dispatch(net, ptdf, loads))
        assert sol.total_cost == pytest.approx(10 * 5 + 30 * 3, abs=1e-7)

    def test_infeasible_names_period(self):
        net, ptdf = two_bus_net()
        loads = [LoadSeries(bus=2, values=np.array([100.0, 1000.0, 100.0]))]
        with pytest.raises(DispatchInfeasibleError) as err:
            solve_dispatch(build_dispatch(net, ptdf, loads))
        assert err.value.period == 1

    def test_cleared_battery_appears_in_balance(self):
        net, ptdf = two_bus_net(limit=60.0)
        # battery at the expensive bus offers 20 MW below the local price
        bids = BidSet((flat_bid(1, 2, 1, price_d=25.0, cap_d=20.0),))
        sol = solve_dispatch(build_dispatch(net, ptdf, one_period_loads(), bids))
        assert sol.discharge[1, 0] == pytest.approx(20.0, abs=1e-8)
        assert sol.gen_output[2, 0] == pytest.approx(20.0, abs=1e-8)
        assert sol.total_cost == pytest.approx(10 * 60 + 25 * 20 + 30 * 20, abs=1e-6)


class TestLmpProperties:
    @pytest.mark.parametrize("seed", range(8))
    def test_kkt_on_random_grids(self, seed):
        rng = np.random.default_rng(100 + seed)
        net, ptdf, loads = random_grid(rng, tight_lines=seed % 2 == 0)
        prob = build_dispatch(net, ptdf, loads)
        sol = solve_dispatch(prob)
        assert kkt_report(prob.lp, sol.lp_solution).ok()

    @pytest.mark.parametrize("seed", range(10))
    def test_lmp_matches_load_perturbation(self, seed):
        rng = np.random.default_rng(300 + seed)
        net, ptdf, loads = random_grid(rng, horizon=2, tight_lines=seed % 3 == 0)
        sol = solve_dispatch(build_dispatch(net, ptdf, loads))
        if sol.degenerate_duals:
            return
        lmp = extract_lmps(sol, ptdf)
        bus = int(rng.choice(net.bus_ids))
        t = int(rng.integers(0, 2))
        bumped = [
            LoadSeries(
                bus=ls.bus,
                values=ls.values + (1.0 if ls.bus == bus else 0.0) * (np.arange(len(ls.values)) == t),
            )
            for ls in loads
        ]
        if bus not in [ls.bus for ls in loads]:
            bumped.append(LoadSeries(bus=bus, values=1.0 * (np.arange(2) == t)))
        try:
            resolved = solve_dispatch(build_dispatch(net, ptdf, bumped))
        except DispatchInfeasibleError:
            return
        fd = resolved.total_cost - sol.total_cost
        price = lmp.at(bus)[t]
        assert fd == pytest.approx(price, abs=0.01 * max(1.0, abs(price)))

    def test_merchandising_surplus_equals_congestion_rent(self):
        net, ptdf = two_bus_net(limit=60.0)
        bids = BidSet((flat_bid(1, 2, 1, price_d=25.0, cap_d=15.0),))
        sol = solve_dispatch(build_dispatch(net, ptdf, one_period_loads(), bids))
        lmp = extract_lmps(sol, ptdf)
        index = net.bus_index()
        net_inj = np.zeros(2)
        for (g, _), p in sol.gen_output.items():
            gen = next(x for x in net.generators if x.id == g)
            net_inj[index[gen.bus]] += p
        net_inj[index[2]] += sol.discharge[1, 0] - sol.charge[1, 0]
        net_inj[index[2]] -= 100.0
        surplus = -float(lmp.values[:, 0] @ net_inj)
        rent = float(
            ((sol.pi_upper[:, 0] + sol.pi_lower[:, 0]) * np.array([ln.limit_mw for ln in net.lines])).sum()
        )
        assert surplus == pytest.approx(rent, abs=1e-6)

    def test_bid_coefficient_range_keeps_primal_and_affine_lmp(self):
        net, ptdf = two_bus_net(limit=60.0)
        bids = BidSet((flat_bid(1, 2, 1, price_d=25.0, cap_d=20.0),))
        prob = build_dispatch(net, ptdf, one_period_loads(), bids)
        sol = solve_dispatch(prob)
        j = prob.discharge_var[1, 0]
        rng_j = objective_range(prob.lp, sol.lp_solution, j)
        lo = max(rng_j.coeff_low, 0.0)
        hi = min(rng_j.coeff_high, 60.0)
        assert lo < hi
        pad = 1e-6 * (hi - lo)
        samples = np.linspace(lo + pad, hi - pad, 3)
        lmp_vals, primal = [], []
        for alpha in samples:
            b = flat_bid(1, 2, 1, price_d=float(alpha), cap_d=20.0)
            s = solve_dispatch(build_dispatch(net, ptdf, one_period_loads(), BidSet((b,))))
            lmp_vals.append(extract_lmps(s, ptdf).at(2)[0])
            primal.append(
                [s.gen_output[1, 0], s.gen_output[2, 0], s.discharge[1, 0]]
            )
        base = primal[0]
        for p in primal[1:]:
            np.testing.assert_allclose(p, base, atol=1e-7)
        # 3-point collinearity on an equally spaced grid
        assert lmp_vals[1] == pytest.approx((lmp_vals[0] + lmp_vals[2]) / 2, abs=1e-6)

    def test_lmp_monotone_in_discharge_offer(self):
        net = PowerNetwork(
            buses=(Bus(1), Bus(2)),
            lines=(Line(1, 1, 2, 0.1, 500.0),),
            generators=(Generator(1, 1, 10.0, 0.0, 50.0),),
            slack_bus=1,
        )
        ptdf = compute_ptdf(net)
        loads = [LoadSeries(bus=2, values=np.array([60.0]))]
        prices = []
        for alpha in np.linspace(2.0, 40.0, 9):
            bids = BidSet((flat_bid(1, 2, 1, price_d=float(alpha), cap_d=30.0),))
            sol = solve_dispatch(build_dispatch(net, ptdf, loads, bids))
            prices.append(extract_lmps(sol, ptdf).at(2)[0])
        assert all(b >= a - 1e-9 for a, b in zip(prices, prices[1:]))


class TestCongestionScore:
    def test_zero_when_uncongested(self):
        net, ptdf = two_bus_net(limit=150.0)
        sol = solve_dispatch(build_dispatch(net, ptdf, one_period_loads()))
        scores = congestion_score(sol.line_dual, ptdf)
        assert scores == {1: 0.0, 2: 0.0}

    def test_congested_two_bus_value(self):
        net, ptdf = two_bus_net(limit=60.0)
        sol = solve_dispatch(build_dispatch(net, ptdf, one_period_loads()))
        scores = congestion_score(sol.line_dual, ptdf)
        assert scores[1] == pytest.approx(0.0, abs=1e-12)  # slack column is zero
        # single line, |SF| = 1, binding dual magnitude 20
        assert scores[2] == pytest.approx(20.0, abs=1e-6)

    def test_mean_invariant_under_repetition(self):
        net, ptdf = two_bus_net(limit=60.0)
        sol = solve_dispatch(build_dispatch(net, ptdf, one_period_loads()))
        once = congestion_score(sol.line_dual, ptdf)
        twice = congestion_score(np.hstack([sol.line_dual, sol.line_dual]), ptdf)
        assert once == twice

    def test_empty_history_rejected(self):
        net, ptdf = two_bus_net()
        with pytest.raises(ValueError):
            congestion_score(np.zeros((1, 0)), ptdf)

    def test_scores_nonnegative_on_random_grids(self):
        rng = np.random.default_rng(9)
        net, ptdf, loads = random_grid(rng, tight_lines=True)
        sol = solve_dispatch(build_dispatch(net, ptdf, loads))
        assert all(v >= 0.0 for v in congestion_score(sol.line_dual, ptdf).values())


class TestExports:
    def test_lmp_csv_round_trip(self, tmp_path):
        net, ptdf = two_bus_net(limit=60.0)
        sol = solve_dispatch(build_dispatch(net, ptdf, one_period_loads(horizon=2)))
        lmp = extract_lmps(sol, ptdf)
        path = tmp_path / "lmp.csv"
        write_lmp_csv(lmp, path)
        back = read_lmp_csv(path)
        assert back.bus_ids == lmp.bus_ids
        assert back.periods == lmp.periods
        np.testing.assert_array_equal(back.values, lmp.values)

    def test_congestion_csv_round_trip(self, tmp_path):
        scores = {1: 0.0, 2: 20.0}
        path = tmp_path / "scores.csv"
        write_congestion_csv(scores, path)
        assert read_congestion_csv(path) == scores
