"""Owner MILP: sizing, SOC dynamics, variants, bids, catalog round trips."""
import itertools

import numpy as np
import pytest

from bessplan.lp import LpStatus, LpStructureError, SolverOptions
from bessplan.scheduling import (
    BessCandidate,
    BessConfig,
    BudgetError,
    VariantSpec,
    build_schedule,
    complementarity_violation,
    make_bids,
    read_catalog,
    read_schedule_csv,
    solve_schedule,
    write_catalog,
    write_schedule_csv,
)


def simple_candidate(**kw):
    base = dict(
        id=1, bus=2, fixed_cost=0.0, unit_cost=10.0, kappa_c=1.0, kappa_d=1.0,
        soc_min=0.0, soc_max=1.0, eta_c=1.0, eta_d=1.0,
    )
    base.update(kw)
    return BessCandidate(**base)


class TestFrozenCases:
    def test_two_period_arbitrage_sizing(self):
        # prices (10, 50), unit cost 10: spread nets 30/MWh, so capacity maxes out
        cand = simple_candidate()
        prob = build_schedule([cand], np.array([10.0, 50.0]), budget=1000.0)
        sol = solve_schedule(prob)
        assert sol.status is LpStatus.OPTIMAL
        assert sol.capacity[1] == pytest.approx(100.0, abs=1e-6)
        assert sol.objective == pytest.approx(-3000.0, abs=1e-6)
        np.testing.assert_allclose(sol.soc[1], [0.0, 100.0, 0.0], atol=1e-7)
        np.testing.assert_allclose(sol.charge[1], [100.0, 0.0], atol=1e-7)
        np.testing.assert_allclose(sol.discharge[1], [0.0, 100.0], atol=1e-7)

    def test_flat_prices_build_nothing(self):
        cand = simple_candidate(fixed_cost=5.0)
        prob = build_schedule([cand], np.full(4, 25.0), budget=1000.0)
        sol = solve_schedule(prob)
        assert sol.capacity[1] == pytest.approx(0.0, abs=1e-7)
        assert sol.installed == ()
        assert sol.objective == pytest.approx(0.0, abs=1e-7)

    def test_zero_capacity_config_all_zero(self):
        cand = simple_candidate()
        cfg = BessConfig.empty(budget=1000.0)
        prob = build_schedule([cand], np.array([10.0, 50.0]), 1000.0, fixed_config=cfg)
        sol = solve_schedule(prob)
        assert sol.objective == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(sol.charge[1], 0.0, atol=1e-9)
        np.testing.assert_allclose(sol.soc[1], 0.0, atol=1e-9)

    def test_soc_trajectory_with_efficiency(self):
        cand = simple_candidate(eta_c=0.9, eta_d=0.8, soc_max=1.0)
        cfg = BessConfig(installed=(1,), capacity={1: 50.0}, budget=1000.0)
        prob = build_schedule([cand], np.array([0.0, 100.0]), 1000.0, fixed_config=cfg)
        sol = solve_schedule(prob)
        # charge 50 MW -> 45 MWh stored; discharging returns 45*0.8 = 36 MWh
        np.testing.assert_allclose(sol.soc[1], [0.0, 45.0, 0.0], atol=1e-6)
        assert sol.discharge[1][1] == pytest.approx(36.0, abs=1e-6)

    def test_infeasible_initial_soc(self):
        # initial fraction outside [Sl, Su] leaves no feasible e_0 once capacity is pinned
        cand = simple_candidate(soc_min=0.2, soc_max=0.5, initial_soc=0.9)
        cfg = BessConfig(installed=(1,), capacity={1: 50.0}, budget=1000.0)
        prob = build_schedule([cand], np.array([10.0, 50.0]), 1000.0, fixed_config=cfg)
        sol = solve_schedule(prob)
        assert sol.status is LpStatus.INFEASIBLE

    def test_budget_error_when_forced_install_exceeds_budget(self):
        cand = simple_candidate(fixed_cost=500.0)
        cfg = BessConfig(installed=(1,), capacity={1: 10.0}, budget=100.0)
        with pytest.raises(BudgetError):
            build_schedule([cand], np.array([10.0, 50.0]), 100.0, fixed_config=cfg)


class TestInvariants:
    def rng_case(self, seed, enforce=False, zero_fixed=False):
        rng = np.random.default_rng(seed)
        cands = [
            simple_candidate(
                id=i + 1, bus=i + 1,
                fixed_cost=float(rng.uniform(0, 50)),
                unit_cost=float(rng.uniform(5, 20)),
                kappa_c=float(rng.uniform(0.3, 1.0)),
                kappa_d=float(rng.uniform(0.3, 1.0)),
                soc_min=0.1, soc_max=0.9,
                eta_c=float(rng.uniform(0.85, 1.0)),
                eta_d=float(rng.uniform(0.85, 1.0)),
            )
            for i in range(int(rng.integers(1, 3)))
        ]
        T = int(rng.integers(2, 6))
        prices = np.round(rng.uniform(5, 60, T), 2)
        budget = float(rng.uniform(200, 2000))
        variant = VariantSpec(zero_fixed_cost=zero_fixed, enforce_complementarity=enforce)
        return cands, prices, budget, variant

    @pytest.mark.parametrize("seed", range(10))
    def test_soc_replay_and_budget(self, seed):
        cands, prices, budget, variant = self.rng_case(seed)
        sol = solve_schedule(build_schedule(cands, prices, budget, variant))
        assert sol.status is LpStatus.OPTIMAL
        catalog = {c.id: c for c in cands}
        spent = sum(
            catalog[cid].fixed_cost + catalog[cid].unit_cost * sol.capacity[cid]
            for cid in sol.installed
        )
        assert spent <= budget + 1e-6
        for c in cands:
            e = sol.soc[c.id]
            pc, pd = sol.charge[c.id], sol.discharge[c.id]
            replay = [e[0]]
            for t in range(len(pc)):
                replay.append(replay[-1] + c.eta_c * pc[t] - pd[t] / c.eta_d)
            np.testing.assert_allclose(e, replay, atol=1e-9)
            cap = sol.capacity[c.id]
            assert np.all(e >= c.soc_min * cap - 1e-7)
            assert np.all(e <= c.soc_max * cap + 1e-7)
            assert e[-1] >= e[0] - 1e-7

    @pytest.mark.parametrize("seed", range(6))
    def test_variant_ordering(self, seed):
        cands, prices, budget, _ = self.rng_case(seed)
        full = solve_schedule(build_schedule(cands, prices, budget))
        relaxed = solve_schedule(
            build_schedule(cands, prices, budget, VariantSpec(zero_fixed_cost=True))
        )
        restricted = solve_schedule(
            build_schedule(cands, prices, budget, VariantSpec(enforce_complementarity=True))
        )
        assert relaxed.objective <= full.objective + 1e-6
        assert restricted.objective >= full.objective - 1e-6
        assert complementarity_violation(restricted.charge, restricted.discharge) <= 1e-6

    def test_cashflow_decomposition(self):
        cands, prices, budget, variant = self.rng_case(3)
        sol = solve_schedule(build_schedule(cands, prices, budget, variant))
        energy_cost = sum(float(cf.sum()) for cf in sol.cashflow.values())
        assert sol.objective == pytest.approx(sol.investment + energy_cost, abs=1e-6)

    @pytest.mark.parametrize("seed", range(4))
    def test_grid_oracle_never_beats_milp(self, seed):
        # discretized charge/discharge plans can only do as well as the MILP
        cand = simple_candidate(
            soc_min=0.0, soc_max=1.0, eta_c=0.9, eta_d=0.9, fixed_cost=20.0,
        )
        rng = np.random.default_rng(40 + seed)
        T = 3
        prices = np.round(rng.uniform(5, 60, T), 1)
        budget = 600.0
        cfg = BessConfig(installed=(1,), capacity={1: 40.0}, budget=budget)
        prob = build_schedule([cand], prices, budget, fixed_config=cfg)
        sol = solve_schedule(prob)
        cap = 40.0
        rate = cand.kappa_c * cap
        grid = np.linspace(0.0, rate, 5)
        best = np.inf
        for plan in itertools.product(grid, repeat=2 * T):
            pc, pd = np.array(plan[:T]), np.array(plan[T:])
            e = [cand.start_fraction * cap]
            ok = True
            for t in range(T):
                e.append(e[-1] + cand.eta_c * pc[t] - pd[t] / cand.eta_d)
                if not (cand.soc_min * cap - 1e-9 <= e[-1] <= cand.soc_max * cap + 1e-9):
                    ok = False
                    break
            if not ok or e[-1] < e[0] - 1e-9:
                continue
            best = min(best, float(prices @ (pc - pd)))
        milp_energy = sol.objective - sol.investment
        assert milp_energy <= best + 1e-6


class TestBids:
    def test_margin_arithmetic(self):
        cand = simple_candidate()
        cfg = BessConfig(installed=(1,), capacity={1: 20.0}, budget=1000.0)
        prices = np.array([40.0, 40.0])
        sol = solve_schedule(build_schedule([cand], prices, 1000.0, fixed_config=cfg))
        sol.discharge[1] = np.array([10.0, 0.0])  # impose the documented example
        bids = make_bids(sol, [cand], prices, margin=0.05)
        bid = bids.bids[0]
        assert bid.discharge_price[0] == pytest.approx(38.0)
        assert bid.discharge_max[0] == pytest.approx(10.0)
        assert bid.charge_price[0] == pytest.approx(-42.0)

    def test_zero_plan_gives_zero_bounds(self):
        cand = simple_candidate()
        cfg = BessConfig.empty(1000.0)
        prices = np.array([10.0, 50.0])
        sol = solve_schedule(build_schedule([cand], prices, 1000.0, fixed_config=cfg))
        bids = make_bids(sol, [cand], prices)
        assert np.all(bids.bids[0].charge_max == 0.0)
        assert np.all(bids.bids[0].discharge_max == 0.0)

    def test_zero_margin_hits_clearing_boundary(self):
        cand = simple_candidate()
        cfg = BessConfig(installed=(1,), capacity={1: 20.0}, budget=1000.0)
        prices = np.array([10.0, 50.0])
        sol = solve_schedule(build_schedule([cand], prices, 1000.0, fixed_config=cfg))
        bids = make_bids(sol, [cand], prices, margin=0.0)
        np.testing.assert_allclose(bids.bids[0].discharge_price, prices)
        np.testing.assert_allclose(bids.bids[0].charge_price, -prices)

    def test_sign_invariant_always(self):
        rng = np.random.default_rng(11)
        cand = simple_candidate()
        cfg = BessConfig(installed=(1,), capacity={1: 30.0}, budget=1000.0)
        prices = np.round(rng.uniform(0, 80, 6), 2)
        sol = solve_schedule(build_schedule([cand], prices, 1000.0, fixed_config=cfg))
        bids = make_bids(sol, [cand], prices, margin=0.1)
        assert np.all(bids.bids[0].charge_price <= 0.0)
        assert np.all(bids.bids[0].discharge_price >= 0.0)

    def test_negative_margin_rejected(self):
        cand = simple_candidate()
        cfg = BessConfig.empty(1000.0)
        sol = solve_schedule(
            build_schedule([cand], np.array([10.0]), 1000.0, fixed_config=cfg)
        )
        with pytest.raises(ValueError):
            make_bids(sol, [cand], np.array([10.0]), margin=-0.1)


class TestComplementarity:
    def test_direct_product(self):
        assert complementarity_violation(np.array([5.0]), np.array([3.0])) == 15.0
        assert complementarity_violation({}, {}) == 0.0
        assert complementarity_violation(np.zeros(3), np.zeros(3)) == 0.0

    def test_negative_price_induces_simultaneous_without_enforcement(self):
        # paid consumption with a tight SOC cap: the LP burns energy by
        # charging and discharging at once, which enforcement must forbid
        cand = simple_candidate(eta_c=0.5, eta_d=1.0, soc_max=0.3)
        cfg = BessConfig(installed=(1,), capacity={1: 10.0}, budget=1000.0)
        prices = np.array([-50.0, -50.0])
        plain = solve_schedule(build_schedule([cand], prices, 1000.0, fixed_config=cfg))
        assert complementarity_violation(plain.charge, plain.discharge) > 1.0
        enforced = solve_schedule(
            build_schedule(
                [cand], prices, 1000.0,
                VariantSpec(enforce_complementarity=True), fixed_config=cfg,
            )
        )
        assert complementarity_violation(enforced.charge, enforced.discharge) <= 1e-6
        assert enforced.objective >= plain.objective - 1e-9


class TestCatalogIo:
    def test_catalog_round_trip(self, tmp_path):
        cands = [
            simple_candidate(id=1, bus=3, fixed_cost=100.0),
            simple_candidate(id=2, bus=5, soc_min=0.1, soc_max=0.9, eta_c=0.95),
        ]
        path = tmp_path / "catalog.csv"
        write_catalog(cands, path)
        back = read_catalog(path)
        assert back == cands

    def test_catalog_validation_with_line(self, tmp_path):
        path = tmp_path / "catalog.csv"
        path.write_text(
            "id,bus_id,F,G,kc,kd,Sl,Su,etac,etad\n"
            "1,2,0,10,1,1,0.9,0.1,1,1\n"  # Sl > Su
        )
        with pytest.raises(LpStructureError, match="catalog.csv:2"):
            read_catalog(path)

    def test_schedule_csv_round_trip(self, tmp_path):
        cand = simple_candidate()
        prob = build_schedule([cand], np.array([10.0, 50.0]), 1000.0)
        sol = solve_schedule(prob)
        path = tmp_path / "sched.csv"
        write_schedule_csv(sol, path)
        back = read_schedule_csv(path)
        np.testing.assert_array_equal(back[1]["pc"], sol.charge[1])
        np.testing.assert_array_equal(back[1]["pd"], sol.discharge[1])
        np.testing.assert_array_equal(back[1]["e"], sol.soc[1][:2])
        np.testing.assert_array_equal(back[1]["cashflow"], sol.cashflow[1])
