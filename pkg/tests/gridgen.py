"""Random desk-scale grid fixtures shared by dispatch/market/planner tests."""
from __future__ import annotations

import numpy as np

from bessplan.network import Bus, Generator, Line, LoadSeries, PowerNetwork, compute_ptdf


def random_grid(rng: np.random.Generator, max_buses: int = 10, horizon: int = 3,
                tight_lines: bool = False):
    """Connected network with enough generation headroom to stay feasible.

    Returns (net, ptdf, loads).  With ``tight_lines`` some limits are squeezed
    toward expected flows so congestion (and nonzero line duals) shows up.
    """
    n = int(rng.integers(2, max_buses + 1))
    buses = tuple(Bus(id=b) for b in range(1, n + 1))

    lines = []
    lid = 1
    for b in range(2, n + 1):  # spanning tree, then a few chords
        lines.append(Line(lid, int(rng.integers(1, b)), b, float(rng.uniform(0.05, 0.3)), 1e4))
        lid += 1
    for _ in range(int(rng.integers(0, max(1, n // 2) + 1))):
        a, c = rng.choice(np.arange(1, n + 1), size=2, replace=False)
        lines.append(Line(lid, int(a), int(c), float(rng.uniform(0.05, 0.3)), 1e4))
        lid += 1

    n_gen = min(int(rng.integers(2, 5)), n)
    gen_buses = rng.choice(np.arange(1, n + 1), size=n_gen, replace=False)
    gens = tuple(
        Generator(id=g + 1, bus=int(gen_buses[g]), cost=float(rng.uniform(5, 50)),
                  pmin=0.0, pmax=float(rng.uniform(80, 200)))
        for g in range(n_gen)
    )
    total_cap = sum(g.pmax for g in gens)

    n_load = int(rng.integers(1, n + 1))
    load_buses = rng.choice(np.arange(1, n + 1), size=n_load, replace=False)
    share = rng.dirichlet(np.ones(n_load))
    loads = [
        LoadSeries(
            bus=int(load_buses[i]),
            values=np.round(
                share[i] * 0.5 * total_cap * rng.uniform(0.6, 1.0, horizon), 3
            ),
        )
        for i in range(n_load)
    ]

    net = PowerNetwork(buses=buses, lines=tuple(lines), generators=gens,
                       slack_bus=int(min(g.bus for g in gens)))
    net.validate()
    ptdf = compute_ptdf(net)

    if tight_lines:
        # squeeze the most loaded lines toward their base-case flow, backing
        # off whenever the squeeze makes the case infeasible
        from bessplan.dispatch import DispatchInfeasibleError, build_dispatch, solve_dispatch

        base = solve_dispatch(build_dispatch(net, ptdf, loads))
        peak = np.abs(base.flows).max(axis=1)
        order = [int(i) for i in np.argsort(-peak)[: max(1, len(lines) // 3)]]
        factor = 0.6
        for _ in range(8):
            trial_lines = list(lines)
            for idx in order:
                if peak[idx] > 1.0:
                    ln = lines[idx]
                    trial_lines[idx] = Line(ln.id, ln.from_bus, ln.to_bus, ln.reactance,
                                            float(max(peak[idx] * factor, 1.0)))
            cand = PowerNetwork(buses=buses, lines=tuple(trial_lines), generators=gens,
                                slack_bus=net.slack_bus)
            cand.validate()
            cand_ptdf = compute_ptdf(cand)
            try:
                solve_dispatch(build_dispatch(cand, cand_ptdf, loads))
            except DispatchInfeasibleError:
                factor = factor + (1.0 - factor) * 0.5
                continue
            return cand, cand_ptdf, loads

    return net, ptdf, loads
