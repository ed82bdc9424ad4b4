"""Social-planner benchmarks: least total cost under perfect foresight.

Two variants bracket the two-stage mechanism: with the end-of-horizon SoC
restored to its initial value (periodic) and without that restriction.
Settlement for profit reporting uses the balance dual as a uniform
marginal price; that convention is a package choice, stated here and in the
README, since the benchmark itself defines no payments.
"""

from dataclasses import dataclass, field

import numpy as np

from .costs import MarketParams, generator_cost, storage_cost
from .qp import solve_market_qp

__all__ = ["PlannerResult", "solve_planner", "participant_profit"]


@dataclass
class PlannerResult:
    g: np.ndarray                  # (J, T)
    u: np.ndarray                  # (S, T)
    price: np.ndarray              # (T,) balance dual, $/MWh
    objective: float               # total social cost, $
    periodic: bool
    kkt_residual: float
    periodicity_duals: np.ndarray = None
    maps: list = field(default_factory=list)
    demand: np.ndarray | None = None


def solve_planner(params: MarketParams, d, periodic=True, tol=1e-8,
                  enforce_soc_bounds=True, max_outer=200):
    """Minimize total generation plus cycle-degradation cost meeting demand.

    Constraints: per-interval balance, total power limits per participant,
    the SoC corridor [0, 1], and (when ``periodic``) zero net storage energy
    over the horizon.
    """
    d = np.asarray(d, dtype=float)
    J, S = params.n_generators, params.n_storages
    T = d.size
    g_lo = np.array([[gen.g_min] * T for gen in params.generators], dtype=float) \
        if J else np.zeros((0, T))
    g_hi = np.array([[gen.g_max] * T for gen in params.generators], dtype=float) \
        if J else np.zeros((0, T))
    u_lo = np.array([[st.u_min] * T for st in params.storages], dtype=float) \
        if S else np.zeros((0, T))
    u_hi = np.array([[st.u_max] * T for st in params.storages], dtype=float) \
        if S else np.zeros((0, T))

    res = solve_market_qp(
        alphas=[1.0 / gen.c for gen in params.generators],
        a_lin=[gen.a for gen in params.generators],
        betas=[1.0 / st.b for st in params.storages],
        capacities=[st.capacity_E for st in params.storages],
        x0s=[st.x0 for st in params.storages],
        demand=d, g_lo=g_lo, g_hi=g_hi, u_lo=u_lo, u_hi=u_hi,
        periodic=periodic, soc_bounds=enforce_soc_bounds, tol=tol, max_outer=max_outer,
    )
    objective = sum(generator_cost(res.g[j], params.generators[j]) for j in range(J)) + sum(
        storage_cost(res.u[s], params.storages[s]) for s in range(S))
    return PlannerResult(
        g=res.g, u=res.u, price=res.price, objective=float(objective), periodic=periodic,
        kkt_residual=res.kkt_residual, periodicity_duals=res.periodicity_duals,
        maps=res.maps, demand=d,
    )


def participant_profit(result: PlannerResult, params: MarketParams):
    """Per-participant profit at the balance-dual settlement price.

    profit_j = <price, g_j> - C_j(g_j) for generators and
    profit_s = <price, u_s> - C_s(u_s) for storage units.
    """
    lam = result.price
    gen_profits = np.array([
        float(lam @ result.g[j]) - generator_cost(result.g[j], params.generators[j])
        for j in range(params.n_generators)
    ])
    storage_profits = np.array([
        float(lam @ result.u[s]) - storage_cost(result.u[s], params.storages[s])
        for s in range(params.n_storages)
    ])
    return gen_profits, storage_profits
