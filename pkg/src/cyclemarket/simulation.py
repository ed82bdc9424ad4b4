"""Two-stage case-study engine: two-day day-ahead, hourly rolling real time.

Protocol: the day-ahead market clears once over a 48-hour horizon (Day 1
binding, Day 2 advisory) with equilibrium bids.  Real time then rolls a
24-hour window forward hour by hour; each window sees the realized demand
for its first (binding) interval and the forecast for the rest, re-optimizes
total dispatch without a periodicity requirement, and commits only the
binding interval.  The realized state of charge carries across hours.
Settlement pays day-ahead quantities at day-ahead prices, adjustments at the
binding real-time price, and reports profits net of realized costs.
"""

from dataclasses import dataclass

import numpy as np

from .costs import MarketParams, generator_cost, storage_cost
from .data import DemandScenario
from .dayahead import DayAheadResult, clear_general, clear_uniform, equilibrium_bids_dayahead
from .errors import DegeneratePriceError, DivergenceError, InfeasibleError
from .rainflow import rainflow_map
from .realtime import (
    RealTimeBids,
    RealTimeResult,
    best_response_unaware,
    clear_constrained_aware,
    equilibrium_unaware,
)

__all__ = [
    "MechanismConfig",
    "Settlement",
    "SimulationRecord",
    "run_day_ahead",
    "run_real_time",
    "settle",
    "run_two_stage",
]

BINDING_HOURS = 24
WINDOW_HOURS = 24


@dataclass
class MechanismConfig:
    """Knobs for the two-stage engine (defaults follow the case study)."""

    clearing: str = "general"          # "general" (with limits) or "uniform"
    enforce_soc_bounds: bool = True    # day-ahead SoC corridor
    tol: float = 1e-8


@dataclass
class Settlement:
    generator_payments: np.ndarray
    storage_payments: np.ndarray
    generator_profits: np.ndarray
    storage_profits: np.ndarray
    social_cost: float
    merchandising_surplus: float
    storage_cycle_payments: np.ndarray = None  # theta' nu over binding intervals


@dataclass
class SimulationRecord:
    da_result: DayAheadResult
    rt_steps: list                      # one RealTimeResult per binding hour
    settlement: Settlement
    social_cost: float
    g_rt: np.ndarray                    # (J, 24) committed adjustments
    u_rt: np.ndarray                    # (S, 24)
    rt_prices: np.ndarray               # (24,) binding-interval prices
    realized_soc: np.ndarray            # (S, 25) across the binding day
    mode: str
    demand_actual: np.ndarray


def run_day_ahead(scenario: DemandScenario, params: MarketParams,
                  mechanism_config: MechanismConfig | None = None) -> DayAheadResult:
    """Clear the day-ahead market over the full two-day forecast horizon.

    Intervals 0..23 are binding, 24..47 advisory; the advisory tail exists so
    late real-time windows have committed quantities to adjust against, and
    is excluded from settlement.
    """
    cfg = mechanism_config or MechanismConfig()
    if scenario.horizon < BINDING_HOURS:
        raise InfeasibleError("day-ahead horizon must cover at least the binding day")
    bids = equilibrium_bids_dayahead(params)
    if cfg.clearing == "uniform":
        return clear_uniform(bids, scenario.forecast, params, tol=cfg.tol)
    return clear_general(bids, scenario.forecast, params, tol=cfg.tol,
                         enforce_soc_bounds=cfg.enforce_soc_bounds)


def _window_demand(scenario, hour):
    """Realized demand for the binding interval, forecast for the rest."""
    end = min(hour + WINDOW_HOURS, scenario.horizon)
    w = scenario.forecast[hour:end].copy()
    w[0] = scenario.actual[hour]
    return w


def _window_da_view(da, params, hour, end):
    """Day-ahead quantities restricted to a window, with window-local
    cycle structure so the unaware-bid formulas stay self-consistent."""
    view = DayAheadResult(
        g=da.g[:, hour:end], u=da.u[:, hour:end], nu=[], energy_price=da.energy_price[hour:end],
        cycle_prices=[], periodicity_duals=da.periodicity_duals, shares=da.shares,
        objective=0.0, kkt_residual=da.kkt_residual, demand=None, uniform=da.uniform,
    )
    for s, st in enumerate(params.storages):
        dec = rainflow_map(view.u[s], st.capacity_E, st.x0)
        nu = dec.map @ view.u[s]
        view.nu.append(nu)
        view.cycle_prices.append(st.b * nu)  # bid-consistent local prices (beta = 1/b)
    return view


def run_real_time(scenario: DemandScenario, params: MarketParams, da: DayAheadResult,
                  mode: str = "aware", tol: float = 1e-8):
    """Roll 24-hour windows across the binding day, committing one hour each.

    ``aware`` mode re-optimizes total dispatch under the constant equilibrium
    slopes with power limits and the SoC corridor (no periodicity).
    ``unaware`` mode runs the balance-only best-response clearing on the
    window's residual demand, the simplified setting its equilibrium theory
    covers; power limits are not imposed on those adjustments.
    """
    if scenario.n_realized < BINDING_HOURS:
        raise InfeasibleError(
            f"need {BINDING_HOURS} realized hours, have {scenario.n_realized}"
        )
    J, S = params.n_generators, params.n_storages
    steps = []
    g_rt = np.zeros((J, BINDING_HOURS))
    u_rt = np.zeros((S, BINDING_HOURS))
    prices = np.zeros(BINDING_HOURS)
    soc = np.zeros((S, BINDING_HOURS + 1))
    for s, st in enumerate(params.storages):
        soc[s, 0] = st.x0
    x0_run = [st.x0 for st in params.storages]

    for hour in range(BINDING_HOURS):
        end = min(hour + WINDOW_HOURS, scenario.horizon)
        w = _window_demand(scenario, hour)
        if mode == "aware":
            res = _aware_window(w, da, params, hour, end, x0_run, tol)
        else:
            res = _unaware_window(w, da, params, hour, end, tol)
        steps.append(res)
        for j in range(J):
            g_rt[j, hour] = res.g_r[j, 0]
        for s in range(S):
            u_rt[s, hour] = res.u_r[s, 0]
        prices[hour] = res.price[0]
        for s, st in enumerate(params.storages):
            total = da.u[s, hour] + u_rt[s, hour]
            x_next = x0_run[s] - total / st.capacity_E
            # binding-solve noise can overshoot the corridor by ~1e-14
            x0_run[s] = float(np.clip(x_next, 0.0, 1.0))
            soc[s, hour + 1] = x_next
    return steps, g_rt, u_rt, prices, soc


def _aware_window(w, da, params, hour, end, x0_run, tol):
    # constant slopes; the storage slope tracks the window's total demand
    alpha_r = np.array([1.0 / gen.c for gen in params.generators])
    beta_r = np.zeros(params.n_storages)
    norm2 = float(w @ w)
    for s, st in enumerate(params.storages):
        dec = rainflow_map(w, st.capacity_E, st.x0)
        Nd = dec.map @ w
        denom = float(Nd @ Nd)
        if denom <= 0.0:
            raise DegeneratePriceError(f"window at hour {hour} has no cycling content")
        beta_r[s] = norm2 / (st.b * denom)
    bids = RealTimeBids(alpha_r=alpha_r, beta_r=beta_r, mode="aware")
    try:
        return clear_constrained_aware(
            bids, w, da.g[:, hour:end], da.u[:, hour:end], params, x0s=list(x0_run), tol=tol,
        )
    except InfeasibleError as exc:
        raise InfeasibleError(
            f"real-time window at hour {hour} infeasible: {exc}", interval=hour
        ) from exc


def _unaware_window(w, da, params, hour, end, tol):
    forecast = np.asarray(da.demand, dtype=float)[hour:end]
    d_r = w - forecast
    J, S = params.n_generators, params.n_storages
    W = w.size
    if float(d_r @ d_r) <= 1e-24 * max(1.0, float(w @ w)):
        zero = RealTimeResult(
            g_r=np.zeros((J, W)), u_r=np.zeros((S, W)), price=np.zeros(W),
            price_coeff=0.0, iterations=0, converged=True,
        )
        return zero
    view = _window_da_view(da, params, hour, end)
    try:
        try:
            _, res = best_response_unaware(params, d_r, view, tol=max(tol * 1e-2, 1e-12))
        except DivergenceError:
            # no positive aggregate slope: the iteration cannot cross zero,
            # but the closed-form fixed point is still a valid equilibrium
            _, res = equilibrium_unaware(params, d_r, view)
        return res
    except DegeneratePriceError:
        # storage schedule is flat inside this window: clear with generators only
        gen_only = MarketParams(generators=params.generators, storages=[])
        gview = DayAheadResult(
            g=view.g, u=np.zeros((0, W)), nu=[], energy_price=view.energy_price,
            cycle_prices=[], periodicity_duals=np.zeros(0), shares=None, objective=0.0,
            kkt_residual=0.0, demand=None, uniform=view.uniform,
        )
        try:
            _, res = best_response_unaware(gen_only, d_r, gview, tol=max(tol * 1e-2, 1e-12))
        except DivergenceError:
            _, res = equilibrium_unaware(gen_only, d_r, gview)
        return RealTimeResult(
            g_r=res.g_r, u_r=np.zeros((S, W)), price=res.price, price_coeff=res.price_coeff,
            iterations=res.iterations, converged=res.converged, map_stable=res.map_stable,
        )


def settle(da: DayAheadResult, rt_prices, g_rt, u_rt, scenario: DemandScenario,
           params: MarketParams) -> Settlement:
    """Payments and profits over the binding day.

    Day-ahead quantities settle at the day-ahead energy price for every
    participant; adjustments settle at the binding-interval real-time price.
    For storage, the energy settlement decomposes exactly into the per-cycle
    payment theta' nu plus power-limit rents plus the periodicity dual times
    net energy (zero), so with slack limits it coincides with the per-cycle
    payment; the pure cycle component is reported alongside
    (``storage_cycle_payments``).  Settling energy keeps the three
    strategies' storage profits on one scale when the rate limits bind.
    Profit nets the realized cost of total dispatch; social cost is the sum
    of realized costs.
    """
    J, S = params.n_generators, params.n_storages
    B = BINDING_HOURS
    lam_da = da.energy_price[:B]
    gen_pay = np.zeros(J)
    gen_profit = np.zeros(J)
    for j in range(J):
        pay = float(lam_da @ da.g[j, :B]) + float(rt_prices @ g_rt[j])
        total = da.g[j, :B] + g_rt[j]
        cost = generator_cost(total, params.generators[j])
        gen_pay[j] = pay
        gen_profit[j] = pay - cost
    st_pay = np.zeros(S)
    st_profit = np.zeros(S)
    st_cycle_pay = np.zeros(S)
    for s, stp in enumerate(params.storages):
        dec = rainflow_map(da.u[s], stp.capacity_E, stp.x0)
        binding_depth = dec.map[:, :B] @ da.u[s, :B]
        theta = np.asarray(da.cycle_prices[s], dtype=float)
        if theta.size == binding_depth.size:
            st_cycle_pay[s] = float(theta @ binding_depth)
        pay = float(lam_da @ da.u[s, :B]) + float(rt_prices @ u_rt[s])
        total = da.u[s, :B] + u_rt[s]
        cost = storage_cost(total, stp)
        st_pay[s] = pay
        st_profit[s] = pay - cost
    social = float(
        sum(generator_cost(da.g[j, :B] + g_rt[j], params.generators[j]) for j in range(J))
        + sum(storage_cost(da.u[s, :B] + u_rt[s], params.storages[s]) for s in range(S))
    )
    load_paid = float(lam_da @ scenario.forecast[:B]) + float(rt_prices @ scenario.residual[:B])
    surplus = load_paid - float(gen_pay.sum() + st_pay.sum())
    return Settlement(
        generator_payments=gen_pay, storage_payments=st_pay,
        generator_profits=gen_profit, storage_profits=st_profit,
        social_cost=social, merchandising_surplus=surplus,
        storage_cycle_payments=st_cycle_pay,
    )


def run_two_stage(scenario: DemandScenario, params: MarketParams, mode: str = "aware",
                  mechanism_config: MechanismConfig | None = None) -> SimulationRecord:
    """Full protocol: clear day ahead, roll real time, settle."""
    cfg = mechanism_config or MechanismConfig()
    da = run_day_ahead(scenario, params, cfg)
    steps, g_rt, u_rt, prices, soc = run_real_time(scenario, params, da, mode=mode, tol=cfg.tol)
    settlement = settle(da, prices, g_rt, u_rt, scenario, params)
    return SimulationRecord(
        da_result=da, rt_steps=steps, settlement=settlement,
        social_cost=settlement.social_cost, g_rt=g_rt, u_rt=u_rt, rt_prices=prices,
        realized_soc=soc, mode=mode, demand_actual=scenario.actual[:BINDING_HOURS].copy(),
    )
