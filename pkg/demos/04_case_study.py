# %% Full two-stage case study on the bundled demand fixture
#
# Protocol: the day-ahead market clears a two-day horizon (Day 1 binding,
# Day 2 advisory) with equilibrium bids; real time rolls a 24-hour window
# forward each hour, sees the realized demand for the binding interval only,
# and commits one hour at a time while the state of charge carries forward.
# Social planners with and without the end-of-day SoC restoration bracket
# the mechanism's realized cost from above and below.

import numpy as np

from cyclemarket import (
    build_params,
    run_two_stage,
    solve_planner,
    participant_profit,
    synthetic_scenario,
)
from cyclemarket.data import default_config
from cyclemarket.simulation import BINDING_HOURS

scenario = synthetic_scenario()
params = build_params(default_config(), scenario)
print("demand fixture: 48 h forecast, 24 h realized,",
      f"peak {scenario.forecast.max():.0f} MW")
print("storage: E = 50 MWh, rate +/- 12.5 MW, cycle coefficient b =",
      params.storages[0].b)

record = run_two_stage(scenario, params, mode="aware")
print("\nmechanism social cost:", round(record.social_cost, 2))
print("storage profit:       ", round(float(record.settlement.storage_profits[0]), 2))
print("merchandising surplus:", round(record.settlement.merchandising_surplus, 6))

# %% The planner bounds
actual = scenario.actual[:BINDING_HOURS]
lo = solve_planner(params, actual, periodic=False)
hi = solve_planner(params, actual, periodic=True)
print("\nplanner without periodicity:", round(lo.objective, 2))
print("mechanism (two-stage):      ", round(record.social_cost, 2))
print("planner with periodicity:   ", round(hi.objective, 2))
print("cost sandwich holds:", lo.objective <= record.social_cost <= hi.objective)

_, profit_lo = participant_profit(lo, params)
_, profit_hi = participant_profit(hi, params)
mech_profit = float(record.settlement.storage_profits[0])
lo_p, hi_p = sorted([float(profit_lo[0]), float(profit_hi[0])])
print("profit sandwich holds:", lo_p <= mech_profit <= hi_p,
      f"({lo_p:.0f} <= {mech_profit:.0f} <= {hi_p:.0f})")

# %% Hour-by-hour picture of the binding day
print("\nhour  actual  da_u    rt_u    soc")
for h in range(0, BINDING_HOURS, 3):
    print(f"{h:4d}  {scenario.actual[h]:6.1f}  {record.da_result.u[0, h]:6.2f}"
          f"  {record.u_rt[0, h]:6.2f}  {record.realized_soc[0, h + 1]:5.3f}")

# %% Sweeping storage size, the library way
# (the command line does the same: cyclemarket sweep --spec spec.json)
print("\n  E    mechanism    planner-nonper   planner-per")
for E in (25.0, 50.0, 75.0):
    cfg = default_config()
    cfg.storages[0] = {"capacity_E": E, "capital_cost_B": 150.0}
    p = build_params(cfg, scenario)
    rec = run_two_stage(scenario, p, mode="aware")
    lo_E = solve_planner(p, actual, periodic=False)
    hi_E = solve_planner(p, actual, periodic=True)
    print(f"{E:5.0f}  {rec.social_cost:12.1f}  {lo_E.objective:14.1f}"
          f"  {hi_E.objective:13.1f}")
