"""Demand-data ingestion, market configuration, and the bundled fixture.

The CSV contract: header ``timestamp,forecast_mw,actual_mw``, hourly ISO-8601
timestamps with no gaps, RFC-4180 quoting, UTF-8.  ``actual_mw`` may be blank
on advisory-only rows; realized values must form a contiguous prefix.
Negative demand is accepted with a warning (net load behind large renewable
infeed can be negative).
"""

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from importlib import resources

import numpy as np

from .costs import DEFAULT_RHO, GeneratorParams, MarketParams, StorageParams
from .errors import ConfigError, DemandCSVError

__all__ = [
    "DemandScenario",
    "MarketConfig",
    "load_demand_csv",
    "write_demand_csv",
    "build_params",
    "synthetic_scenario",
    "bundled_demand_path",
]


@dataclass
class DemandScenario:
    """Forecast over the optimization horizon plus realized actuals.

    ``residual`` is actual minus forecast over the realized prefix; the total
    demand seen in real time is forecast + residual by construction.
    """

    forecast: np.ndarray
    actual: np.ndarray
    timestamps: list = field(default_factory=list)

    def __post_init__(self):
        self.forecast = np.asarray(self.forecast, dtype=float)
        self.actual = np.asarray(self.actual, dtype=float)
        if self.actual.size > self.forecast.size:
            raise DemandCSVError("more realized values than forecast intervals")

    @property
    def horizon(self):
        return self.forecast.size

    @property
    def n_realized(self):
        return self.actual.size

    @property
    def residual(self):
        return self.actual - self.forecast[: self.actual.size]


def load_demand_csv(path):
    """Parse and validate a demand file into a scenario."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _parse_demand(fh, str(path))


def _parse_demand(fh, name):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DemandCSVError(f"{name}: empty file", row=1)
    cols = [c.strip().lower() for c in header]
    if cols != ["timestamp", "forecast_mw", "actual_mw"]:
        raise DemandCSVError(
            f"{name}: header must be 'timestamp,forecast_mw,actual_mw', got {header!r}", row=1
        )
    timestamps, forecast, actual = [], [], []
    actuals_done = False
    prev_ts = None
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DemandCSVError(f"{name}: expected 3 columns at row {lineno}", row=lineno)
        raw_ts, raw_fc, raw_ac = (c.strip() for c in row)
        try:
            ts = datetime.fromisoformat(raw_ts)
        except ValueError:
            raise DemandCSVError(f"{name}: bad timestamp {raw_ts!r} at row {lineno}", row=lineno)
        if prev_ts is not None:
            if ts <= prev_ts:
                raise DemandCSVError(
                    f"{name}: timestamps not increasing at row {lineno} ({raw_ts})", row=lineno
                )
            if ts - prev_ts != timedelta(hours=1):
                raise DemandCSVError(
                    f"{name}: gap in hourly sequence at row {lineno} ({raw_ts})", row=lineno
                )
        prev_ts = ts
        try:
            fc = float(raw_fc)
        except ValueError:
            raise DemandCSVError(f"{name}: bad forecast {raw_fc!r} at row {lineno}", row=lineno)
        if not np.isfinite(fc):
            raise DemandCSVError(f"{name}: non-finite forecast at row {lineno}", row=lineno)
        if fc < 0:
            warnings.warn(f"{name}: negative forecast at row {lineno} (net load)", stacklevel=3)
        timestamps.append(ts)
        forecast.append(fc)
        if raw_ac == "":
            actuals_done = True
            continue
        if actuals_done:
            raise DemandCSVError(
                f"{name}: realized value after a blank at row {lineno}; actuals must be a "
                "contiguous prefix", row=lineno,
            )
        try:
            ac = float(raw_ac)
        except ValueError:
            raise DemandCSVError(f"{name}: bad actual {raw_ac!r} at row {lineno}", row=lineno)
        if not np.isfinite(ac):
            raise DemandCSVError(f"{name}: non-finite actual at row {lineno}", row=lineno)
        if ac < 0:
            warnings.warn(f"{name}: negative actual at row {lineno} (net load)", stacklevel=3)
        actual.append(ac)
    if not forecast:
        raise DemandCSVError(f"{name}: no data rows", row=2)
    return DemandScenario(forecast=np.array(forecast), actual=np.array(actual),
                          timestamps=timestamps)


def write_demand_csv(scenario, path):
    """Serialize a scenario back to the CSV contract (ISO-8601 timestamps)."""
    start = scenario.timestamps[0] if scenario.timestamps else datetime(2023, 8, 25, 0)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "forecast_mw", "actual_mw"])
        for h in range(scenario.horizon):
            ts = scenario.timestamps[h] if scenario.timestamps else start + timedelta(hours=h)
            ac = f"{scenario.actual[h]:.6f}" if h < scenario.n_realized else ""
            writer.writerow([ts.isoformat(), f"{scenario.forecast[h]:.6f}", ac])


_GENERATOR_KEYS = {"c", "a", "g_min", "g_max"}
_STORAGE_KEYS = {"capacity_E", "capital_cost_B", "rho", "x0", "duration_hours"}
_CONFIG_KEYS = {"generators", "storages", "horizon", "tolerances", "mode"}
_TOL_KEYS = {"tol"}
_MODE_KEYS = {"enforce_soc_bounds", "realtime"}


@dataclass
class MarketConfig:
    """Validated participant roster plus solve settings."""

    generators: list
    storages: list
    horizon: int = 48
    tol: float = 1e-8
    enforce_soc_bounds: bool = True
    realtime_mode: str = "aware"

    @classmethod
    def from_dict(cls, doc):
        violations = []
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            violations.append(f"unknown top-level keys: {sorted(unknown)}")
        gens = doc.get("generators", [])
        stores = doc.get("storages", [])
        if not gens:
            violations.append("at least one generator is required")
        for i, g in enumerate(gens):
            bad = set(g) - _GENERATOR_KEYS
            if bad:
                violations.append(f"generator {i}: unknown keys {sorted(bad)}")
            if "c" not in g:
                violations.append(f"generator {i}: missing cost coefficient 'c'")
            elif not (float(g["c"]) > 0):
                violations.append(f"generator {i}: c must be positive")
            if "g_min" in g and "g_max" in g and float(g["g_min"]) > float(g["g_max"]):
                violations.append(f"generator {i}: g_min exceeds g_max")
        for i, s in enumerate(stores):
            bad = set(s) - _STORAGE_KEYS
            if bad:
                violations.append(f"storage {i}: unknown keys {sorted(bad)}")
            if "capacity_E" not in s:
                violations.append(f"storage {i}: missing 'capacity_E'")
            elif not (float(s["capacity_E"]) > 0):
                violations.append(f"storage {i}: capacity_E must be positive")
            if "x0" in s and not (0.0 <= float(s["x0"]) <= 1.0):
                violations.append(f"storage {i}: x0 must lie in [0, 1]")
            if "duration_hours" in s and not (float(s["duration_hours"]) > 0):
                violations.append(f"storage {i}: duration_hours must be positive")
        tol_doc = doc.get("tolerances", {})
        bad = set(tol_doc) - _TOL_KEYS
        if bad:
            violations.append(f"tolerances: unknown keys {sorted(bad)}")
        mode_doc = doc.get("mode", {})
        bad = set(mode_doc) - _MODE_KEYS
        if bad:
            violations.append(f"mode: unknown keys {sorted(bad)}")
        rt = mode_doc.get("realtime", "aware")
        if rt not in ("aware", "unaware"):
            violations.append("mode.realtime must be 'aware' or 'unaware'")
        horizon = doc.get("horizon", 48)
        if not (isinstance(horizon, int) and horizon >= 1):
            violations.append("horizon must be a positive integer")
        if violations:
            raise ConfigError(violations)
        return cls(
            generators=[dict(g) for g in gens],
            storages=[dict(s) for s in stores],
            horizon=horizon,
            tol=float(tol_doc.get("tol", 1e-8)),
            enforce_soc_bounds=bool(mode_doc.get("enforce_soc_bounds", True)),
            realtime_mode=rt,
        )

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_config():
    """One aggregate generator plus one 4-hour 50 MWh battery."""
    return MarketConfig(
        generators=[{"c": 20.0, "a": 0.0, "g_min": 0.0}],
        storages=[{"capacity_E": 50.0, "capital_cost_B": 150.0}],
    )


def build_params(config: MarketConfig, scenario: DemandScenario) -> MarketParams:
    """Materialize participant parameters; defaults follow the case study.

    The storage cycle-cost coefficient is rho * B * E; rate limits are
    +/- E / duration_hours; a missing generator cap defaults to the scenario
    demand peak.
    """
    peak = float(max(scenario.forecast.max(initial=0.0),
                     scenario.actual.max(initial=0.0)))
    generators = [
        GeneratorParams(
            c=float(g["c"]), a=float(g.get("a", 0.0)),
            g_min=float(g.get("g_min", 0.0)),
            g_max=float(g.get("g_max", peak if peak > 0 else np.inf)),
        )
        for g in config.generators
    ]
    storages = [
        StorageParams(
            capacity_E=float(s["capacity_E"]),
            capital_cost_B=float(s.get("capital_cost_B", 150.0)),
            rho=float(s.get("rho", DEFAULT_RHO)),
            x0=float(s.get("x0", 0.5)),
            duration_hours=float(s.get("duration_hours", 4.0)),
        )
        for s in config.storages
    ]
    return MarketParams(generators=generators, storages=storages)


def synthetic_scenario(n_realized=24):
    """Deterministic two-day, two-peak demand fixture.

    forecast(h) = 600 + 200*sin(2*pi*(h-8)/24) + 50*sin(4*pi*(h-2)/24)   [MW]
    actual(h)   = forecast(h) * (1 + 0.05*sin(2*pi*(h+2)/24))            [h < 24]

    The base-plus-sine shape gives a morning shoulder and an evening peak.
    The fixed +/-5 percent error follows one slow daily swing, the way real
    zonal forecast bias drifts, so residuals change sign once across the day
    rather than oscillating hour to hour.
    """
    h = np.arange(48, dtype=float)
    forecast = 600.0 + 200.0 * np.sin(2 * np.pi * (h - 8.0) / 24.0) \
        + 50.0 * np.sin(4 * np.pi * (h - 2.0) / 24.0)
    hr = np.arange(n_realized, dtype=float)
    actual = forecast[:n_realized] * (1.0 + 0.05 * np.sin(2 * np.pi * (hr + 2.0) / 24.0))
    start = datetime(2023, 8, 25, 0)
    stamps = [start + timedelta(hours=int(k)) for k in range(48)]
    return DemandScenario(forecast=forecast, actual=actual, timestamps=stamps)


def bundled_demand_path():
    """Filesystem path of the shipped demand fixture CSV."""
    return str(resources.files("cyclemarket").joinpath("fixtures/demand_fixture.csv"))


def scenario_to_csv_text(scenario):
    """CSV text of a scenario (used by round-trip checks and fixture builds)."""
    buf = io.StringIO()
    start = scenario.timestamps[0] if scenario.timestamps else datetime(2023, 8, 25, 0)
    writer = csv.writer(buf)
    writer.writerow(["timestamp", "forecast_mw", "actual_mw"])
    for h in range(scenario.horizon):
        ts = scenario.timestamps[h] if scenario.timestamps else start + timedelta(hours=h)
        ac = f"{scenario.actual[h]:.6f}" if h < scenario.n_realized else ""
        writer.writerow([ts.isoformat(), f"{scenario.forecast[h]:.6f}", ac])
    return buf.getvalue()
