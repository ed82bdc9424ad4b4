"""Tests for demand CSV ingestion, configuration, and parameter building."""

import json

import numpy as np
import pytest

from cyclemarket.data import (
    MarketConfig,
    build_params,
    bundled_demand_path,
    default_config,
    load_demand_csv,
    scenario_to_csv_text,
    synthetic_scenario,
    write_demand_csv,
)
from cyclemarket.errors import ConfigError, DemandCSVError


def write_csv(tmp_path, text, name="demand.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


GOOD = (
    "timestamp,forecast_mw,actual_mw\n"
    "2023-08-25T00:00:00,100.0,101.5\n"
    "2023-08-25T01:00:00,110.0,108.0\n"
    "2023-08-25T02:00:00,120.0,\n"
    "2023-08-25T03:00:00,115.0,\n"
)


class TestLoadDemandCSV:
    def test_happy_path_with_advisory_tail(self, tmp_path):
        scn = load_demand_csv(write_csv(tmp_path, GOOD))
        assert scn.horizon == 4
        assert scn.n_realized == 2
        assert scn.forecast == pytest.approx([100.0, 110.0, 120.0, 115.0])
        assert scn.residual == pytest.approx([1.5, -2.0])

    def test_bundled_fixture_loads(self):
        scn = load_demand_csv(bundled_demand_path())
        assert scn.horizon == 48
        assert scn.n_realized == 24
        ref = synthetic_scenario()
        assert scn.forecast == pytest.approx(ref.forecast, abs=1e-6)
        assert scn.actual == pytest.approx(ref.actual, abs=1e-6)

    def test_missing_column_rejected(self, tmp_path):
        bad = "timestamp,forecast_mw\n2023-08-25T00:00:00,100.0\n"
        with pytest.raises(DemandCSVError) as err:
            load_demand_csv(write_csv(tmp_path, bad))
        assert err.value.row == 1

    def test_shuffled_timestamps_name_first_bad_row(self, tmp_path):
        bad = (
            "timestamp,forecast_mw,actual_mw\n"
            "2023-08-25T01:00:00,100.0,100.0\n"
            "2023-08-25T00:00:00,110.0,110.0\n"
        )
        with pytest.raises(DemandCSVError) as err:
            load_demand_csv(write_csv(tmp_path, bad))
        assert err.value.row == 3

    def test_gap_in_hours_rejected(self, tmp_path):
        bad = (
            "timestamp,forecast_mw,actual_mw\n"
            "2023-08-25T00:00:00,100.0,100.0\n"
            "2023-08-25T02:00:00,110.0,110.0\n"
        )
        with pytest.raises(DemandCSVError) as err:
            load_demand_csv(write_csv(tmp_path, bad))
        assert err.value.row == 3

    def test_actual_after_blank_rejected(self, tmp_path):
        bad = (
            "timestamp,forecast_mw,actual_mw\n"
            "2023-08-25T00:00:00,100.0,\n"
            "2023-08-25T01:00:00,110.0,108.0\n"
        )
        with pytest.raises(DemandCSVError):
            load_demand_csv(write_csv(tmp_path, bad))

    def test_negative_demand_accepted_with_warning(self, tmp_path):
        text = (
            "timestamp,forecast_mw,actual_mw\n"
            "2023-08-25T00:00:00,-5.0,-4.0\n"
            "2023-08-25T01:00:00,10.0,11.0\n"
        )
        with pytest.warns(UserWarning):
            scn = load_demand_csv(write_csv(tmp_path, text))
        assert scn.forecast[0] == -5.0

    def test_round_trip(self, tmp_path):
        scn = synthetic_scenario()
        path = tmp_path / "roundtrip.csv"
        write_demand_csv(scn, path)
        back = load_demand_csv(path)
        assert back.forecast == pytest.approx(scn.forecast, abs=1e-6)
        assert back.actual == pytest.approx(scn.actual, abs=1e-6)
        assert back.timestamps == scn.timestamps
        # serialized text itself is stable
        assert scenario_to_csv_text(back) == scenario_to_csv_text(scn)


class TestMarketConfig:
    def test_default_config_valid(self):
        cfg = default_config()
        assert cfg.generators[0]["c"] == 20.0
        assert cfg.storages[0]["capacity_E"] == 50.0

    def test_unknown_keys_rejected_with_all_violations(self):
        doc = {
            "generators": [{"c": 20.0, "cc": 1.0}],
            "storages": [{"capacity_E": 50.0, "color": "red"}],
            "frobnicate": True,
        }
        with pytest.raises(ConfigError) as err:
            MarketConfig.from_dict(doc)
        text = str(err.value)
        assert "cc" in text and "color" in text and "frobnicate" in text

    def test_json_loading(self, tmp_path):
        doc = {"generators": [{"c": 12.0}], "storages": [{"capacity_E": 20.0}],
               "tolerances": {"tol": 1e-9}}
        path = tmp_path / "config.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        cfg = MarketConfig.from_json(path)
        assert cfg.tol == 1e-9

    def test_invalid_values_collected(self):
        doc = {"generators": [{"c": -1.0}], "storages": [{"capacity_E": 0.0, "x0": 2.0}]}
        with pytest.raises(ConfigError) as err:
            MarketConfig.from_dict(doc)
        assert len(err.value.violations) >= 3


class TestBuildParams:
    def test_case_study_coefficients(self):
        scn = synthetic_scenario()
        params = build_params(default_config(), scn)
        st = params.storages[0]
        assert st.b == pytest.approx(3.93)        # 5.24e-4 * 150 * 50
        assert st.u_max == pytest.approx(12.5)    # E / 4 for the 4-hour battery
        assert st.u_min == pytest.approx(-12.5)

    def test_one_hour_duration(self):
        cfg = MarketConfig(generators=[{"c": 20.0}],
                           storages=[{"capacity_E": 50.0, "duration_hours": 1.0}])
        params = build_params(cfg, synthetic_scenario())
        assert params.storages[0].u_max == pytest.approx(50.0)

    def test_generator_cap_defaults_to_peak(self):
        scn = synthetic_scenario()
        params = build_params(default_config(), scn)
        peak = max(scn.forecast.max(), scn.actual.max())
        assert params.generators[0].g_max == pytest.approx(peak)

    def test_pure_and_total(self):
        scn = synthetic_scenario()
        cfg = default_config()
        p1 = build_params(cfg, scn)
        p2 = build_params(cfg, scn)
        assert p1.storages[0].b == p2.storages[0].b
        assert p1.generators[0].g_max == p2.generators[0].g_max


class TestSyntheticScenario:
    def test_shape_and_error_band(self):
        scn = synthetic_scenario()
        assert scn.horizon == 48
        assert scn.n_realized == 24
        # +/- 5 percent error band
        rel = np.abs(scn.residual) / scn.forecast[:24]
        assert np.max(rel) <= 0.05 + 1e-12
        # two-day forecast repeats daily
        assert scn.forecast[:24] == pytest.approx(scn.forecast[24:])
