"""Tests for the command-line driver and its output artifacts."""

import csv
import json

import pytest

from cyclemarket.cli import main


def read_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


class TestRun:
    def test_bundled_fixture_produces_artifacts(self, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--out", str(out)])
        assert code == 0
        assert (out / "run_summary.csv").exists()
        assert (out / "trace.csv").exists()
        rows = read_rows(out / "run_summary.csv")
        metrics = {r["metric"] for r in rows}
        assert {"social_cost", "storage_profit", "generator_profit",
                "merchandising_surplus"} <= metrics
        trace = read_rows(out / "trace.csv")
        assert len(trace) == 24
        assert {"hour", "da_price", "rt_price", "soc_0"} <= set(trace[0])

    def test_missing_demand_file_exits_one(self, tmp_path, capsys):
        code = main(["run", "--demand", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "o")])
        assert code == 1
        assert "nope.csv" in capsys.readouterr().err

    def test_unaware_mode_flag(self, tmp_path):
        out = tmp_path / "o"
        code = main(["run", "--mode", "unaware", "--out", str(out)])
        assert code == 0
        rows = {r["metric"]: r["value"] for r in read_rows(out / "run_summary.csv")}
        assert float(rows["rt_iterations_total"]) >= 0

    def test_custom_config(self, tmp_path):
        cfg = {"generators": [{"c": 25.0}], "storages": [{"capacity_E": 30.0}]}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
        code = main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert code == 0

    def test_bad_config_exits_two(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"generators": [{"c": -3}]}), encoding="utf-8")
        code = main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_byte_identical_reruns(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--out", str(out1)]) == 0
        assert main(["run", "--out", str(out2)]) == 0
        for name in ("run_summary.csv", "trace.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestSweep:
    @pytest.fixture()
    def spec_path(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"axis": "E", "values": [40.0, 60.0],
                                    "fixed": {"B": 150.0}}), encoding="utf-8")
        return path

    def test_grid_rows_and_plots(self, tmp_path, spec_path):
        out = tmp_path / "out"
        code = main(["sweep", "--spec", str(spec_path), "--out", str(out)])
        assert code == 0
        rows = read_rows(out / "sweep.csv")
        assert len(rows) == 2 * 3  # two values x three strategies
        assert all(r["status"] == "ok" for r in rows)
        assert (out / "social_cost_vs_E.svg").exists()
        assert (out / "storage_profit_vs_E.svg").exists()

    def test_single_point_matches_run(self, tmp_path):
        spec = tmp_path / "one.json"
        spec.write_text(json.dumps({"axis": "E", "values": [50.0], "fixed": {"B": 150.0},
                                    "strategies": ["mechanism"]}), encoding="utf-8")
        out_run, out_sweep = tmp_path / "r", tmp_path / "s"
        assert main(["run", "--out", str(out_run)]) == 0
        assert main(["sweep", "--spec", str(spec), "--out", str(out_sweep)]) == 0
        summary = {r["metric"]: r["value"] for r in read_rows(out_run / "run_summary.csv")}
        row = read_rows(out_sweep / "sweep.csv")[0]
        assert float(row["social_cost"]) == pytest.approx(float(summary["social_cost"]))

    def test_parallel_matches_serial(self, tmp_path, spec_path):
        out1, out2 = tmp_path / "serial", tmp_path / "par"
        assert main(["sweep", "--spec", str(spec_path), "--out", str(out1)]) == 0
        assert main(["sweep", "--spec", str(spec_path), "--out", str(out2),
                     "--parallel", "2"]) == 0
        assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()
        assert (out1 / "social_cost_vs_E.svg").read_bytes() == \
            (out2 / "social_cost_vs_E.svg").read_bytes()

    def test_invalid_spec_exits_two(self, tmp_path):
        spec = tmp_path / "bad.json"
        spec.write_text(json.dumps({"axis": "Q", "values": []}), encoding="utf-8")
        code = main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_plots_are_views_of_csv_rows(self, tmp_path, spec_path):
        out = tmp_path / "out"
        assert main(["sweep", "--spec", str(spec_path), "--out", str(out)]) == 0
        rows = read_rows(out / "sweep.csv")
        svg = (out / "social_cost_vs_E.svg").read_text(encoding="utf-8")
        # every plotted series point corresponds to a CSV row's value
        for r in rows:
            assert r["status"] == "ok"
        assert svg.count("<polyline") == 3
