import csv
import json
from pathlib import Path

import pytest

from qamlz import FomParams, fom
from qamlz.cli import main


def _base_config(tmp_path: Path, **over) -> Path:
    cfg = {
        "seed": 11,
        "out_dir": str(tmp_path / "out"),
        "data": {
            "generator": {
                "schema": ["v0", "v1"],
                "processes": {
                    "signal": {"mean": [1.5, 1.0], "cov": [[1.0, 0.0], [0.0, 1.0]]},
                    "wjets": {"mean": [-1.5, -1.0], "cov": [[1.0, 0.0], [0.0, 1.0]]},
                },
                "signal_fraction": 0.5,
                "background_fractions": {"wjets": 1.0},
                "s_tot": 120.0,
                "b_tot": 480.0,
            },
            "n_events": 600,
        },
        "variables": ["v0", "v1"],
        "n_bins": 8,
        "zoom": {
            "iterations": 2,
            "delta": 0.1,
            "offset_range": 1,
            "solver": "exact",
            "p_flip": [0.0],
            "q_flip": [0.0],
            "schedule": {"n_g": [1], "n_e": [1]},
        },
        "fom": {"f": 0.2, "min_counts": 5, "grid_points": 101},
    }
    cfg.update(over)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


def _read_csv(path: Path):
    with path.open() as fh:
        return list(csv.DictReader(fh))


class TestGen:
    def test_writes_header_and_rows(self, tmp_path):
        cfg = _base_config(tmp_path)
        assert main(["gen", "--config", str(cfg)]) == 0
        out = tmp_path / "out" / "events.csv"
        lines = out.read_text().splitlines()
        assert lines[0] == "tag,weight,process,v0,v1"
        assert len(lines) == 601

    def test_repeat_is_byte_identical(self, tmp_path):
        cfg = _base_config(tmp_path)
        main(["gen", "--config", str(cfg)])
        first = (tmp_path / "out" / "events.csv").read_bytes()
        main(["gen", "--config", str(cfg)])
        assert (tmp_path / "out" / "events.csv").read_bytes() == first

    def test_assess_scale_yields(self, tmp_path):
        cfg = _base_config(tmp_path)
        doc = json.loads(cfg.read_text())
        doc["data"]["generator"]["s_tot"] = 7000.0
        doc["data"]["generator"]["b_tot"] = 200_000.0
        doc["data"]["n_events"] = 2000
        cfg.write_text(json.dumps(doc))
        main(["gen", "--config", str(cfg)])
        rows = _read_csv(tmp_path / "out" / "events.csv")
        s = sum(float(r["weight"]) for r in rows if r["tag"] == "1")
        b = sum(float(r["weight"]) for r in rows if r["tag"] == "-1")
        assert s == pytest.approx(7000.0, rel=1e-12)
        assert b == pytest.approx(200_000.0, rel=1e-12)


class TestTrain:
    def test_minimal_run_and_outputs(self, tmp_path):
        cfg = _base_config(tmp_path)
        assert main(["train", "--config", str(cfg)]) == 0
        model = json.loads((tmp_path / "out" / "model.json").read_text())
        assert len(model["mu"]) == 2 * 3  # 2 vars, offsets -1..1
        log_lines = (tmp_path / "out" / "train_log.jsonl").read_text().splitlines()
        assert len(log_lines) == 2
        rec = json.loads(log_lines[0])
        assert set(rec) == {"t", "sigma", "train_distance", "test_distance",
                            "n_candidates", "broken_chain_fraction"}

    def test_rerun_byte_identical(self, tmp_path):
        cfg = _base_config(tmp_path)
        main(["train", "--config", str(cfg)])
        first_model = (tmp_path / "out" / "model.json").read_bytes()
        first_log = (tmp_path / "out" / "train_log.jsonl").read_bytes()
        main(["train", "--config", str(cfg)])
        assert (tmp_path / "out" / "model.json").read_bytes() == first_model
        assert (tmp_path / "out" / "train_log.jsonl").read_bytes() == first_log

    def test_solver_flag_overrides(self, tmp_path):
        cfg = _base_config(tmp_path)
        doc = json.loads(cfg.read_text())
        doc["zoom"]["schedule"].update({"n_reads": 10, "sweeps": 50})
        cfg.write_text(json.dumps(doc))
        assert main(["train", "--config", str(cfg), "--solver", "sa"]) == 0
        model = json.loads((tmp_path / "out" / "model.json").read_text())
        assert model["settings"]["solver"] == "sa"

    def test_reference_configuration(self, tmp_path):
        # the headline setting: base variables as density-ratio weak
        # classifiers, augmentation (0.025, 3), 85% coupler cutoff, no fixing
        cfg_path = tmp_path / "ref.json"
        cfg_path.write_text(json.dumps({
            "seed": 5,
            "out_dir": str(tmp_path / "out"),
            "data": {"generator": {"preset": "default"}, "n_events": 4000,
                     "preselection": True},
            "variables": "beta",
            "n_bins": 20,
            "zoom": {"iterations": 2, "delta": 0.025, "offset_range": 3,
                     "cutoff_pct": 85.0, "fixing": False, "solver": "sa",
                     "schedule": {"n_reads": 12, "sweeps": 60,
                                  "n_g": [2, 1], "n_e": [1]}},
            "fom": {"f": 0.2, "min_counts": 10, "grid_points": 101},
        }))
        assert main(["train", "--config", str(cfg_path)]) == 0
        model = json.loads((tmp_path / "out" / "model.json").read_text())
        assert len(model["mu"]) == 12 * 7  # 12 variables, offsets -3..3
        settings = model["settings"]
        assert (settings["delta"], settings["offset_range"]) == (0.025, 3)
        assert settings["cutoff_pct"] == 85.0 and settings["fixing"] is False
        log = [json.loads(l) for l in
               (tmp_path / "out" / "train_log.jsonl").read_text().splitlines()]
        assert log[1]["train_distance"] <= log[0]["train_distance"]
        assert main(["eval", "--config", str(cfg_path)]) == 0


class TestEval:
    def test_eval_after_train(self, tmp_path):
        cfg = _base_config(tmp_path)
        main(["train", "--config", str(cfg)])
        assert main(["eval", "--config", str(cfg)]) == 0
        rows = _read_csv(tmp_path / "out" / "fom_curve.csv")
        assert list(rows[0]) == ["cut", "fom", "s_yield", "b_yield",
                                 "n_signal", "n_background", "valid"]
        summary = json.loads((tmp_path / "out" / "eval_summary.json").read_text())
        # stored best value re-validates through the fom operation
        best = fom(summary["s_at_best"], summary["b_at_best"], FomParams(f=0.2))
        assert summary["best_fom"] == pytest.approx(best, rel=1e-12)
        # and so does every written curve row with non-degenerate yields
        for r in rows:
            s, b = float(r["s_yield"]), float(r["b_yield"])
            if s > 0 and b > 0:
                assert float(r["fom"]) == pytest.approx(fom(s, b, FomParams(f=0.2)),
                                                        rel=1e-12)
        # separable toy: beats the no-cut baseline
        baseline = fom(60.0, 240.0, FomParams(f=0.2))  # assess holds ~half the yields
        assert summary["best_fom"] > baseline
        overtraining = json.loads((tmp_path / "out" / "overtraining.json").read_text())
        assert set(overtraining) <= {"signal", "wjets"}
        for rec in overtraining.values():
            assert 0.0 <= rec["statistic"] <= 1.0

    def test_zero_model_flat_curve(self, tmp_path):
        cfg = _base_config(tmp_path)
        main(["train", "--config", str(cfg)])
        model_path = tmp_path / "out" / "model.json"
        doc = json.loads(model_path.read_text())
        doc["mu"] = [0.0] * len(doc["mu"])
        model_path.write_text(json.dumps(doc))
        assert main(["eval", "--config", str(cfg)]) == 0
        rows = _read_csv(tmp_path / "out" / "fom_curve.csv")
        valid_foms = {float(r["fom"]) for r in rows if r["valid"] == "1"}
        assert len(valid_foms) == 1  # flat at the baseline
        summary = json.loads((tmp_path / "out" / "eval_summary.json").read_text())
        assert summary["best_fom"] == pytest.approx(valid_foms.pop())

    def test_missing_model_is_data_error(self, tmp_path):
        cfg = _base_config(tmp_path)
        assert main(["eval", "--config", str(cfg)]) == 3


class TestScan:
    def _scan_config(self, tmp_path, **scan_over):
        scan = {
            "delta": [0.1],
            "offset_range": [1],
            "cutoff_pct": [0.0],
            "fixing": [False],
            "n_runs": 2,
        }
        scan.update(scan_over)
        return _base_config(tmp_path, scan=scan)

    def test_one_point_grid_matches_train_eval(self, tmp_path):
        cfg = self._scan_config(tmp_path)
        assert main(["scan", "--config", str(cfg)]) == 0
        rows = _read_csv(tmp_path / "out" / "scan.csv")
        assert len(rows) == 1
        assert rows[0]["status"] == "ok"
        # deterministic exact pipeline: the scan mean equals a single
        # train+eval best fom and the spread is zero
        main(["train", "--config", str(cfg)])
        main(["eval", "--config", str(cfg)])
        summary = json.loads((tmp_path / "out" / "eval_summary.json").read_text())
        assert float(rows[0]["mean_fom"]) == pytest.approx(summary["best_fom"], rel=1e-12)
        assert float(rows[0]["std_fom"]) == 0.0

    def test_grid_cartesian_rows(self, tmp_path):
        cfg = self._scan_config(tmp_path, delta=[0.05, 0.1], cutoff_pct=[0.0, 50.0])
        assert main(["scan", "--config", str(cfg)]) == 0
        rows = _read_csv(tmp_path / "out" / "scan.csv")
        assert len(rows) == 4
        combos = {(r["delta"], r["cutoff_pct"]) for r in rows}
        assert len(combos) == 4

    def test_infeasible_point_marked_and_exit_code(self, tmp_path):
        # offset_range 5 -> 2 vars * 11 = 22 spins, 231 couplers > budget 100
        cfg = self._scan_config(tmp_path, offset_range=[1, 5], coupler_budget=100)
        code = main(["scan", "--config", str(cfg)])
        assert code == 4
        rows = _read_csv(tmp_path / "out" / "scan.csv")
        statuses = {r["offset_range"]: r["status"] for r in rows}
        assert statuses["5"] == "no embedding"
        assert statuses["1"] == "ok"
        infeasible = [r for r in rows if r["status"] == "no embedding"][0]
        assert infeasible["mean_fom"] == ""

    def test_parallel_jobs_identical_output(self, tmp_path):
        cfg = self._scan_config(tmp_path, delta=[0.05, 0.1])
        main(["scan", "--config", str(cfg)])
        seq = (tmp_path / "out" / "scan.csv").read_bytes()
        main(["scan", "--config", str(cfg), "--jobs", "2"])
        assert (tmp_path / "out" / "scan.csv").read_bytes() == seq

    def test_missing_scan_section(self, tmp_path):
        cfg = _base_config(tmp_path)
        assert main(["scan", "--config", str(cfg)]) == 2


class TestFomCommand:
    def test_table(self, tmp_path):
        cfg = _base_config(
            tmp_path,
            fom_curve={"s": [0.0, 50.0, 100.0], "b": [1000.0], "f": [0.2]},
        )
        assert main(["fom", "--config", str(cfg)]) == 0
        rows = _read_csv(tmp_path / "out" / "fom.csv")
        assert len(rows) == 3
        assert float(rows[0]["fom"]) == 0.0  # s = 0
        for r in rows:
            expected = fom(float(r["s"]), float(r["b"]), FomParams(f=float(r["f"])))
            assert float(r["fom"]) == pytest.approx(expected, rel=1e-15)
        assert {r["f"] for r in rows} == {"0.2"}

    def test_missing_section(self, tmp_path):
        cfg = _base_config(tmp_path)
        assert main(["fom", "--config", str(cfg)]) == 2


class TestExitCodes:
    def test_bad_config_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["train", "--config", str(bad)]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "absent.json")]) == 2

    def test_missing_data_file(self, tmp_path):
        cfg = _base_config(tmp_path)
        doc = json.loads(cfg.read_text())
        doc["data"] = {"csv": str(tmp_path / "nope.csv")}
        cfg.write_text(json.dumps(doc))
        assert main(["train", "--config", str(cfg)]) == 3

    def test_invalid_zoom_config(self, tmp_path):
        cfg = _base_config(tmp_path)
        doc = json.loads(cfg.read_text())
        doc["zoom"]["base"] = 2.0
        cfg.write_text(json.dumps(doc))
        assert main(["train", "--config", str(cfg)]) == 2

    def test_seed_flag_changes_output(self, tmp_path):
        cfg = _base_config(tmp_path)
        main(["gen", "--config", str(cfg), "--seed", "1"])
        first = (tmp_path / "out" / "events.csv").read_bytes()
        main(["gen", "--config", str(cfg), "--seed", "2"])
        assert (tmp_path / "out" / "events.csv").read_bytes() != first

    def test_negative_seed_rejected(self, tmp_path):
        cfg = _base_config(tmp_path)
        with pytest.raises(SystemExit) as exc:  # argparse rejects the flag value
            main(["gen", "--config", str(cfg), "--seed", "-1"])
        assert exc.value.code == 2
        doc = json.loads(cfg.read_text())
        doc["seed"] = -7
        cfg.write_text(json.dumps(doc))
        assert main(["gen", "--config", str(cfg)]) == 2
