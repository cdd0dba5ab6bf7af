import csv
import json

import pytest

import cli
from experiment_runner import ExperimentRunner, write_csv
from utils.config_manager import ConfigManager, coerce_value
from utils.metric_core import InvariantViolation
from utils.wrinkled_quadrant import diagonal_distance


@pytest.fixture(autouse=True)
def _work_in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def _read(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


class TestParams:
    def test_coerce_value(self):
        assert coerce_value("10") == 10
        assert coerce_value("0.5") == 0.5
        assert coerce_value("true") is True
        assert coerce_value("False") is False
        assert coerce_value("1,2,4.5") == [1, 2, 4.5]
        assert coerce_value("euclidean") == "euclidean"

    def test_pairs(self):
        assert cli.parse_pairs(["a=1", "b= x ", "a=2"]) == {"a": "2", "b": "x"}
        with pytest.raises(cli.UsageError):
            cli.parse_pairs(["n_max"])
        with pytest.raises(cli.UsageError):
            cli.parse_pairs(["=3"])

    def test_command_line_beats_file(self, tmp_path):
        path = tmp_path / "params.txt"
        path.write_text("# archived run\n\nn_max=5\nwitnesses=false\n", encoding="utf-8")
        params = cli.build_params("wrinkled-gap", [f"config={path}", "n_max=3"])
        assert params == {"n_max": 3, "witnesses": False}

    def test_config_manager_layers(self, tmp_path, monkeypatch):
        path = tmp_path / "params.txt"
        path.write_text("grid=16\nseed=4\n", encoding="utf-8")
        monkeypatch.setenv("CONELAB_SEED", "9")
        monkeypatch.setenv("CONELAB_TRIANGLES", "7")
        manager = ConfigManager(str(path))
        manager.set_setting("seed", "1")
        assert manager.get_setting("seed") == "1"
        assert manager.get_setting("grid") == "16"
        assert manager.get_setting("triangles") == "7"
        assert manager.export_config() == "CONELAB_GRID=16\nCONELAB_SEED=1"
        manager.clear_session()
        assert manager.get_setting("seed") == "4"

        saved = tmp_path / "saved.json"
        manager.save_config(str(saved))
        assert ConfigManager(str(saved)).file_config == {"GRID": "16", "SEED": "4"}

    def test_bad_config_file(self, tmp_path):
        path = tmp_path / "params.txt"
        path.write_text("n_max 5\n", encoding="utf-8")
        with pytest.raises(ValueError):
            ConfigManager(str(path))
        with pytest.raises(FileNotFoundError):
            ConfigManager(str(tmp_path / "missing.txt"))


class TestExitCodes:
    def test_missing_param(self, tmp_path):
        assert cli.main(["run", "wrinkled-gap", f"out_dir={tmp_path}"]) == 2

    def test_unknown_recipe(self):
        assert cli.main(["run", "wrinkled-bumps", "n_max=3"]) == 2

    def test_unknown_key(self, tmp_path):
        assert cli.main(["run", "wrinkled-gap", "n_max=3", "colour=red", f"out_dir={tmp_path}"]) == 2

    def test_malformed_value(self, tmp_path):
        assert cli.main(["run", "wrinkled-gap", "n_max=ten", f"out_dir={tmp_path}"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["run", "wrinkled-gap", "n_max=3", f"config={tmp_path / 'nope.txt'}"]) == 2

    def test_invariant_violation_writes_error_record(self, tmp_path, monkeypatch):
        def broken(self, p, out_dir):
            raise InvariantViolation("forced")

        monkeypatch.setattr(ExperimentRunner, "_recipe_cn_sweep", broken)
        assert cli.main(["run", "cn-sweep", "samples=1", f"out_dir={tmp_path}"]) == 1
        record = json.loads((tmp_path / "cn-sweep.error.json").read_text(encoding="utf-8"))
        assert record["kind"] == "InvariantViolation"
        assert record["params"]["samples"] == 1
        assert not (tmp_path / "cn-sweep.csv").exists()

    def test_list_and_check(self, capsys):
        assert cli.main(["list"]) == 0
        assert "wrinkled-gap: n_max" in capsys.readouterr().out
        assert cli.main(["check"]) == 0


class TestRecipes:
    def test_wrinkled_gap_table(self, tmp_path):
        assert cli.main(["run", "wrinkled-gap", "n_max=10", f"out_dir={tmp_path}"]) == 0
        rows = _read(tmp_path / "wrinkled-gap.csv")
        assert rows[0] == ["n", "d_n", "dbar_n", "gap", "lower_bound", "harmonic_bound"]
        assert len(rows) == 11
        for row in rows[1:]:
            assert float(row[1]) == pytest.approx(diagonal_distance(int(row[0])), abs=1e-9)
        assert rows[1][1] == "1.4142135623730951"

        manifest = json.loads((tmp_path / "wrinkled-gap.json").read_text(encoding="utf-8"))
        assert manifest["params"]["n_max"] == 10
        assert manifest["files"] == ["wrinkled-gap.csv"]
        assert "library_version" in manifest

    def test_sasaki_classify_horizontal(self, tmp_path):
        assert cli.main(["run", "sasaki-classify", "c=0", f"out_dir={tmp_path}"]) == 0
        header, row = _read(tmp_path / "sasaki-classify.csv")
        data = dict(zip(header, row))
        assert data["kind"] == "horizontal"
        assert float(data["kappa"]) <= 1e-5

    def test_reruns_are_byte_identical(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        for out in (first, second):
            assert cli.main(["run", "cn-sweep", "samples=50", "seed=3", f"out_dir={out}"]) == 0
        assert (first / "cn-sweep.csv").read_bytes() == (second / "cn-sweep.csv").read_bytes()
        m1 = json.loads((first / "cn-sweep.json").read_text(encoding="utf-8"))
        m2 = json.loads((second / "cn-sweep.json").read_text(encoding="utf-8"))
        for m in (m1, m2):
            del m["timestamp"], m["elapsed_seconds"], m["params"]["out_dir"]
        assert m1 == m2

    def test_cn_sweep_records_the_cycle_witness(self, tmp_path):
        result = ExperimentRunner(str(tmp_path)).run("cn-sweep", {"samples": 20})
        assert result["success"]
        checks = {row[0]: row for row in result["rows"]}
        assert checks["cn_six_cycle_witness"][2] == -12.0
        assert all(row[3] for row in result["rows"])

    def test_unknown_set_is_a_usage_error(self, tmp_path):
        result = ExperimentRunner(str(tmp_path)).run("circum-iterate", {"a": 0.5, "set": "sphere"})
        assert result["exit_code"] == 2

    def test_wrinkled_gap_witnesses_clear_the_floor(self, tmp_path):
        result = ExperimentRunner(str(tmp_path)).run("wrinkled-gap", {"n_max": 4, "witnesses": True})
        assert result["success"], result.get("error")
        header, *rows = _read(tmp_path / "wrinkled-gap-witnesses.csv")
        assert header == ["n", "delta", "floor"]
        assert [int(r[0]) for r in rows] == [1, 2, 3, 4]
        for _, delta, floor in rows[1:]:
            assert float(delta) >= float(floor) - 1e-9

    def test_wrinkled_profile_covers_the_ball(self, tmp_path):
        result = ExperimentRunner(str(tmp_path)).run("wrinkled-profile", {"radii": [2, 4, 8, 16], "triangles": 10})
        assert result["success"], result.get("error")
        summary = result["summary"]
        assert summary["n_max"] == 5
        assert summary["verdict"] is not None
        assert summary["mesh_links"] > summary["mesh_vertices"]

    def test_wrinkled_profile_defaults(self, tmp_path):
        params = ExperimentRunner(str(tmp_path)).resolve_params("wrinkled-profile", {"radii": [1]})
        assert params["triangles"] == 200
        assert params["grid"] == 2
        assert params["resolution"] is None

    def test_circum_iterate_tree_checks_every_step(self, tmp_path):
        result = ExperimentRunner(str(tmp_path)).run("circum-iterate", {"a": 0.5, "set": "tree", "points": 6, "seed": 2})
        assert result["success"], result.get("error")
        summary = result["summary"]
        assert summary["slack"] == 0.125
        assert summary["final_radius"] < 0.5
        for d, bound in zip(summary["center_diameters"], summary["diameter_bounds"]):
            assert d <= bound + 1e-9


def test_write_csv(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ("x", "ok", "name"), [(0.1, True, "a"), (2, False, "b")])
    assert path.read_text(encoding="utf-8") == "x,ok,name\n0.10000000000000001,true,a\n2,false,b\n"
