import csv
import io
import json
from pathlib import Path

import pytest

from rpredict.experiments import runner
from rpredict.experiments.cli import main, parse_grid
from rpredict.experiments.runner import ExperimentConfig, ExperimentError, run_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_csv(path):
    return list(csv.DictReader(io.StringIO(Path(path).read_text())))


def err_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestConfig:
    def test_shipped_configs_validate(self):
        for path in CONFIGS.glob("*.json"):
            cfg = ExperimentConfig.load(path)
            assert cfg.experiment in runner.EXPERIMENTS

    def test_unknown_experiment(self):
        with pytest.raises(ExperimentError) as e:
            ExperimentConfig("fig5")
        assert e.value.code == runner.E_UNKNOWN_EXPERIMENT

    @pytest.mark.parametrize("bad", [
        {"experiment": "fig4", "params": {"k1": -1}},
        {"experiment": "fig4", "params": {"bogus": 1}},
        {"experiment": "fig4", "extra": 1},
        {"experiment": "fig4", "seed": -3},
        {"experiment": "riskinfo", "params": {"lambdas": [0.1]}},
        {"experiment": "minimax", "params": {"gamma": "x.json", "lambdas": [0.0]}},
    ])
    def test_schema_errors(self, bad):
        with pytest.raises(ExperimentError) as e:
            ExperimentConfig.from_dict(bad)
        assert e.value.code == runner.E_CONFIG_SCHEMA
        assert set(e.value.to_dict()) == {"error", "message"}

    def test_io_and_json_errors(self, tmp_path):
        with pytest.raises(ExperimentError) as e:
            ExperimentConfig.load(tmp_path / "missing.json")
        assert e.value.code == runner.E_IO
        (tmp_path / "bad.json").write_text("{nope")
        with pytest.raises(ExperimentError) as e:
            ExperimentConfig.load(tmp_path / "bad.json")
        assert e.value.code == runner.E_CONFIG_SCHEMA

    def test_paths_resolve_against_config_dir(self):
        cfg = ExperimentConfig.load(CONFIGS / "riskinfo.json")
        assert cfg.resolve("data/joint_3x3.json") == CONFIGS / "data" / "joint_3x3.json"


class TestHelpers:
    def test_csv_text(self):
        text = runner.csv_text(("a", "b", "c"), [(0.1, True, None), (2, False, "s")])
        assert text.splitlines() == ["a,b,c", "0.1,true,", "2,false,s"]

    def test_atomic_write(self, tmp_path):
        p = tmp_path / "sub" / "x.txt"
        runner.atomic_write(p, "one")
        runner.atomic_write(p, "two")
        assert p.read_text() == "two"
        assert [q.name for q in p.parent.iterdir()] == ["x.txt"]

    def test_parse_grid(self):
        assert parse_grid("0.1,0.5") == [0.1, 0.5]
        g = parse_grid("geom:0.01:1:3")
        assert g == pytest.approx([0.01, 0.1, 1.0])
        assert parse_grid("lin:1:2:3") == [1.0, 1.5, 2.0]
        for bad in ("a,b", "0,1", "geom:1:2", ""):
            with pytest.raises(ExperimentError):
                parse_grid(bad)

    def test_loss_shape_checked(self):
        cfg = ExperimentConfig("riskinfo", {"joint": "j", "lambdas": [1.0]})
        with pytest.raises(ExperimentError) as e:
            runner.parse_loss(cfg, {"matrix": [[0, 1]]}, 3)
        assert e.value.code == runner.E_INVALID_PARAMETER


class TestRuns:
    def test_riskinfo(self, tmp_path):
        res = run_config(ExperimentConfig.load(CONFIGS / "riskinfo.json"), tmp_path)
        rows = read_csv(res.csv_path)
        assert [float(r["lambda"]) for r in rows] == [0.05, 0.1, 0.2, 0.5, 1.0]
        assert all(r["converged"] == "true" for r in rows)
        vals = [float(r["value"]) for r in rows]
        assert vals == sorted(vals)
        sols = json.loads(res.extra_paths[0].read_text())
        assert len(sols) == 5 and "kernel" in sols[0]
        meta = json.loads(res.meta_path.read_text())
        assert meta["experiment"] == "riskinfo" and meta["version"]
        assert meta["output"] == "riskinfo.csv"

    def test_riskinfo_log_and_matrix_loss(self, tmp_path):
        joint = str(CONFIGS / "data" / "joint_3x3.json")
        for loss in ("log", {"matrix": [[0, 1, 2], [1, 0, 1], [2, 1, 0]]}):
            cfg = ExperimentConfig("riskinfo", {"joint": joint, "loss": loss,
                                                "lambdas": [0.3], "ncluster": 2})
            rows = read_csv(run_config(cfg, tmp_path).csv_path)
            assert len(rows) == 1 and float(rows[0]["value"]) > 0

    def test_minimax(self, tmp_path):
        res = run_config(ExperimentConfig.load(CONFIGS / "minimax.json"), tmp_path)
        rows = read_csv(res.csv_path)
        assert all(r["certified"] == "true" for r in rows)
        assert all(float(r["gap"]) <= 1e-7 for r in rows)
        w = [sum(float(r[f"w{v}"]) for v in range(3)) for r in rows]
        assert w == pytest.approx([1.0] * len(rows))

    def test_minimax_rejects_moment_set(self, tmp_path):
        g = tmp_path / "m.json"
        g.write_text(json.dumps({"variant": "moment", "mu_x": [0], "mu_y": 0,
                                 "sigma_x": [[1]], "sigma_y2": 1, "c_xy": [0.5]}))
        with pytest.raises(ExperimentError) as e:
            run_config(ExperimentConfig("minimax", {"gamma": str(g), "lambdas": [0.1]}), tmp_path)
        assert e.value.code == runner.E_INVALID_PARAMETER

    def test_missing_data_file(self, tmp_path):
        cfg = ExperimentConfig("riskinfo", {"joint": str(tmp_path / "no.json"), "lambdas": [1.0]})
        with pytest.raises(ExperimentError) as e:
            run_config(cfg, tmp_path)
        assert e.value.code == runner.E_IO

    def test_fig3_defaults_recorded(self, tmp_path):
        cfg = ExperimentConfig("fig3", {"n_mc": 2000}, seed=3)
        res = run_config(cfg, tmp_path)
        assert "lambdas" in res.meta["defaults_chosen"]
        assert len(res.meta["params"]["lambdas"]) == 12
        rows = read_csv(res.csv_path)
        assert list(rows[0]) == list(runner.regression.Fig3Point.CSV_HEADER)

    def test_fig3_reproducible(self, tmp_path):
        cfg = ExperimentConfig("fig3", {"n_mc": 3000, "lambdas": [0.1, 0.6]}, seed=9)
        a = run_config(cfg, tmp_path / "a").csv_path.read_text()
        b = run_config(cfg, tmp_path / "b").csv_path.read_text()
        assert a == b

    def test_fig4(self, tmp_path):
        res = run_config(ExperimentConfig.load(CONFIGS / "fig4.json"), tmp_path)
        rows = read_csv(res.csv_path)
        ts = [r for r in rows if r["series"] == "time_sharing"]
        assert len(ts) == 3 and all(r["lambda"] == "" for r in ts)
        assert len([r for r in rows if r["series"] == "optimal_info"]) == 81

    def test_sfrl_validate_small(self, tmp_path):
        cfg = ExperimentConfig("sfrl-validate", {"channels": 3, "max_alphabet": 4,
                                                 "trials": 2000, "chi2_channels": 2,
                                                 "chi2_trials": 5000}, seed=1)
        rows = read_csv(run_config(cfg, tmp_path).csv_path)
        assert {r["check"] for r in rows} == {"elogk", "chi2"}
        assert all(r["passed"] == "true" for r in rows)


class TestCli:
    def test_unknown_experiment(self, capsys):
        assert main(["fig9"]) == 2
        assert err_json(capsys)["error"] == "E_UNKNOWN_EXPERIMENT"

    def test_config_mismatch(self, tmp_path, capsys):
        assert main(["fig3", "--config", str(CONFIGS / "fig4.json"), "--out", str(tmp_path)]) == 2
        assert err_json(capsys)["error"] == "E_INVALID_PARAMETER"

    def test_fig4_with_seed_override(self, tmp_path, capsys):
        assert main(["fig4", "--config", str(CONFIGS / "fig4.json"), "--seed", "5",
                     "--out", str(tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        meta = json.loads(Path(out["meta"]).read_text())
        assert meta["seed"] == 5 and Path(out["csv"]).exists()

    def test_riskinfo_solve(self, tmp_path, capsys):
        assert main(["riskinfo", "solve", str(CONFIGS / "data" / "joint_3x3.json"),
                     "--lambda", "geom:0.1:1:3", "--out", str(tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert len(read_csv(out["csv"])) == 3

    def test_minimax_solve(self, tmp_path, capsys):
        assert main(["minimax", "solve", "--gamma", str(CONFIGS / "data" / "hull_3x3.json"),
                     "--lambda", "0.2", "--out", str(tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert read_csv(out["csv"])[0]["certified"] == "true"

    def test_bad_lambda(self, tmp_path, capsys):
        assert main(["minimax", "solve", "--gamma", str(CONFIGS / "data" / "hull_3x3.json"),
                     "--lambda", "-1", "--out", str(tmp_path)]) == 2
        assert err_json(capsys)["error"] == "E_INVALID_PARAMETER"

    def test_regress_fig3(self, tmp_path, capsys):
        out_csv = tmp_path / "r" / "f3.csv"
        assert main(["regress", "fig3", "--cxy", "0.9", "--sigma-x", "2", "--sigma-y", "1.5",
                     "--lambdas", "0.1,0.5", "--n", "2000", "--out", str(out_csv)]) == 0
        rows = read_csv(out_csv)
        assert len(rows) == 2
        meta = json.loads((tmp_path / "r" / "f3.csv.meta.json").read_text())
        # standard deviations on the command line, variances in the config
        assert meta["params"]["sigma_x2"] == 4.0 and meta["params"]["sigma_y2"] == 2.25

    def test_regress_invalid_moments(self, tmp_path, capsys):
        assert main(["regress", "fig3", "--cxy", "3", "--lambdas", "0.1",
                     "--out", str(tmp_path / "x.csv")]) == 2
        assert err_json(capsys)["error"] == "E_INVALID_PARAMETER"
