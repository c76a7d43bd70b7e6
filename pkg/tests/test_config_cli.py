import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from auxlab.cli import main
from auxlab.config import (
    RunConfig,
    config_to_text,
    load_config,
    parse_config,
)
from auxlab.errors import ConfigError

REPO = Path(__file__).resolve().parent.parent
EXPERIMENT_CFG = REPO / "configs" / "bump_experiment.cfg"
FROZEN_CFG = REPO / "configs" / "frozen_basin.cfg"
LANDSCAPE_CFG = REPO / "configs" / "landscape.cfg"


def small_experiment_cfg(tmp_path, seeds=6, **overrides):
    cfg = load_config(EXPERIMENT_CFG)
    cfg = replace(cfg, run=replace(cfg.run, seeds=seeds, **overrides))
    path = tmp_path / "exp.cfg"
    path.write_text(config_to_text(cfg), encoding="utf-8")
    return path


def small_landscape_cfg(tmp_path, n_theta=6, n_b=5):
    cfg = load_config(LANDSCAPE_CFG)
    cfg = replace(cfg, landscape=replace(cfg.landscape, n_theta=n_theta, n_b=n_b))
    path = tmp_path / "land.cfg"
    path.write_text(config_to_text(cfg), encoding="utf-8")
    return path


class TestConfigFormat:
    def test_round_trip_default(self):
        cfg = RunConfig()
        assert parse_config(config_to_text(cfg)) == cfg

    def test_round_trip_packaged_configs(self):
        for path in (EXPERIMENT_CFG, FROZEN_CFG, LANDSCAPE_CFG):
            cfg = load_config(path)
            assert parse_config(config_to_text(cfg)) == cfg

    def test_round_trip_nontrivial_values(self):
        text = """
        [model]
        kind = mlp
        widths = 2,7,1
        activation = relu
        [optimizer]
        lr = 0.12345678901234567
        [run]
        variants = original,monitor
        freeze = theta
        """
        cfg = parse_config(text)
        assert cfg.model.widths == (2, 7, 1)
        assert parse_config(config_to_text(cfg)) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[model]\nkind = bump_curve\ncolour = red\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[samovar]\nheat = high\n")

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# hello\n\n[augment]\nlam = 0.5  # inline\n")
        assert cfg.augment.lam == 0.5

    def test_lambda_must_be_positive(self):
        with pytest.raises(ConfigError, match="lambda must be positive"):
            parse_config("[augment]\nlam = 0\n")

    def test_requires_fixture_xor_path(self):
        with pytest.raises(ConfigError):
            parse_config("[data]\nfixture = bump-hinge\npath = d.csv\n")
        with pytest.raises(ConfigError):
            parse_config("[data]\nfixture =\n")


class TestExitCodes:
    def test_bad_lambda_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[augment]\nlam = 0\n", encoding="utf-8")
        assert main(["train", "--config", str(bad)]) == 2

    def test_missing_config_exits_2(self):
        assert main(["train", "--config", "/nonexistent/x.cfg"]) == 2

    def test_missing_dataset_exits_3(self, tmp_path):
        cfg = tmp_path / "d.cfg"
        cfg.write_text("[data]\nfixture =\npath = /nonexistent/data.csv\n", encoding="utf-8")
        assert main(["train", "--config", str(cfg)]) == 3

    def test_unknown_example_exits_4(self):
        assert main(["example", "nonexistent"]) == 4


class TestExample:
    def test_all_examples_pass(self, capsys):
        assert main(["example", "all"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc) == 5
        assert all(rep["passed"] for rep in doc)

    def test_two_sample_value_at_quarter(self, capsys):
        assert main(["example", "squared-two-sample", "--eps", "0.25"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc[0]["rows"][0]["general"] == pytest.approx(1.0369700, abs=1e-6)

    def test_writes_report_file(self, tmp_path, capsys):
        out = tmp_path / "reports"
        assert main(["example", "hinge-one-sample", "--out", str(out)]) == 0
        capsys.readouterr()
        saved = json.loads((out / "examples.json").read_text())
        assert saved[0]["discrepancy"]


class TestTrain:
    def test_frozen_basin_run(self, tmp_path, capsys):
        out = tmp_path / "frozen"
        assert main(["train", "--config", str(FROZEN_CFG), "--out", str(out)]) == 0
        capsys.readouterr()
        records = [
            json.loads(ln)
            for ln in (out / "runrecords.jsonl").read_text().splitlines()
        ]
        assert len(records) == 6  # 3 seeds x 2 variants
        monitor_recs = [r for r in records if r["variant"] == "monitor"]
        assert any(r["monitor_events"] for r in monitor_recs)
        assert any(
            r["restarts"] > 0 or r["termination"] == "monitor_halt" for r in monitor_recs
        )
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_seeds"] == 3
        assert (out / "histograms.csv").exists()
        assert (out / "histograms.png").exists()
        assert (out / "trajectories.png").exists()
        traj = (out / "trajectories" / "monitor-0.csv").read_text().splitlines()
        assert traj[0] == "iter,objective,grad_norm,aux_norm"

    def test_experiment_summary_counts(self, tmp_path, capsys):
        cfg = small_experiment_cfg(tmp_path, seeds=6)
        out = tmp_path / "exp"
        assert main(["train", "--config", str(cfg), "--out", str(out), "--no-plot"]) == 0
        capsys.readouterr()
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["runs"]) == 18
        for variant in ("original", "augmented", "monitor"):
            assert summary["variants"][variant]["runs"] == 6

    def test_byte_identical_reruns(self, tmp_path, capsys):
        cfg = small_experiment_cfg(tmp_path, seeds=4)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["train", "--config", str(cfg), "--out", str(out1), "--no-plot"]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(out2), "--no-plot"]) == 0
        capsys.readouterr()
        for name in ("runrecords.jsonl", "summary.json", "histograms.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        for f1 in sorted((out1 / "trajectories").iterdir()):
            f2 = out2 / "trajectories" / f1.name
            assert f1.read_bytes() == f2.read_bytes()

    def test_jobs_matches_serial(self, tmp_path, capsys):
        cfg = small_experiment_cfg(tmp_path, seeds=4)
        out1, out2 = tmp_path / "serial", tmp_path / "parallel"
        assert main(["train", "--config", str(cfg), "--out", str(out1), "--no-plot"]) == 0
        assert main(
            ["train", "--config", str(cfg), "--out", str(out2), "--no-plot", "--jobs", "3"]
        ) == 0
        capsys.readouterr()
        assert (out1 / "runrecords.jsonl").read_bytes() == (
            out2 / "runrecords.jsonl"
        ).read_bytes()

    def test_default_out_dir_and_latest_pointer(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = small_experiment_cfg(tmp_path, seeds=1)
        assert main(["train", "--config", str(cfg), "--no-plot"]) == 0
        capsys.readouterr()
        latest = (tmp_path / "runs" / "latest").read_text().strip()
        assert (tmp_path / "runs" / latest / "summary.json").exists()


class TestLandscapeCmd:
    def test_small_grid(self, tmp_path, capsys):
        cfg = small_landscape_cfg(tmp_path, n_theta=6, n_b=5)
        out = tmp_path / "land"
        assert main(["landscape", "--config", str(cfg), "--out", str(out)]) == 0
        capsys.readouterr()
        lines = (out / "landscape.csv").read_text().splitlines()
        assert lines[0] == "theta,b,value"
        assert len(lines) == 1 + 6 * 5
        meta = json.loads((out / "landscape_meta.json").read_text())
        assert meta["inner_solve_failures"] == 0
        assert (out / "landscape.png").exists()
        # the global-basin cell (theta = 0.8, b = 0) is essentially zero
        rows = {}
        for ln in lines[1:]:
            t, b, v = (float(x) for x in ln.split(","))
            rows[(t, b)] = v
        assert rows[(0.8, 0.0)] <= 1e-6

    def test_deterministic_csv(self, tmp_path, capsys):
        cfg = small_landscape_cfg(tmp_path, n_theta=4, n_b=4)
        out1, out2 = tmp_path / "l1", tmp_path / "l2"
        assert main(["landscape", "--config", str(cfg), "--out", str(out1), "--no-plot"]) == 0
        assert main(["landscape", "--config", str(cfg), "--out", str(out2), "--no-plot"]) == 0
        capsys.readouterr()
        assert (out1 / "landscape.csv").read_bytes() == (out2 / "landscape.csv").read_bytes()

    def test_jobs_matches_serial(self, tmp_path, capsys):
        cfg = small_landscape_cfg(tmp_path, n_theta=5, n_b=4)
        out1, out2 = tmp_path / "serial", tmp_path / "parallel"
        assert main(["landscape", "--config", str(cfg), "--out", str(out1), "--no-plot"]) == 0
        assert main(
            ["landscape", "--config", str(cfg), "--out", str(out2), "--no-plot", "--jobs", "3"]
        ) == 0
        capsys.readouterr()
        assert (out1 / "landscape.csv").read_bytes() == (out2 / "landscape.csv").read_bytes()

    def test_default_grid_shape(self, tmp_path, capsys):
        """The packaged landscape config yields the full 40000-row CSV."""
        out = tmp_path / "full"
        assert main(
            ["landscape", "--config", str(LANDSCAPE_CFG), "--out", str(out), "--no-plot"]
        ) == 0
        capsys.readouterr()
        lines = (out / "landscape.csv").read_text().splitlines()
        assert len(lines) == 1 + 40000
        meta = json.loads((out / "landscape_meta.json").read_text())
        assert meta["inner_solve_failures"] == 0


class TestVerifyCmd:
    def test_grad_passes_on_default_config(self, tmp_path, capsys):
        cfg = small_experiment_cfg(tmp_path)
        assert main(["verify", "grad", "--config", str(cfg)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["passed"]

    def test_pgb_refuted_on_one_sample_fixture(self, tmp_path, capsys):
        cfg = small_experiment_cfg(tmp_path)
        code = main(
            ["verify", "pgb", "--config", str(cfg), "--fixture", "squared-one-sample"]
        )
        doc = json.loads(capsys.readouterr().out)
        assert code == 1
        assert not doc["passed"]
        assert "REFUTED" in doc["verdict"]["notes"]

    def test_pgb_consistent_on_same_input_fixture(self, tmp_path, capsys):
        cfg = small_experiment_cfg(tmp_path)
        code = main(
            [
                "verify",
                "pgb",
                "--config",
                str(cfg),
                "--fixture",
                "squared-two-sample-same-input",
            ]
        )
        doc = json.loads(capsys.readouterr().out)
        assert code == 0
        assert "CONSISTENT" in doc["verdict"]["notes"]

    def test_factorization_fixtures(self, tmp_path, capsys):
        cfg = small_experiment_cfg(tmp_path)
        assert main(
            ["verify", "factorization", "--config", str(cfg), "--fixture", "a-zero"]
        ) == 0
        capsys.readouterr()
        assert main(
            ["verify", "factorization", "--config", str(cfg), "--fixture", "a-nonzero"]
        ) == 0
        capsys.readouterr()

    def test_record_checks_on_realizable_problem(self, tmp_path, capsys):
        data = tmp_path / "line.csv"
        data.write_text(
            "x1,y1\n-1.0,-2.0\n0.0,0.0\n0.5,1.0\n1.0,2.0\n", encoding="utf-8"
        )
        cfg_text = f"""
[model]
kind = mlp
widths = 1,1
activation = identity

[loss]
kind = squared

[data]
fixture =
path = {data}

[augment]
lam = 0.01

[optimizer]
method = gd
lr = 0.2
max_iters = 30000
grad_tol = 1e-10

[run]
seeds = 3
variants = augmented
theta_init = -0.5,0.5
"""
        cfg = tmp_path / "lin.cfg"
        cfg.write_text(cfg_text, encoding="utf-8")
        out = tmp_path / "linout"
        assert main(["train", "--config", str(cfg), "--out", str(out), "--no-plot"]) == 0
        capsys.readouterr()
        runs = str(out / "runrecords.jsonl")
        for what in ("stationary-a", "local-min", "realizable", "factorization"):
            code = main(["verify", what, "--config", str(cfg), "--runs", runs])
            doc = json.loads(capsys.readouterr().out)
            assert code == 0, (what, doc)
        code = main(["verify", "pgb", "--config", str(cfg), "--runs", runs])
        doc = json.loads(capsys.readouterr().out)
        assert code == 0 and doc["candidates"] >= 1


class TestOracleCmd:
    def test_bump_grid_minimum(self, tmp_path, capsys):
        cfg = small_experiment_cfg(tmp_path)
        assert main(["oracle", "--config", str(cfg)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["min_value"] == 0.0
        assert 0.75 <= doc["argmin"][0] <= 0.85
