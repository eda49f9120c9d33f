import json
import math
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mi_lab import cli, io
from mi_lab import distributions as dist
from mi_lab import experiments as exp
from mi_lab.errors import UsageError


def record(steps=5, **kw):
    cfg = exp.BenchConfig(dist.GaussianPairSpec(3, 0.5), kw.pop("kind", "doe_gaussian"), N=8,
                          steps=steps, seed=3, hidden=8, **kw)
    return exp.run_benchmark(cfg)


def run_cli(args):
    lines = []
    code = cli.run_command(cli.parse_config(args), lines.append)
    return code, "\n".join(lines)


class TestRecordsIo:
    def test_roundtrip_bitwise(self, tmp_path):
        rec = record()
        rec = replace(rec, per_step_estimates=rec.per_step_estimates * math.pi + 1e-300)
        io.write_records([rec], tmp_path)
        back = io.read_records(tmp_path)[0]
        assert back.per_step_estimates.tobytes() == rec.per_step_estimates.tobytes()
        assert back.config == rec.config and back.final_estimate == rec.final_estimate
        assert back.ground_truth == rec.ground_truth

    @settings(max_examples=25)
    @given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=30))
    def test_any_floats_roundtrip(self, tmp_path_factory, values):
        rec = replace(record(steps=1), per_step_estimates=np.array(values),
                      flagged=np.zeros(len(values), dtype=bool))
        path = io.write_run_csv(rec, tmp_path_factory.mktemp("csv") / "r.csv")
        est, flagged = io.read_run_csv(path)
        assert est.tobytes() == np.array(values).tobytes() and not flagged.any()

    def test_non_finite_and_flags(self, tmp_path):
        rec = record(steps=3)
        rec = replace(rec, per_step_estimates=np.array([1.0, np.nan, np.inf]),
                      flagged=np.array([False, True, True]))
        path = io.write_run_csv(rec, tmp_path / "r.csv")
        est, flagged = io.read_run_csv(path)
        assert np.isnan(est[1]) and est[2] == np.inf
        np.testing.assert_array_equal(flagged, [False, True, True])

    def test_row_count(self, tmp_path):
        rec = replace(record(steps=1), per_step_estimates=np.zeros(3000),
                      flagged=np.zeros(3000, dtype=bool))
        lines = io.write_run_csv(rec, tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "step,estimate,flagged" and len(lines) == 3001

    def test_summary_ground_truth(self, tmp_path):
        rec = exp.run_benchmark(exp.BenchConfig(dist.GaussianPairSpec(128, 0.5), "doe_gaussian",
                                                N=8, steps=1, hidden=8))
        io.write_records([rec], tmp_path)
        summary = io.read_summary(tmp_path / io.SUMMARY_NAME)
        (entry,) = summary["runs"]
        assert round(entry["ground_truth"], 2) == 18.41
        assert entry["csv"] == io.csv_name(rec)

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            io.write_records([record(steps=1)], blocker / "sub")


class TestParseConfig:
    def test_bench_defaults(self):
        cfg = cli.parse_config(["bench", "--rho=0.5", "--estimator=doe_gaussian"])
        b = cli.bench_config(cfg)
        assert (b.spec.d, b.N, b.steps, b.spec.rho) == (128, 128, 3000, 0.5)

    def test_empty_args(self):
        with pytest.raises(UsageError, match="bench.*selftest"):
            cli.parse_config([])

    def test_file_then_override(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"lr": 1e-3, "steps": 10}))
        cfg = cli.parse_config(["bench", f"--config={path}", "--lr=5e-4"])
        assert cfg.params["lr"] == 5e-4 and cfg.params["steps"] == 10

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{lr: ")
        with pytest.raises(UsageError):
            cli.parse_config(["bench", f"--config={path}"])

    def test_unknown_file_key_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"learning_rate": 1e-3}))
        with pytest.raises(UsageError, match="learning_rate"):
            cli.parse_config(["bench", f"--config={path}"])

    def test_type_mismatch_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"steps": "many"}))
        with pytest.raises(UsageError, match="steps"):
            cli.parse_config(["bench", f"--config={path}"])

    def test_unknown_flag(self):
        with pytest.raises(UsageError):
            cli.parse_config(["bench", "--bogus=1"])

    def test_seed_precedence(self, tmp_path, monkeypatch):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 11}))
        monkeypatch.setenv(cli.SEED_ENV, "22")
        assert cli.parse_config(["bench", f"--config={path}", "--seed=33"]).master_seed == 33
        assert cli.parse_config(["bench", f"--config={path}"]).master_seed == 11
        assert cli.parse_config(["bench"]).master_seed == 22
        monkeypatch.delenv(cli.SEED_ENV)
        assert cli.parse_config(["bench"]).master_seed == 0

    def test_bad_env_seed(self, monkeypatch):
        monkeypatch.setenv(cli.SEED_ENV, "abc")
        with pytest.raises(UsageError):
            cli.parse_config(["bench"])


class TestRunCommand:
    def test_gaussian_mi(self):
        code, text = run_cli(["oracle", "gaussian-mi", "--d=128", "--rho=0.9"])
        assert code == 0 and text == "106.287"

    def test_ceilings(self):
        code, text = run_cli(["oracle", "ceilings", "--N=128"])
        assert "ln_N = 4.85203" in text

    def test_rho_for_mi_inverts(self):
        _, text = run_cli(["oracle", "rho-for-mi", "--mi=18.41"])
        assert abs(dist.gaussian_mi(dist.GaussianPairSpec(128, float(text))) - 18.41) < 1e-3

    def test_pac_bayes_prefactor(self):
        _, text = run_cli(["oracle", "pac-bayes", "--lam=5"])
        assert "prefactor = 1.11111" in text

    def test_selftest_exit_zero(self):
        assert run_cli(["selftest"])[0] == 0

    def test_bench_writes_outputs(self, tmp_path):
        code, _ = run_cli(["bench", "--d=3", "--N=8", "--steps=4", "--hidden=8",
                           f"--out={tmp_path}"])
        assert code == 0
        summary = io.read_summary(tmp_path / io.SUMMARY_NAME)
        assert len(summary["runs"]) == 1
        est, _ = io.read_run_csv(tmp_path / summary["runs"][0]["csv"])
        assert est.shape == (4,)

    def test_bench_grid(self, tmp_path):
        run_cli(["bench", "--d=3", "--N=8", "--steps=2", "--hidden=8", "--grid=true",
                 f"--out={tmp_path}"])
        runs = io.read_summary(tmp_path / io.SUMMARY_NAME)["runs"]
        assert [r["config"]["lr"] for r in runs] == list(exp.DEFAULT_LRS)

    def test_demo_writes_report(self, tmp_path):
        code, _ = run_cli(["demo-kl", "--N=2", "--trials=2000", f"--out={tmp_path}"])
        report = json.loads((tmp_path / "demo_kl.json").read_text())
        assert code == 0 and report["trials"] == 2000

    def test_demo_entropy_vacuous(self, tmp_path):
        code, text = run_cli(["demo-entropy", "--support=100", "--trials=10", f"--out={tmp_path}"])
        assert code == 0 and "vacuous" in text


class TestMain:
    def test_exit_codes(self, capsys):
        assert cli.main([]) == 2
        assert cli.main(["bench", "--estimator=bogus", "--steps=1"]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "mi_lab", "oracle", "outlier", "--N=2", "--phi=0.5"],
                             capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "0.25"
