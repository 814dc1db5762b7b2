import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from compound_tails import cli
from compound_tails.compound_engine import TailCurve
from compound_tails.errors import ContractError


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def small_cfg():
    return {
        "count": {"family": "discretized_weibull", "beta": 0.5},
        "severity": {"family": "exponential", "mu": 1.0},
        "x_grid": {"geometric": {"start": 1, "stop": 200, "points": 8}},
        "mc": {"samples": 20000},
        "seed": 3,
    }


class TestConfig:
    def test_geometric_grid(self, small_cfg):
        cfg = cli.ExperimentConfig.from_dict(small_cfg)
        np.testing.assert_allclose(cfg.x_grid, np.geomspace(1, 200, 8))

    @pytest.mark.parametrize("grid", [[3.0, 2.0], {"values": [1.0, 1.0]}])
    def test_grid_must_increase(self, small_cfg, grid):
        with pytest.raises((ContractError, ValueError)):
            cli.ExperimentConfig.from_dict(dict(small_cfg, x_grid=grid))

    def test_inversion_needs_exponential(self, small_cfg):
        bad = dict(small_cfg, severity={"family": "pareto", "beta_index": 2.5}, engine="poisson_inversion")
        with pytest.raises((ContractError, ValueError)):
            cli.ExperimentConfig.from_dict(bad)

    def test_unknown_engine(self, small_cfg):
        with pytest.raises((ContractError, ValueError)):
            cli.ExperimentConfig.from_dict(dict(small_cfg, engine="panjer"))


class TestCompare:
    def test_identical_curves(self):
        c = TailCurve(np.array([1.0, 2.0]), np.array([-1.0, -3.0]))
        table = cli.compare(c, c)
        np.testing.assert_array_equal(table.prob_ratio, 1.0)
        np.testing.assert_array_equal(table.log_ratio, 1.0)

    def test_degenerate_severity_heavy_n_identity(self, tmp_path):
        cfg = cli.ExperimentConfig.from_dict({
            "count": {"family": "pareto_count", "gamma": 1.5, "c": 1.0},
            "severity": {"family": "degenerate", "mu": 1.0},
            "x_grid": [0.5, 3.0, 40.0, 900.0],
            "engine": "lattice", "h": 0.5, "refine": False,
        })
        table = cli.compare(cli.oracle_curve(cfg), cli.approximation_curve(cfg, "heavy_n"))
        np.testing.assert_allclose(table.prob_ratio, 1.0, rtol=1e-9)
        assert np.all(table.ratio_lower <= 1 + 1e-9) and np.all(table.ratio_upper >= 1 - 1e-9)

    def test_grid_mismatch(self):
        with pytest.raises(ContractError):
            cli.compare(TailCurve(np.array([1.0]), np.array([-1.0])), TailCurve(np.array([2.0]), np.array([-1.0])))

    def test_foss_table_shows_divergence(self):
        cfg = cli.ExperimentConfig.from_dict({
            "count": {"family": "discretized_weibull", "beta": 0.55},
            "severity": {"family": "exponential", "mu": 1.0},
            "x_grid": {"geometric": {"start": 10, "stop": 1e7, "points": 13}},
        })
        oracle = cli.oracle_curve(cfg)
        raw = cli.compare(oracle, cli.approximation_curve(cfg, "heavy_n"))
        corrected = cli.compare(oracle, cli.approximation_curve(cfg, "foss"))
        assert raw.prob_ratio.max() > 2
        assert np.abs(np.log(corrected.prob_ratio[-1])) < np.abs(np.log(raw.prob_ratio[-1]))


class TestRun:
    def test_artifacts(self, tmp_path, small_cfg):
        out = tmp_path / "out"
        assert cli.run(small_cfg, str(out)) == 0
        names = sorted(os.listdir(out))
        # a foss_window prediction adds the corrected curve to the defaults
        assert names == ["approx_foss.csv", "approx_heavy_n.csv", "approx_heavy_x.csv",
                         "mc.csv", "oracle.csv", "ratios.csv", "report.json"]
        assert (out / "ratios.csv").read_text().startswith("approximation,x,prob_ratio")
        mc = TailCurve.from_csv(str(out / "mc.csv"))
        assert mc.stderr is not None

    def test_byte_identical_reruns(self, tmp_path, small_cfg):
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.run(small_cfg, str(a)) == 0 and cli.run(small_cfg, str(b)) == 0
        for name in os.listdir(a):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_seed_override_changes_only_mc(self, tmp_path, small_cfg):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.run(small_cfg, str(a), seed=1)
        cli.run(small_cfg, str(b), seed=2)
        assert (a / "oracle.csv").read_bytes() == (b / "oracle.csv").read_bytes()
        assert (a / "mc.csv").read_bytes() != (b / "mc.csv").read_bytes()

    def test_zero_count(self, tmp_path):
        cfg = {"count": {"family": "degenerate", "k": 0}, "severity": {"family": "exponential", "mu": 1.0},
               "x_grid": [0.0, 1.0, 5.0]}
        out = tmp_path / "z"
        assert cli.run(cfg, str(out)) == 0
        curve = TailCurve.from_csv(str(out / "oracle.csv"))
        assert np.all(curve.tail == 0.0)

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "never"
        assert cli.main(["run", str(bad), "--out", str(out)]) == 2
        assert not out.exists()
        assert "run" in capsys.readouterr().err

    def test_numeric_failure_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "oracle_curve", lambda cfg: (_ for _ in ()).throw(cli.NumericError("boom")))
        cfg = {"count": {"family": "geometric", "p": 0.5}, "severity": {"family": "exponential", "mu": 1.0},
               "x_grid": [1.0, 2.0]}
        out = tmp_path / "n"
        assert cli.run(cfg, str(out)) == 3
        assert not out.exists() or not os.listdir(out)


class TestSubcommands:
    def test_classify_with_diagnostics(self, tmp_path, small_cfg, capsys):
        path = _write(tmp_path, small_cfg)
        diag = tmp_path / "diag.csv"
        assert cli.main(["classify", "--config", path, "--diag", str(diag)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["predicted"] == "foss_window"
        header = diag.read_text().splitlines()[0]
        assert header.endswith("x,ratio,window_flag")

    def test_tail_approx_compare(self, tmp_path, small_cfg):
        path = _write(tmp_path, small_cfg)
        o, a, r = tmp_path / "o.csv", tmp_path / "a.csv", tmp_path / "r.csv"
        assert cli.main(["tail", path, "--out", str(o)]) == 0
        assert cli.main(["approx", path, "--name", "heavy_n", "--out", str(a)]) == 0
        assert cli.main(["compare", str(o), str(a), "--out", str(r)]) == 0
        assert r.read_text().splitlines()[0] == "x,prob_ratio,log_ratio,ratio_lower,ratio_upper"

    def test_cramer_needs_n(self, tmp_path, small_cfg):
        assert cli.main(["approx", _write(tmp_path, small_cfg), "--name", "cramer"]) == 2

    def test_mc_flags(self, tmp_path, small_cfg):
        path = _write(tmp_path, small_cfg)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert cli.main(["mc", path, "--samples", "5000", "--seed", "9", "--dep", "first_claim:0.8", "--out", str(a)]) == 0
        assert cli.main(["mc", path, "--samples", "5000", "--seed", "9", "--dep", "first_claim:0.8", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0].endswith(",stderr")

    @pytest.mark.skipif(shutil.which("compound-tails") is None, reason="console script not installed")
    def test_console_script(self, tmp_path, small_cfg):
        path = _write(tmp_path, small_cfg)
        res = subprocess.run(["compound-tails", "classify", path], capture_output=True, text=True)
        assert res.returncode == 0 and json.loads(res.stdout)["predicted"] == "foss_window"

    def test_module_entry(self):
        res = subprocess.run([sys.executable, "-m", "compound_tails.cli", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "classify" in res.stdout
