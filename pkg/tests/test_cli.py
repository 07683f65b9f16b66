import json
import math
import subprocess
import sys

import numpy as np
import pytest

from fastising import bayes, bench, cli, exact, partition as pt


def run(capsys, *argv):
    """Run the CLI in-process; return (exit code, stdout JSON or None, stderr JSON or None)."""
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


class TestScalars:
    def test_exact1nn(self, capsys):
        code, out, _ = run(capsys, "exact1nn", "--alpha", 0, "--beta", 0, "--n", 100)
        assert code == 0 and out["value"] == pytest.approx(69.3147, abs=1e-4)

    def test_approx(self, capsys):
        code, out, _ = run(capsys, "approx", "--alpha", 1, "--beta", 0.3, "--rows", 64, "--order", "second")
        assert code == 0 and out["method"] == "tilde_phi" and out["runtime_ms"] >= 0
        assert out["value"] == pt.log_z_tilde_phi((1, 0.3), 4096, 8).log_z

    @pytest.mark.parametrize("q", ["M", "S"])
    def test_approx_moments(self, capsys, q):
        code, out, _ = run(capsys, "approx", "--quantity", q, "--method", "phi", "--alpha", 1, "--beta", 0.3, "--rows", 16)
        assert code == 0 and out["quantity"] == q and out["value"] > 0

    def test_brute(self, capsys, torus45):
        code, out, _ = run(capsys, "brute", "--alpha", 1, "--beta", 0.3, "--rows", 4, "--cols", 5)
        ref = exact.brute_force(torus45, 1, 0.3)
        assert code == 0
        assert (out["logZ"], out["M"], out["S"], out["matches"]) == (ref.log_z, ref.m_active, ref.s_spin, ref.matches)

    def test_brute_then_pathsample_agree(self, capsys):
        _, b, _ = run(capsys, "brute", "--alpha", 1, "--beta", 0.5, "--rows", 4, "--cols", 5)
        _, p, _ = run(capsys, "pathsample", "--alpha", 1, "--beta", 0.5, "--topology", "lattice2d-torus", "--rows", 4,
                      "--cols", 5, "--knots", 20, "--burnin", 2000, "--samples", 5000, "--seed", 3)
        assert p["log_z"] == pytest.approx(b["logZ"], rel=0.01)

    def test_sample_deterministic(self, capsys):
        argv = ("sample", "--alpha", 0.5, "--beta", 0.4, "--rows", 8, "--burnin", 100, "--samples", 500, "--seed", 7)
        _, a, _ = run(capsys, *argv)
        _, b, _ = run(capsys, *argv)
        assert a == b and a["provenance"]["seed"] == 7

    def test_config_file(self, capsys, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"graph": {"topology": "circular-chain", "rows": 12}}))
        code, out, _ = run(capsys, "brute", "--alpha", 0.7, "--beta", 0.4, "--config", tmp_path / "c.json")
        assert code == 0 and out["n"] == 12 and out["m"] == 12


class TestProvenance:
    def test_fields_and_hash(self, capsys):
        _, a, _ = run(capsys, "exact1nn", "--alpha", 0, "--beta", 0.5, "--n", 10)
        _, b, _ = run(capsys, "exact1nn", "--alpha", 0, "--beta", 0.6, "--n", 10)
        assert set(a["provenance"]) == {"version", "command", "seed", "config_hash"}
        assert a["provenance"]["config_hash"] != b["provenance"]["config_hash"]

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.strip()


class TestErrors:
    @pytest.mark.parametrize("argv", [["approx", "--alpha", "1", "--beta", "x"], ["nope"], []])
    def test_usage_errors(self, capsys, argv):
        code, out, err = run(capsys, *argv)
        assert code == cli.EXIT_USAGE and out is None and err["error"] == "usage"

    def test_input_error(self, capsys):
        code, _, err = run(capsys, "brute", "--alpha", 0, "--beta", 0.3, "--rows", 5, "--cols", 5)
        assert code == cli.EXIT_ERROR and err["error"] == "input" and "24" in err["message"]

    def test_negative_beta(self, capsys):
        code, _, err = run(capsys, "exact1nn", "--alpha", 0, "--beta", -1, "--n", 10)
        assert code == cli.EXIT_ERROR and "error" in err

    def test_configuration_error(self, capsys):
        code, _, err = run(capsys, "approx", "--quantity", "M", "--method", "hphi", "--alpha", 0, "--beta", 0.3)
        assert code == cli.EXIT_ERROR and err["error"] == "configuration"

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "compare", "--ref", tmp_path / "a.csv", "--test", tmp_path / "b.csv")
        assert code == cli.EXIT_ERROR and err["error"] == "io"

    def test_bad_data(self, capsys, tmp_path):
        (tmp_path / "p.csv").write_text("nonsense\n1\n")
        code, _, err = run(capsys, "fmri", "--data", tmp_path / "p.csv", "--rows", 2, "--cols", 2, "--out", tmp_path / "m.csv")
        assert code == cli.EXIT_ERROR and err["error"] == "data"


class TestSurfaces:
    def test_grid_then_compare(self, capsys, tmp_path):
        common = ("--topology", "circular-chain", "--rows", 4096, "--subgrid", 4, 6)
        code, out, _ = run(capsys, "grid", "--method", "tilde", "--out", tmp_path / "t.csv", *common)
        assert code == 0 and out["cells"] == 24 and out["failed"] == 0
        run(capsys, "grid", "--method", "exact1nn", "--out", tmp_path / "r.json", *common)
        code, d, _ = run(capsys, "compare", "--ref", tmp_path / "r.json", "--test", tmp_path / "t.csv")
        ref, test = bench.Surface.load(tmp_path / "r.json"), bench.Surface.load(tmp_path / "t.csv")
        assert code == 0 and d["L1"] == bench.discrepancy(ref, test).L1
        assert d["R1"] > 0 and d["L1_over_V"] > 0

    def test_grid_file(self, capsys, tmp_path):
        (tmp_path / "g.json").write_text(json.dumps({"alphas": [0.5], "betas": [0.2, 0.4]}))
        run(capsys, "grid", "--quantity", "M", "--grid-file", tmp_path / "g.json", "--rows", 32, "--out", tmp_path / "m.csv")
        s = bench.Surface.load(tmp_path / "m.csv")
        assert s.grid.shape == (1, 2) and np.all(s.ok)

    def test_mcmc_grid_deterministic(self, capsys, tmp_path):
        argv = ("grid", "--method", "mcmc", "--quantity", "M", "--rows", 4, "--subgrid", 2, 2, "--knots", 3,
                "--burnin", 50, "--samples", 100, "--seed", 5)
        run(capsys, *argv, "--out", tmp_path / "a.csv")
        run(capsys, "--threads", 1, *argv, "--out", tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


class TestFmri:
    def test_map_and_summary(self, capsys, tmp_path):
        s = bayes.synthetic(rows=8, cols=8, replicates=3, seed=1, sweeps=50)
        bayes.write_pvalue_csv(tmp_path / "p.csv", s.pvalues, cols=8)
        argv = ("fmri", "--data", tmp_path / "p.csv", "--rows", 8, "--cols", 8, "--burnin", 20, "--samples", 50,
                "--label-warmup", 20, "--seed", 4, "--init-beta", 1.0, "--gamma-beta", 0.01, "--exact-ratios")
        code, a, _ = run(capsys, *argv, "--out", tmp_path / "a.csv", "--trace", tmp_path / "t.csv")
        _, b, _ = run(capsys, *argv, "--out", tmp_path / "b.csv")
        assert code == 0 and a["seed"] == 4 and "beta" in a and "acceptance" in a
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0] == "row,col,prob" and len(lines) == 65
        trace = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
        assert trace.shape == (50, 5)

    def test_mask(self, capsys, tmp_path):
        p = np.random.default_rng(0).random((2, 9)) * 1e-4
        bayes.write_pvalue_csv(tmp_path / "p.csv", p, cols=3)
        (tmp_path / "m.csv").write_text("row,col\n0,0\n1,1\n")
        code, _, _ = run(capsys, "fmri", "--data", tmp_path / "p.csv", "--mask", tmp_path / "m.csv", "--rows", 3, "--cols", 3,
                         "--order", "first", "--burnin", 10, "--samples", 20, "--label-warmup", 5, "--out", tmp_path / "o.csv")
        prob = np.loadtxt(tmp_path / "o.csv", delimiter=",", skiprows=1)[:, 2]
        assert code == 0 and np.all(prob[[1, 2, 3, 5, 6, 7, 8]] == 0)


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "fastising.cli", "exact1nn", "--alpha", "2", "--beta", "0", "--n", "10"],
                       capture_output=True, text=True, check=True)
    assert json.loads(r.stdout)["value"] == pytest.approx(10 * math.log1p(math.e ** 2), rel=1e-14)
