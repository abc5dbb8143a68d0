import json
import subprocess
import sys

import numpy as np
import pytest

from decorradj.cli import main
from decorradj.population import write_csv
from decorradj.simharness import METRICS_HEADER, gen_linear_instance

CFG = """family = linear_scaling
n_grid = 80, 120
gamma_exponent = 0.5
reps = 4
master_seed = 9
estimator_set = dim, adj, dc
"""


@pytest.fixture()
def data_files(tmp_path):
    pop = gen_linear_instance(200, 4, 3)
    rng = np.random.default_rng(0)
    T = (rng.random(200) < 0.5).astype(int)
    y = np.where(T == 1, pop.y1, pop.y0)
    obs, pot = tmp_path / "obs.csv", tmp_path / "pot.csv"
    write_csv(obs, pop.X[:, 1:], {"y": y, "t": T})
    write_csv(pot, pop.X[:, 1:], {"y": y, "t": T, "y1": pop.y1, "y0": pop.y0})
    return obs, pot


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_writes_metrics_raw_and_figures(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(CFG)
    out = tmp_path / "out"
    code, stdout, _ = _run(["simulate", "--config", cfg, "--out", out, "--raw", "--plot"], capsys)
    assert code == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == ",".join(METRICS_HEADER) and len(lines) == 1 + 2 * 3
    raw = [json.loads(x) for x in (out / "raw_reports.jsonl").read_text().splitlines()]
    assert len(raw) == 2 * 4 * 3
    for name in ("mse_vs_n.png", "coverage_vs_n.png", "ci_length_vs_n.png"):
        assert (out / name).stat().st_size > 0


def test_simulate_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("family = linear_scaling\nreps = 3\n")
    assert _run(["simulate", "--config", bad, "--out", tmp_path], capsys)[0] == 2
    assert _run(["simulate", "--config", tmp_path / "missing.cfg"], capsys)[0] == 2
    assert _run(["simulate"], capsys)[0] == 2
    assert _run(["frobnicate"], capsys)[0] == 2


@pytest.mark.parametrize("method", ["dim", "adj", "dc", "hajek_dim", "hajek_adj", "hajek_dc"])
def test_estimate_methods(data_files, capsys, method):
    obs, _ = data_files
    code, out, _ = _run(["estimate", "--data", obs, "--method", method, "--pi-t", 0.5], capsys)
    assert code == 0
    rep = json.loads(out)
    assert set(rep) == {"method", "point", "variance_hat", "ci_low", "ci_high", "alpha_level", "n"}
    assert rep["method"] == method and rep["n"] == 200
    assert rep["ci_high"] - rep["point"] == pytest.approx(rep["point"] - rep["ci_low"])


def test_estimate_options(data_files, capsys):
    obs, pot = data_files
    code, out, _ = _run(["estimate", "--data", pot, "--method", "dc_oracle", "--pi-t", "0.5", "--pi-r", "0.2"], capsys)
    assert code == 0 and json.loads(out)["method"] == "dc_oracle"
    code, out, _ = _run(["estimate", "--data", obs, "--method", "dc", "--backend", "lasso", "--pi-t", "0.5"], capsys)
    assert code == 0
    a = _run(["estimate", "--data", obs, "--method", "dc", "--seed", "4"], capsys)[1]
    b = _run(["estimate", "--data", obs, "--method", "dc", "--seed", "4"], capsys)[1]
    assert a == b


def test_estimate_error_codes(data_files, tmp_path, capsys):
    obs, _ = data_files
    assert _run(["estimate", "--data", obs, "--method", "nope"], capsys)[0] == 2
    assert _run(["estimate", "--data", obs, "--method", "dc", "--pi-t", "0.5", "--pi-r", "0.7"], capsys)[0] == 2
    assert _run(["estimate", "--data", obs, "--method", "adj", "--backend", "regressogram"], capsys)[0] == 2
    assert _run(["estimate", "--data", obs, "--method", "dc_oracle"], capsys)[0] == 3
    assert _run(["estimate", "--data", tmp_path / "none.csv", "--method", "dim"], capsys)[0] == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y,t\n1,2,3\n")
    assert _run(["estimate", "--data", bad, "--method", "dim"], capsys)[0] == 3
    treated = tmp_path / "treated.csv"
    treated.write_text("x1,y,t\n0.1,2,1\n0.2,3,1\n0.3,1,1\n")
    assert _run(["estimate", "--data", treated, "--method", "hajek_dim", "--pi-t", "0.5"], capsys)[0] == 4


def test_diagnose(data_files, capsys):
    obs, pot = data_files
    code, out, _ = _run(["diagnose", "--data", pot, "--pi-t", "0.5", "--sparsity", "2"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert {"kappa2", "mu_n", "bounds", "critical_radius"} <= set(doc)
    assert doc["bounds"]["ols"] > 0 and "lasso" in doc["bounds"]
    assert doc["critical_radius"]["r"] > 0
    code, out, _ = _run(["diagnose", "--data", obs, "--no-intercept"], capsys)
    assert code == 0 and json.loads(out)["mu_n"] is None
    assert _run(["diagnose", "--data", obs, "--delta", "2"], capsys)[0] == 2
    code, _, err = _run(["diagnose", "--data", obs, "--pi-t", "0.5", "--pi-r", "0.001", "--entropy-c", "1e9"], capsys)
    assert code == 4 and "numerical" in err


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(CFG)
    proc = subprocess.run(
        [sys.executable, "-m", "decorradj", "simulate", "--config", str(cfg), "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "metrics.csv").exists()
