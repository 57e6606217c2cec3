import csv
import json
import math

import numpy as np
import pytest

from d2dpower import analytic as an
from d2dpower import cli, harness
from d2dpower.config import ConfigError, ExperimentConfig
from d2dpower.core import dbm_to_watt


def write_config(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


# -- configuration -----------------------------------------------------------

def test_default_config_values():
    c = ExperimentConfig()
    p = c.network_params(3.0, -10.0)
    assert p.sigma2 == pytest.approx(1e-13)
    assert p.p_max == pytest.approx(dbm_to_watt(23.0))
    assert p.beta_d == pytest.approx(0.1)
    assert p.pathloss_offset_db == 30.6
    assert c.settings().gamma == 0.06 and c.settings().cell.isd == 500.0
    g = c.grid_dbm()
    assert g[0] == -60.0 and g[-1] == 23.0 and np.all(np.diff(g) > 0)


def test_empty_file_reproduces_defaults(tmp_path):
    assert ExperimentConfig.load(write_config(tmp_path, "")) == ExperimentConfig()


def test_load_toml_values(tmp_path):
    cfg = ExperimentConfig.load(write_config(tmp_path, 'alphas = [2.5, 4.0]\nbetas_db = -5\n'
                                                       'cellular_power = "uniform_dbm"\ndrops = 3\n'))
    assert cfg.alphas == (2.5, 4.0) and cfg.betas_db == (-5.0,)
    assert cfg.sweep_points() == [(2.5, -5.0), (4.0, -5.0)]
    assert cfg.network_params(4.0, -5.0).e_c > 0


@pytest.mark.parametrize("text", [
    "no_such_key = 1", "alphas = []", "alphas = [1.5]", "grid_max_dbm = 20.0", "drops = 0",
    "grid_step_db = 0.0", "gamma = 1.5", 'cellular_power = "lognormal"', "lambda_d = 0.0",
    "this is not toml",
])
def test_invalid_configs_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(write_config(tmp_path, text))


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "absent.toml")


def test_digest_tracks_content():
    a, b = ExperimentConfig(), ExperimentConfig(master_seed=2)
    assert a.digest() == ExperimentConfig().digest() != b.digest()
    assert json.loads(json.dumps(a.as_dict()))["alphas"] == [3.0]


# -- analytic command --------------------------------------------------------

def test_analytic_csv_schema_and_metadata(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["analytic", "--out", str(out)]) == 0
    header, data = read_csv(out / "alpha3_beta-10dB.csv")
    assert header == ["p_dBm", "cdf_exact", "cdf_il", "cdf_bound"]
    assert data.shape == (84, 4)
    for col in data[:, 1:].T:
        assert np.all((col >= 0) & (col <= 1)) and np.all(np.diff(col) >= 0)
    assert np.all(data[:, 3] >= data[:, 1])
    meta = json.loads((out / "alpha3_beta-10dB.json").read_text())
    assert {"e_d", "e_c", "residual", "iterations", "seed", "config_hash"} <= set(meta)
    assert meta["config_hash"] == ExperimentConfig().digest() == ExperimentConfig(output="x", threads=4).digest()


def test_analytic_output_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, "grid_min_dbm = -20.0\ngrid_step_db = 5.0\n")
    for name in ("a", "b"):
        assert cli.main(["analytic", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    for f in ("alpha3_beta-10dB.csv", "alpha3_beta-10dB.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_degenerate_sweep_single_row(tmp_path):
    cfg = write_config(tmp_path, "grid_min_dbm = 23.0\ngrid_max_dbm = 23.0\n")
    out = tmp_path / "o"
    assert cli.main(["analytic", "--config", cfg, "--out", str(out)]) == 0
    files = list(out.glob("*.csv"))
    assert len(files) == 1
    _, data = read_csv(files[0])
    assert data.shape == (1, 4)


def test_noise_free_columns_equal_closed_form(tmp_path):
    cfg = write_config(tmp_path, "noise_dbm = -inf\nalphas = [2.5, 3.0, 4.0]\ngrid_step_db = 3.0\n")
    out = tmp_path / "o"
    assert cli.main(["analytic", "--config", cfg, "--out", str(out)]) == 0
    assert len(list(out.glob("*.csv"))) == 3
    c = ExperimentConfig.load(cfg)
    for alpha in (2.5, 3.0, 4.0):
        _, data = read_csv(out / f"{harness.point_name(alpha, -10.0)}.csv")
        par = c.network_params(alpha, -10.0)
        mom = an.solve_equilibrium(par)
        for p_dbm, exact, il, bound in data:
            p = float(dbm_to_watt(p_dbm))
            ref = 1.0 if p >= par.p_max else an.cdf_interference_limited(par, mom, p)
            assert exact == pytest.approx(ref, abs=1e-10) and il == exact and bound == exact
        assert json.loads((out / f"{harness.point_name(alpha, -10.0)}.json").read_text())["noise_degenerate"]


def test_cli_config_errors(tmp_path, capsys):
    assert cli.main(["analytic", "--config", str(tmp_path / "none.toml")]) == 2
    assert cli.main(["simulate", "--drops", "0", "--out", str(tmp_path)]) == 2
    bad = write_config(tmp_path, "alphas = [7.0]")
    assert cli.main(["validate", "--config", bad]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_nonconvergence_exit_code(tmp_path, monkeypatch, capsys):
    def boom(params, **kw):
        raise an.ConvergenceError("E_D iteration did not converge", 0.25, [1e-2, 1e-3])
    monkeypatch.setattr(harness.an, "solve_equilibrium", boom)
    assert cli.main(["analytic", "--out", str(tmp_path)]) == 3
    assert "residuals" in capsys.readouterr().err


# -- simulate command --------------------------------------------------------

def test_simulate_outputs_and_determinism(tmp_path):
    cfg = write_config(tmp_path, "drops = 8\ngrid_step_db = 4.0\ngrid_max_dbm = 24.0\n")
    runs = []
    for name, threads in (("a", "1"), ("b", "3")):
        out = tmp_path / name
        assert cli.main(["simulate", "--config", cfg, "--out", str(out), "--threads", threads]) == 0
        runs.append(out)
    csv_a = (runs[0] / "alpha3_beta-10dB.csv").read_bytes()
    assert csv_a == (runs[1] / "alpha3_beta-10dB.csv").read_bytes()
    header, data = read_csv(runs[0] / "alpha3_beta-10dB.csv")
    assert header == ["p_dBm", "cdf_exact", "cdf_il", "cdf_bound", "cdf_empirical"]
    emp = data[:, 4]
    assert np.all(np.diff(emp) >= 0) and emp[-1] == 1.0
    report = json.loads((runs[0] / "report.json").read_text())
    assert report["status"] == "ok"
    pt = report["points"][0]
    assert 0 <= pt["ks"] <= 1 and pt["n_samples"] > 0
    assert {"max_bound_gap", "runtime_s", "fraction_converged", "mean_iterations",
            "fraction_capped"} <= set(pt)


def test_simulate_seed_changes_samples(tmp_path):
    cfg = write_config(tmp_path, "drops = 4\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", cfg, "--out", str(a), "--seed", "1"]) == 0
    assert cli.main(["simulate", "--config", cfg, "--out", str(b), "--seed", "2"]) == 0
    assert (a / "alpha3_beta-10dB.csv").read_bytes() != (b / "alpha3_beta-10dB.csv").read_bytes()
    assert json.loads((b / "alpha3_beta-10dB.json").read_text())["seed"] == 2


def test_simulate_warning_below_half_converged(tmp_path, capsys):
    cfg = ExperimentConfig(drops=20, max_iter=78)
    report = harness.cmd_simulate(cfg, tmp_path)
    assert 0 < report.points[0].fraction_converged < 0.5
    assert report.status == "warning" and report.notes


def test_simulate_fails_when_nothing_converges(tmp_path):
    cfg = write_config(tmp_path, "drops = 3\nmax_iter = 2\n")
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


# -- exact KS distance -------------------------------------------------------

def test_ks_all_mass_at_cap():
    c = ExperimentConfig()
    par = c.network_params(3.0, -10.0)
    mom = an.solve_equilibrium(par)
    d = harness.ks_distance_constrained(np.full(50, par.p_max), par, mom)
    assert d == pytest.approx(an.cdf_exact(par, mom, par.p_max), rel=1e-12)


def test_ks_small_for_samples_from_the_model():
    c = ExperimentConfig(alphas=(4.0,))
    par = c.network_params(4.0, -10.0)
    mom = an.solve_equilibrium(par)
    rng = np.random.default_rng(0)
    # inverse transform on a fine grid of the capped CDF
    grid = dbm_to_watt(np.linspace(-80, 23, 3001))
    F = np.array([an.cdf_constrained(par, mom, p) for p in grid])
    u = rng.random(4000)
    samples = grid[np.minimum(np.searchsorted(F, u), len(grid) - 1)]
    d = harness.ks_distance_constrained(samples, par, mom)
    assert 0 <= d <= 1.36 / math.sqrt(4000) + 5e-3


# -- validate command --------------------------------------------------------

@pytest.mark.filterwarnings("ignore")
def test_validate_fault_injection_breaks_bound_check():
    report = harness.cmd_validate(ExperimentConfig(), fault="k1_sign_flip")
    status = {c.name: c.status for c in report.checks}
    assert status["bound_dominance"] == "fail"
    assert not report.ok
    # the hook is scoped to the call
    assert an._k1_sign == 1.0


def test_validate_noise_free_marks_bound_checks_skipped(tmp_path):
    cfg = write_config(tmp_path, "noise_dbm = -inf\n")
    out = tmp_path / "v"
    code = cli.main(["validate", "--config", cfg, "--out", str(out)])
    result = json.loads((out / "validation.json").read_text())
    status = {c["name"]: c["status"] for c in result["checks"]}
    assert status["bound_dominance"] == "skipped-degenerate"
    assert status["alpha4_erfc_exact"] == "skipped-degenerate"
    assert status["alpha4_erfc_approx"] == "skipped-degenerate"
    assert all(s in ("pass", "skipped-degenerate") for s in status.values())
    assert code == 0


def test_validate_unknown_fault():
    with pytest.raises(ValueError):
        harness.cmd_validate(ExperimentConfig(), fault="gremlins")
