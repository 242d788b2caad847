import json

import numpy as np
import pytest

from sswave.cli import ExperimentConfig, main, parse_config, run
from sswave.modulation import _series_from_rows
from sswave.reporting import emit_series, read_series, series_header


def make_series(k=5, m=3, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(k):
        rows.append({"s": 0.1 * i, "E": 4 / 3 + rng.standard_normal() * 1e-3,
                     "q_norm": abs(rng.standard_normal()) * 1e-2 + 1e-5,
                     "d": np.tanh(rng.standard_normal() * 0.1),
                     "lam": rng.standard_normal() * 0.1,
                     "theta": rng.standard_normal(m - 1) * 0.01,
                     "alpha_1_1": rng.standard_normal() * 1e-3,
                     "alpha_minus": np.abs(rng.standard_normal(m)) * 1e-3,
                     "R_minus": rng.standard_normal() * 1e-8,
                     "dissipation": 0.0, "phi_residual": 1e-12})
    return _series_from_rows(rows, m)


def test_series_header_schema():
    assert series_header(3) == ("s,E,q_norm,d,lambda,theta_2,theta_3,alpha_1_1,"
                                "alpha_minus_1,alpha_minus_2,alpha_minus_3,a,b,R_minus")


def test_emit_series_round_trip(tmp_path):
    series = make_series()
    path = emit_series(series, tmp_path / "s.csv")
    back = read_series(path)
    # bit-for-bit round trip through the 17-digit decimal format
    assert np.array_equal(back["s"], series.s)
    assert np.array_equal(back["E"], series.E)
    assert np.array_equal(back["theta_3"], series.theta[:, 1])
    assert np.array_equal(back["alpha_minus_2"], series.alpha_minus[:, 1])
    assert np.array_equal(back["b"], series.b)


def test_emit_series_single_row_and_empty(tmp_path):
    series = make_series(k=1)
    path = emit_series(series, tmp_path / "one.csv")
    assert len(path.read_text().strip().splitlines()) == 2
    empty = _series_from_rows([], 3)
    with pytest.raises(ValueError):
        emit_series(empty, tmp_path / "empty.csv")


def test_parse_config_pairs_and_file(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"n": 32, "seed": 7}))
    cfg = parse_config(["stationary-check", "p=3", "d=0.1,-0.2", "trials=2",
                        "--config", str(cfg_file), "--out", str(tmp_path / "o")])
    assert cfg.command == "stationary-check"
    assert cfg.get("p") == 3
    assert cfg.get("d") == [0.1, -0.2]
    assert cfg.get("n") == 32
    assert cfg.get("seed") == 7


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["stationary-check", "whoops"]) == 2


def test_cli_stationary_check(tmp_path):
    rc = main(["stationary-check", "p=3", "n=48", "d=0.3", "trials=2", "seed=1",
               "--out", str(tmp_path)])
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"]
    assert any(c["name"] == "stationarity-residual-max" for c in report["checks"])
    assert (tmp_path / "report.txt").exists()
    assert any(p.endswith(".png") for p in report["figures"])


def test_cli_stationary_check_fails_at_coarse_grid(tmp_path):
    # n = 16 cannot meet the 1e-8 residual bar: exit code 1, report records it
    rc = main(["stationary-check", "p=5", "n=16", "d=0.9", "trials=1", "seed=1",
               "--out", str(tmp_path)])
    assert rc == 1
    report = json.loads((tmp_path / "report.json").read_text())
    assert not report["passed"]


def test_cli_rotation_check(tmp_path):
    rc = main(["rotation-check", "m=4", "trials=50", "seed=2", "--out", str(tmp_path)])
    assert rc == 0


def test_cli_classify_ode(tmp_path):
    rc = main(["classify-ode", "p=3", "mu=0,0.5", "xi-max=30", "--out", str(tmp_path)])
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert (tmp_path / "ode_mu0.csv").exists()
    assert (tmp_path / "ode_mu0.5.csv").exists()
    assert report["fitted"]["eps0_observed(mu=0.5)"] > 0.01


def test_cli_simulate_physical(tmp_path):
    rc = main(["simulate-physical", "profile=ode-blowup", "p=3", "nx=32", "T=1",
               "seed=3", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "amplitude.csv").exists()


def test_cli_simulate_selfsim(tmp_path):
    rc = main(["simulate-selfsim", "p=3", "m=3", "n=48", "eps=1e-3", "s-len=2",
               "sample-ds=0.5", "seed=4", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "series.csv").exists()


def test_cli_trapping_and_determinism(tmp_path):
    args = ["trapping", "p=3", "m=3", "n=48", "eps=1e-2", "s-len=20",
            "sample-ds=0.5", "seed=5"]
    rc = main(args + ["--out", str(tmp_path / "a")])
    assert rc == 0
    rc = main(args + ["--out", str(tmp_path / "b")])
    assert rc == 0
    csv_a = (tmp_path / "a" / "series_eps0.01.csv").read_bytes()
    csv_b = (tmp_path / "b" / "series_eps0.01.csv").read_bytes()
    assert csv_a == csv_b


def test_cli_spectral_check_small(tmp_path):
    rc = main(["spectral-check", "p=3", "n=48", "n-refined=64", "d=0.0,0.4",
               "samples=10", "seed=6", "--out", str(tmp_path)])
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert any(k.startswith("C0(") for k in report["fitted"])


def test_run_api_returns_report(tmp_path):
    cfg = ExperimentConfig("rotation-check", {"m": 3, "trials": 10, "seed": 1,
                                              "out": str(tmp_path)})
    report = run(cfg)
    assert report.passed
    assert report.command == "rotation-check"


def test_cli_invalid_parameter_exit_code(tmp_path):
    assert main(["stationary-check", "p=3", "n=48", "d=1.5", "trials=1",
                 "--out", str(tmp_path)]) == 2


def test_cli_simulate_physical_gaussian(tmp_path):
    rc = main(["simulate-physical", "profile=gaussian", "p=3", "nx=256", "amp=3",
               "half-width=4", "seed=3", "--out", str(tmp_path)])
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert "lipschitz_slope" in report["fitted"]


def test_cli_simulate_physical_small(tmp_path):
    rc = main(["simulate-physical", "profile=small", "p=3", "nx=64", "t-end=3",
               "seed=3", "--out", str(tmp_path)])
    assert rc == 0
