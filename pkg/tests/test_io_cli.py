import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from gfrecon import io
from gfrecon.cli import EXIT_CAP, EXIT_CONFIG, EXIT_OK, main
from gfrecon.config import ConfigError, ExperimentConfig
from gfrecon.greens import FrequencyGrid, MatrixGreenFunction, ScalarGreenFunction, TimeCorrelator, TimeGrid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def load(name):
    return json.loads((CONFIGS / f"{name}.json").read_text())


def run_cli(tmp_path, command, data, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    out = tmp_path / "out"
    code = main([command, "--config", str(path), "--out", str(out), *extra])
    manifest = json.loads((out / "manifest.json").read_text())
    return code, out, manifest


# io

def test_scalar_csv_round_trip_is_bit_exact(tmp_path, rng):
    grid = FrequencyGrid(-1, 1, 7)
    g = ScalarGreenFunction(grid, rng.standard_normal(7) + 1j * rng.standard_normal(7))
    io.write_scalar_gf(tmp_path / "g.csv", g)
    back = io.read_scalar_gf(tmp_path / "g.csv")
    assert np.array_equal(back.values, g.values)
    assert (tmp_path / "g.csv").read_text().splitlines()[0] == "omega,re,im"


def test_matrix_csv_round_trip(tmp_path, rng):
    grid = FrequencyGrid(0, 1, 5)
    vals = rng.standard_normal((5, 3, 3)) + 1j * rng.standard_normal((5, 3, 3))
    io.write_matrix_gf(tmp_path / "m.csv", MatrixGreenFunction(grid, vals))
    assert np.array_equal(io.read_matrix_gf(tmp_path / "m.csv").values, vals)


def test_other_formats_round_trip(tmp_path):
    times = np.array([[0.0, 0.5, -0.25, 1.0]])
    io.write_four_time(tmp_path / "f.csv", times, [1 + 2j])
    t, v = io.read_four_time(tmp_path / "f.csv")
    assert np.array_equal(t, times) and v[0] == 1 + 2j
    io.write_matsubara(tmp_path / "s.csv", [1.0, 2.0, 3.0], [1j, 2, 3])
    series = io.read_matsubara(tmp_path / "s.csv")
    assert series.beta == pytest.approx(2 * np.pi) and series.values[0] == 1j
    tg = TimeGrid(1.0, 5)
    io.write_time_series(tmp_path / "t.csv", TimeCorrelator(tg, np.arange(5) * 1j))
    assert np.array_equal(io.read_time_series(tmp_path / "t.csv").values, np.arange(5) * 1j)
    io.write_spectral_density_csv(tmp_path / "j.csv", [0.5, 1.0, 1.5], [0.1, 0.2, 0.3])
    assert io.read_spectral_density_csv(tmp_path / "j.csv")(1.0) == pytest.approx(0.2)


def test_bad_csv_rejected(tmp_path):
    (tmp_path / "bad.csv").write_text("omega,im,re\n0,1,2\n")
    with pytest.raises(io.CSVFormatError):
        io.read_scalar_gf(tmp_path / "bad.csv")
    (tmp_path / "empty.csv").write_text("omega,re,im\n")
    with pytest.raises(io.CSVFormatError):
        io.read_scalar_gf(tmp_path / "empty.csv")
    (tmp_path / "text.csv").write_text("omega,re,im\n0,a,1\n")
    with pytest.raises(io.CSVFormatError):
        io.read_scalar_gf(tmp_path / "text.csv")


# config

def test_config_validation_and_hash():
    cfg = ExperimentConfig.from_dict(load("simulate_chain4"))
    assert cfg.chain().n_sites == 4 and np.isinf(cfg.beta)
    assert cfg.config_hash == ExperimentConfig.from_dict(load("simulate_chain4")).config_hash
    assert cfg.with_overrides(seed=3).config_hash != cfg.config_hash
    with pytest.raises(ConfigError, match="chain/n_sites"):
        ExperimentConfig.from_dict({**load("simulate_chain4"), "chain": {"n_sites": 0}})
    with pytest.raises(ConfigError, match="does not exist"):
        ExperimentConfig.from_dict({"scenario": "x", "inputs": {"g_sb": "/nope.csv", "g_b0": "/nope.csv"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenario": "x", "unknown": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenario": "x"}).require_seed()


# cli

def test_simulate_writes_matching_grids_and_is_deterministic(tmp_path):
    code, out, manifest = run_cli(tmp_path, "simulate", load("simulate_chain4"))
    assert code == EXIT_OK and manifest["exit_code"] == 0
    grids = [io.read_matrix_gf(out / f"{n}.csv").grid for n in ("g_s0", "g_sb", "g_b0")]
    assert grids[0] == grids[1] == grids[2]
    first = {o["path"]: o["sha256"] for o in manifest["outputs"]}
    assert set(first) == {"g_s0.csv", "g_sb.csv", "g_b0.csv"}
    _, _, again = run_cli(tmp_path, "simulate", load("simulate_chain4"))
    assert {o["path"]: o["sha256"] for o in again["outputs"]} == first
    assert {"config_hash", "version", "wall_clock_seconds", "stages"} <= set(manifest)


def test_schema_violation_exits_2_with_manifest(tmp_path):
    data = load("simulate_chain4")
    data["grid"]["n_points"] = "many"
    code, _, manifest = run_cli(tmp_path, "simulate", data)
    assert code == EXIT_CONFIG and manifest["exit_code"] == 2 and "n_points" in manifest["error"]


def test_pipeline_mismatch_and_missing_config(tmp_path):
    code, _, _ = run_cli(tmp_path, "continue", load("simulate_chain4"))
    assert code == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_oracle_over_cap_exits_3(tmp_path):
    code, _, manifest = run_cli(tmp_path, "simulate", load("simulate_oracle_over_cap"))
    assert code == EXIT_CAP
    assert "6^10" in manifest["error"] and "20000" in manifest["error"]


def _simulated_inputs(tmp_path):
    code, out, _ = run_cli(tmp_path, "simulate", load("simulate_chain4"), name="sim.json")
    assert code == 0
    return out


def test_reconstruct_identity_and_round_trip(tmp_path):
    sim = _simulated_inputs(tmp_path)
    g_s0 = io.read_matrix_gf(sim / "g_s0.csv")
    zero = MatrixGreenFunction(g_s0.grid, np.zeros_like(g_s0.values))
    io.write_matrix_gf(tmp_path / "zero.csv", zero)
    data = {"scenario": "identity", "pipeline": "reconstruct",
            "inputs": {"g_sb": str(sim / "g_s0.csv"), "g_b0": str(tmp_path / "zero.csv"),
                       "truth": str(sim / "g_s0.csv")}}
    code, out, manifest = run_cli(tmp_path, "reconstruct", data, name="id.json")
    assert code == 0
    assert np.array_equal(io.read_matrix_gf(out / "g_s0_reconstructed.csv").values, g_s0.values)
    assert manifest["summary"]["max_rel_error_unflagged"] == 0.0


def test_reconstruct_scalar_round_trip_and_flag_count(tmp_path, rng):
    from conftest import smooth_random_gf
    from gfrecon.reconstruct import forward_dyson_scalar

    grid = FrequencyGrid(-3, 3, 301)
    g_s0 = ScalarGreenFunction(grid, smooth_random_gf(rng, grid.omega))
    g_b0 = ScalarGreenFunction(grid, 0.3 * smooth_random_gf(rng, grid.omega))
    for name, g in (("s0", g_s0), ("sb", forward_dyson_scalar(g_s0, g_b0)), ("b0", g_b0)):
        io.write_scalar_gf(tmp_path / f"{name}.csv", g)
    data = {"scenario": "rt", "pipeline": "reconstruct",
            "inputs": {"g_sb": "sb.csv", "g_b0": "b0.csv", "truth": "s0.csv"}}
    code, out, manifest = run_cli(tmp_path, "reconstruct", data)
    assert code == 0
    assert manifest["summary"]["max_rel_error_unflagged"] < 1e-10
    assert manifest["summary"]["n_flagged"] == 0
    header = (out / "reconstruction.csv").read_text().splitlines()[0]
    assert header == "omega,re,im,cond,flag"


def test_reconstruct_grid_mismatch_exits_2(tmp_path):
    io.write_scalar_gf(tmp_path / "a.csv", ScalarGreenFunction(FrequencyGrid(0, 1, 5), np.ones(5)))
    io.write_scalar_gf(tmp_path / "b.csv", ScalarGreenFunction(FrequencyGrid(0, 1, 6), np.ones(6)))
    data = {"scenario": "mm", "pipeline": "reconstruct", "inputs": {"g_sb": "a.csv", "g_b0": "b.csv"}}
    assert run_cli(tmp_path, "reconstruct", data)[0] == EXIT_CONFIG


def test_verify_wick_pass_fail_and_threshold_override(tmp_path):
    code, _, m = run_cli(tmp_path, "verify-wick", load("verify_wick_harmonic"))
    assert code == 0 and m["summary"]["verdict"] == "pass"
    code, _, m = run_cli(tmp_path, "verify-wick", load("verify_wick_anharmonic"))
    assert m["summary"]["verdict"] == "fail" and m["summary"]["defect_norm"] > 1e-3
    loose = {**load("verify_wick_anharmonic"), "wick": {"n_random": 6, "threshold": 10.0}}
    assert run_cli(tmp_path, "verify-wick", loose)[2]["summary"]["verdict"] == "pass"


def test_sensitivity_slope_zero_spread_and_seed_determinism(tmp_path):
    code, out, m = run_cli(tmp_path, "sensitivity", load("sensitivity_bath"))
    assert code == 0
    assert m["summary"]["residual_slope"] == pytest.approx(2.0, abs=0.1)
    first = (out / "sensitivity.csv").read_bytes()
    assert run_cli(tmp_path, "sensitivity", load("sensitivity_bath"))[1].joinpath("sensitivity.csv").read_bytes() == first
    _, out2, _ = run_cli(tmp_path, "sensitivity", load("sensitivity_bath"), "--seed", "8")
    assert (out2 / "sensitivity.csv").read_bytes() != first
    zero = {**load("sensitivity_bath"), "sensitivity": {"sigmas": [0.0], "n_trials": 3}}
    assert run_cli(tmp_path, "sensitivity", zero)[2]["summary"]["spread"] == [0.0]
    unseeded = {k: v for k, v in load("sensitivity_bath").items() if k != "seed"}
    assert run_cli(tmp_path, "sensitivity", unseeded)[0] == EXIT_CONFIG


def test_continue_pole_and_constant(tmp_path):
    code, out, m = run_cli(tmp_path, "continue", load("continue_pole"))
    assert code == 0
    assert m["summary"]["peak_omega"] == pytest.approx(1.0, abs=0.01)
    assert m["summary"]["node_residual"] < 1e-12
    const = {**load("continue_pole"), "continuation": {"beta": 5.0, "n_max": 8, "constant": [0.5, -0.25]}}
    _, out, m = run_cli(tmp_path, "continue", const)
    data = np.loadtxt(out / "continued.csv", delimiter=",", skiprows=1)
    assert np.allclose(data[:, 1], 0.5) and np.allclose(data[:, 2], -0.25)
    assert m["summary"]["degree"] == 0


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("GFRECON_OUT", str(tmp_path / "root"))
    path = tmp_path / "c.json"
    shutil.copy(CONFIGS / "continue_pole.json", path)
    assert main(["continue", "--config", str(path)]) == 0
    assert (tmp_path / "root" / "runs" / "continue_pole" / "manifest.json").exists()
