import json
import time

import numpy as np
import pytest

from current_lab.cli import EXIT_CONFIG, EXIT_EXACT, EXIT_OK, EXIT_STAT, ConfigError, execute, jsonable, main, replay
from current_lab.tables import TwoPointTable

SPINS = ["spins", "--d", "2", "--L", "4", "--beta", "0.3", "--chains", "8", "--sweeps", "400"]


def report(path):
    return json.loads(path.read_text())


def test_spins_and_replay(tmp_path, capsys):
    out = tmp_path / "a"
    assert main(SPINS + ["--out", str(out)]) == EXIT_OK
    rep = report(out / "report.json")
    assert rep["seed"] == 20261014 and "table.csv" in rep["files"]
    assert main(["replay", str(out / "report.json")]) == EXIT_OK
    assert json.loads(capsys.readouterr().out.split("report:")[-1].split("\n", 1)[1])["identical"]


def test_seed_changes_bytes_not_physics(tmp_path):
    main(SPINS + ["--out", str(tmp_path / "a")])
    main(SPINS + ["--out", str(tmp_path / "b"), "--seed", "7"])
    a, b = report(tmp_path / "a" / "report.json"), report(tmp_path / "b" / "report.json")
    assert a["files"]["table.csv"] != b["files"]["table.csv"]
    ma, mb = a["results"]["moments"], b["results"]["moments"]
    assert abs(ma["chi"] - mb["chi"]) <= 3 * np.hypot(ma["chi_err"], mb["chi_err"])


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[model]\nbeta = 0.0\n[sampling]\nsweeps = 80\n")
    out = tmp_path / "o"
    assert main(SPINS + ["--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rep = report(out / "report.json")
    assert rep["config"]["model"]["beta"] == 0.0
    assert rep["config"]["sampling"]["sweeps"] == 80
    assert rep["config"]["model"]["L"] == 4


def test_infinite_temperature_smoke(tmp_path):
    t0 = time.perf_counter()
    args = ["spins", "--d", "4", "--L", "6", "--beta", "0", "--chains", "8", "--sweeps", "80"]
    assert main(args + ["--out", str(tmp_path)]) == EXIT_OK
    assert time.perf_counter() - t0 < 10
    table = TwoPointTable.from_csv(tmp_path / "table.csv")
    assert table.values.flat[0] == pytest.approx(1.0, abs=1e-12)


def test_fourier_exit_codes(tmp_path):
    vals = np.array([1, 2, 3, 4, 5, 4, 3, 2], dtype=float) / 5
    exact = tmp_path / "bad.csv"
    TwoPointTable((8,), vals, None, 0.1).to_csv(exact)
    assert main(["fourier", "--table", str(exact), "--checks", "mms", "--out", str(tmp_path / "x")]) == EXIT_EXACT
    rng = np.random.default_rng(3)
    batches = vals + 1e-3 * rng.standard_normal((8, 8))
    noisy = tmp_path / "noisy.csv"
    TwoPointTable((8,), batches.mean(axis=0), batches, 0.1).to_csv(noisy)
    assert main(["fourier", "--table", str(noisy), "--checks", "mms", "--out", str(tmp_path / "y")]) == EXIT_STAT
    ring = tmp_path / "ring.csv"
    TwoPointTable.ising_ring(32, 0.7).to_csv(ring)
    assert main(["fourier", "--table", str(ring), "--out", str(tmp_path / "z")]) == EXIT_OK


def test_config_errors(tmp_path):
    assert main(["fourier", "--table", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["diagrams", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["spins", "--d", "2", "--L", "4", "--beta", "0.3", "--chains", "1", "--out", str(tmp_path)]) \
        == EXIT_CONFIG
    bad = tmp_path / "bad.toml"
    bad.write_text("pipeline = [")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        execute({"pipeline": "nope"}, tmp_path)


def test_gs_and_diagrams_pipelines(tmp_path):
    rep = execute({"pipeline": "gs-calibrate", "gs": {"targets": [[1.0, 0.0]], "Ns": [10, 100]}}, tmp_path / "g")
    assert rep["exit_code"] == EXIT_OK
    ring = tmp_path / "ring.csv"
    TwoPointTable.ising_ring(64, 0.8).to_csv(ring)
    rep = execute({"pipeline": "diagrams", "diagrams": {"table": str(ring), "ops": ["bubble", "scales", "regular"]}},
                  tmp_path / "d")
    assert rep["passed"]
    assert rep["results"]["regular_scales"]["count"] >= 1


def test_exact_verify_small(tmp_path):
    assert main(["exact-verify", "--max-vertices", "3", "--fuzz", "5", "--out", str(tmp_path)]) == EXIT_OK


def test_replay_detects_tampering(tmp_path):
    rep = execute({"pipeline": "gs-calibrate", "gs": {"targets": [[1.0, 0.0]], "Ns": [10]}}, tmp_path)
    path = tmp_path / "report.json"
    data = report(path)
    data["results_sha256"] = "0" * 64
    path.write_text(json.dumps(data))
    assert not replay(path)["identical"]
    assert rep["report_path"] == str(path)


def test_jsonable_non_finite():
    assert jsonable([float("inf"), -float("inf"), float("nan"), np.float64(1.5)]) == ["inf", "-inf", "nan", 1.5]


def test_shorthand_flags(tmp_path):
    args = ["spins", "--torus", "2,4", "--model", "gs:3,1.0,0.5", "--beta", "0.2", "--measure", "twopoint,u4",
            "--chains", "8", "--sweeps", "80", "--out", str(tmp_path / "t.csv")]
    assert main(args) == EXIT_OK
    rep = report(tmp_path / "report.json")
    assert rep["config"]["model"] == {"d": 2, "L": 4, "beta": 0.2, "site": "gs", "N": 3, "lam": 1.0, "b": 0.5}
    assert "t.csv" in rep["files"] and len(rep["results"]["ursell4"]) == 1
    args = ["sample-currents", "--torus", "1,6", "--beta", "0.4", "--sources", "0,3", "--chains", "8",
            "--sweeps", "200", "--out", str(tmp_path / "stats.json")]
    assert main(args) == EXIT_OK
    rows = report(tmp_path / "stats.json")["results"]["connectivity"]["rows"]
    assert rows[0]["exact"] == 1.0 and rows[0]["estimate"] == 1.0
