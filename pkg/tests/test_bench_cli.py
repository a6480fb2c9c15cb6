import json
import subprocess
import sys

import numpy as np
import pytest

from paritybench import bench, cli, trajfile
from paritybench.recovery import average_fidelity

BASE_CONFIG = {
    "code": "bit_flip",
    "gamma_x_over_2pi": 5e6,
    "chi_over_2pi": 120e6,
    "kappa_over_2pi": 50e6,
    "epsilon_m_over_2pi": 39e6,
    "eta": 1.0,
    "T_ns": 2.0,
    "dt_ns": 0.1,
    "trajectories": 8,
    "master_seed": 4242,
    "time_grid_ns": [0.5, 1.0, 2.0],
    "etas": [0.0, 1.0],
    "t_star_ns": 1.0,
    "solver_tol": 1e-5,
    "shots": 12,
}


def write_config(tmp_path, **overrides):
    raw = dict(BASE_CONFIG)
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path, raw


def test_config_loading_and_validation(tmp_path):
    path, raw = write_config(tmp_path)
    cfg = bench.load_config(path)
    assert cfg.code == "bit_flip"
    assert cfg.gamma_x == pytest.approx(2 * np.pi * 5e6)
    assert cfg.T == pytest.approx(2e-9)
    gm, gd = cfg.effective_rates()
    assert gm > 0 and gd > 0
    with pytest.raises(ValueError, match="unknown config key"):
        bench.config_from_dict({**raw, "bogus": 1})
    with pytest.raises(ValueError):
        bench.config_from_dict({**raw, "time_grid_ns": [5.0]})  # beyond T
    with pytest.raises(ValueError):
        bench.config_from_dict({**raw, "eta": 1.5})


def test_direct_rate_override(tmp_path):
    raw = {k: v for k, v in BASE_CONFIG.items()
           if not k.startswith(("chi", "kappa", "epsilon"))}
    raw.update(gamma_meas=2e8, gamma_deph_odd=1e7)
    cfg = bench.config_from_dict(raw)
    assert cfg.effective_rates() == (2e8, 1e7)
    setup = cfg.measurement_setup()
    assert setup.operators == ("ZZI", "IZZ")


def test_bench_tables_and_determinism(tmp_path):
    path, _ = write_config(tmp_path)
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    out3 = tmp_path / "run3"
    assert cli.main(["bench", "--config", str(path), "--out", str(out1), "--threads", "1"]) == 0
    assert cli.main(["bench", "--config", str(path), "--out", str(out2), "--threads", "2"]) == 0
    assert cli.main(["bench", "--config", str(path), "--out", str(out3), "--threads", "1"]) == 0
    names = ["fbar2_measured.csv", "textbook.csv", "fbar1_no_measurement.csv",
             "unencoded_sdp.csv", "unencoded_bare.csv"]
    for name in names:
        b1 = (out1 / name).read_bytes()
        assert b1 == (out2 / name).read_bytes(), f"{name} differs across thread counts"
        assert b1 == (out3 / name).read_bytes(), f"{name} differs across reruns"
    header = (out1 / "fbar2_measured.csv").read_text().splitlines()[0]
    assert header == "t_ns,fbar,stderr,n_traj"
    manifest = json.loads((out1 / "run_manifest.json").read_text())
    assert manifest["command"] == "bench"
    assert manifest["master_seed"] == 4242
    assert len(manifest["config_sha256"]) == 64
    # t = 0.5 ns rows exist and values are sane fidelities
    rows = (out1 / "fbar2_measured.csv").read_text().splitlines()[1:]
    assert len(rows) == 3
    for row in rows:
        t, fbar, stderr, n = row.split(",")
        assert 0.0 <= float(fbar) <= 1.0
        assert int(n) == 8


def test_seed_and_trajectory_overrides(tmp_path):
    path, _ = write_config(tmp_path)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    cli.main(["bench", "--config", str(path), "--out", str(out1), "--seed", "7",
              "--trajectories", "4", "--threads", "1"])
    cli.main(["bench", "--config", str(path), "--out", str(out2), "--threads", "1"])
    a = (out1 / "fbar2_measured.csv").read_text()
    b = (out2 / "fbar2_measured.csv").read_text()
    assert a != b
    assert json.loads((out1 / "run_manifest.json").read_text())["master_seed"] == 7


def test_simulate_recover_textbook_pipeline(tmp_path):
    path, _ = write_config(tmp_path)
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--config", str(path), "--out", str(out)]) == 0
    traj = out / "trajectories.pbtrj"
    header = trajfile.read_header(traj)
    assert header["count"] == 8
    assert header["code"] == "bit_flip"
    assert cli.main(["recover", "--traj", str(traj), "--out", str(out)]) == 0
    lines = (out / "recoveries.csv").read_text().splitlines()
    assert lines[0] == "seed,f_e"
    assert len(lines) == 9
    for line in lines[1:]:
        seed, fe = line.split(",")
        assert 0.0 <= float(fe) <= 1.0 + 1e-9
    assert cli.main(["textbook", "--traj", str(traj), "--out", str(out)]) == 0
    tlines = (out / "textbook_decode.csv").read_text().splitlines()
    assert tlines[0] == "seed,sign_0,sign_1,fidelity"
    assert len(tlines) == 9
    signs = {tuple(line.split(",")[1:3]) for line in tlines[1:]}
    assert signs <= {("+1", "+1"), ("+1", "-1"), ("-1", "+1"), ("-1", "-1")}


def test_estimate_pipeline_and_delayed_processing(tmp_path):
    path, _ = write_config(tmp_path)
    out_all = tmp_path / "est_all"
    assert cli.main(["estimate", "--config", str(path), "--out", str(out_all),
                     "--shots", "12"]) == 0
    result = json.loads((out_all / "estimate.json").read_text())
    assert result["shots"] == 12
    assert result["estimate_fbar"] == pytest.approx(
        average_fidelity(result["estimate_f_e"]))
    # two-stage: write the log first, process later from the log alone
    out_sim = tmp_path / "est_sim"
    assert cli.main(["estimate", "--config", str(path), "--out", str(out_sim),
                     "--shots", "12", "--stage", "simulate"]) == 0
    assert not (out_sim / "estimate.json").exists()
    out_proc = tmp_path / "est_proc"
    assert cli.main(["estimate", "--config", str(path), "--out", str(out_proc),
                     "--stage", "process", "--from-log",
                     str(out_sim / "shots.csv")]) == 0
    delayed = json.loads((out_proc / "estimate.json").read_text())
    assert delayed["estimate_f_e"] == pytest.approx(result["estimate_f_e"], abs=1e-12)


def test_eta_sweep_zero_point_matches_unconditional(tmp_path):
    path, _ = write_config(tmp_path, trajectories=6)
    out = tmp_path / "sweep"
    assert cli.main(["sweep-eta", "--config", str(path), "--out", str(out),
                     "--threads", "1"]) == 0
    lines = (out / "eta_sweep.csv").read_text().splitlines()
    assert lines[0] == "eta,fbar,stderr,n_traj"
    rows = {float(l.split(",")[0]): l.split(",") for l in lines[1:]}
    assert set(rows) == {0.0, 1.0}
    # eta = 0: no information, all trajectories coincide, stderr vanishes
    assert float(rows[0.0][2]) == pytest.approx(0.0, abs=1e-12)
    cfg = bench.load_config(path)
    from paritybench.codes import by_name
    det = bench._deterministic_fe(
        bench_replace_grid(cfg, (cfg.t_star_ns,)), by_name(cfg.code),
        cfg.measurement_setup(eta=0.0))
    expected = average_fidelity(float(det[0]))
    assert float(rows[0.0][1]) == pytest.approx(expected, abs=1e-7)


def bench_replace_grid(cfg, grid):
    from dataclasses import replace
    return replace(cfg, time_grid_ns=tuple(grid))


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "paritybench.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "simulate" in out.stdout and "sweep-eta" in out.stdout
