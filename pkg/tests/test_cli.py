import json
import subprocess
import sys

import pytest


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "ouht", *args],
        cwd=cwd, capture_output=True, text=True, timeout=600,
    )


def _nonempty_lines(path):
    return [l for l in path.read_text().splitlines() if l]


def test_version_flag(tmp_path):
    res = run_cli(["--version"], tmp_path)
    assert res.returncode == 0
    assert "ouht 0.1.0" in res.stdout


def test_simulate_killed_ou(tmp_path):
    res = run_cli(
        ["simulate", "--process", "ou-killed", "--gamma", "1", "--a", "1",
         "--t", "1", "--paths", "20000", "--seed", "7", "--workers", "1",
         "--out", "sim.csv"],
        tmp_path,
    )
    assert res.returncode == 0
    assert "survival" in res.stdout
    survival = float(res.stdout.split("survival=")[1].split()[0])
    assert abs(survival - 0.424) < 0.02

    lines = _nonempty_lines(tmp_path / "sim.csv")
    assert lines[0].startswith("# ouht ")
    assert any(l.startswith("# config:") and "seed=7" in l for l in lines[:3])
    header_idx = lines.index("t,path,value,absorbed")
    rows = lines[header_idx + 1 :]
    assert len(rows) == 20_000
    values = [float(r.split(",")[2]) for r in rows[:100]]
    flags = [int(r.split(",")[3]) for r in rows[:100]]
    assert all(v == 0.0 for v, k in zip(values, flags) if k == 1)
    assert all(v > 0.0 for v, k in zip(values, flags) if k == 0)


def test_simulate_radial_bessel_case(tmp_path):
    res = run_cli(
        ["simulate", "--process", "radial", "--gamma", "0", "--a", "1",
         "--t", "1", "--paths", "5000", "--seed", "3", "--workers", "1",
         "--format", "json", "--out", "radial.json"],
        tmp_path,
    )
    assert res.returncode == 0
    body = json.loads((tmp_path / "radial.json").read_text())
    vals = body["results"][0]["values"]
    assert len(vals) == 5000
    assert all(v > 0 for v in vals)
    assert body["results"][0]["survival"] == 1.0
    # Bessel marginal mean: E|BM_3(1) from (1,0,0)| = 1.8493... by quadrature
    # of sqrt(v) against the noncentral chi-square(3, 1) density
    assert abs(body["results"][0]["mean"] - 1.8493) < 0.05


def test_simulate_euler_scheme_needs_dt(tmp_path):
    res = run_cli(
        ["simulate", "--process", "ou-killed", "--scheme", "euler",
         "--gamma", "1", "--a", "1", "--t", "0.5", "--paths", "100"],
        tmp_path,
    )
    assert res.returncode == 2
    assert "dt" in res.stderr


def test_simulate_missing_a_exits_2_naming_field(tmp_path):
    res = run_cli(
        ["simulate", "--process", "ou-killed", "--gamma", "1", "--t", "1"],
        tmp_path,
    )
    assert res.returncode == 2
    assert "a" in res.stderr.split("parameter:")[-1]


def test_simulate_rejects_bad_values(tmp_path):
    res = run_cli(
        ["simulate", "--process", "ou-killed", "--gamma", "1", "--a", "-1", "--t", "1"],
        tmp_path,
    )
    assert res.returncode == 2 and res.stderr.startswith("error: a:")
    res = run_cli(
        ["simulate", "--process", "ou-killed", "--gamma", "nan", "--a", "1", "--t", "1"],
        tmp_path,
    )
    assert res.returncode == 2 and res.stderr.startswith("error: gamma:")
    res = run_cli(
        ["simulate", "--process", "ou-killed", "--gamma", "1", "--a", "1",
         "--t", "2", "--t", "1"],
        tmp_path,
    )
    assert res.returncode == 2 and "t:" in res.stderr


def test_simulate_byte_identical_reruns(tmp_path):
    args = ["simulate", "--process", "ou-killed", "--gamma", "1", "--a", "1",
            "--t", "0.5", "--t", "1", "--paths", "4000", "--seed", "11",
            "--workers", "1"]
    assert run_cli(args + ["--out", "one.csv"], tmp_path).returncode == 0
    assert run_cli(args + ["--out", "two.csv"], tmp_path).returncode == 0
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()


def test_density_command(tmp_path):
    res = run_cli(
        ["density", "--gamma", "1", "--a", "1", "--t", "1",
         "--x-min", "0.01", "--x-max", "6", "--x-points", "200",
         "--out", "dens.csv"],
        tmp_path,
    )
    assert res.returncode == 0
    lines = _nonempty_lines(tmp_path / "dens.csv")
    header_idx = next(i for i, l in enumerate(lines) if l.startswith("x,"))
    rows = [l for l in lines[header_idx + 1 :] if not l.startswith("#")]
    assert len(rows) == 200
    rel = [float(r.split(",")[4]) for r in rows]
    assert max(rel) <= 1e-12
    footers = [l for l in lines if l.startswith("# integral_")]
    assert len(footers) == 2
    killed_mass, survival = (
        float(tok.split("=")[1]) for tok in footers[0].removeprefix("# ").split()
    )
    assert abs(killed_mass - survival) <= 1e-8
    radial_mass = float(footers[1].split("=")[1].split()[0])
    assert abs(radial_mass - 1.0) <= 1e-8


def test_density_rejects_bad_grid(tmp_path):
    base = ["density", "--gamma", "1", "--a", "1", "--t", "1"]
    res = run_cli(base + ["--x-min", "0", "--x-max", "6"], tmp_path)
    assert res.returncode == 2 and "x-min" in res.stderr
    res = run_cli(base + ["--x-min", "2", "--x-max", "1"], tmp_path)
    assert res.returncode == 2 and "x-max" in res.stderr
    res = run_cli(base + ["--x-min", "0.1", "--x-max", "6", "--x-points", "1"], tmp_path)
    assert res.returncode == 2 and "x-points" in res.stderr


def test_local_martingale_command(tmp_path):
    res = run_cli(
        ["local-martingale", "--gamma", "1", "--a", "1", "--paths", "20000",
         "--seed", "5", "--workers", "1", "--out", "lm.csv"],
        tmp_path,
    )
    assert res.returncode == 0
    lines = _nonempty_lines(tmp_path / "lm.csv")
    rows = [l for l in lines if not l.startswith(("#", "t,"))]
    closed = [float(r.split(",")[3]) for r in rows]
    assert all(b < a for a, b in zip(closed, closed[1:]))
    assert all(c < 1.0 for c in closed)


def test_verify_ok_and_deterministic_across_workers(tmp_path):
    base = ["verify", "--paths", "15000", "--seed", "21", "--out"]
    res1 = run_cli(base + ["rep1", "--workers", "1"], tmp_path)
    assert res1.returncode == 0, res1.stdout + res1.stderr
    assert "fail" in res1.stdout  # summary line mentions the fail count
    res2 = run_cli(base + ["rep2", "--workers", "3"], tmp_path)
    assert res2.returncode == 0

    a = json.loads((tmp_path / "rep1.json").read_text())
    b = json.loads((tmp_path / "rep2.json").read_text())
    assert a.pop("meta")["workers"] == 1
    assert b.pop("meta")["workers"] == 3
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert (tmp_path / "rep1.csv").read_bytes() == (tmp_path / "rep2.csv").read_bytes()


def test_verify_negative_rate_passes(tmp_path):
    res = run_cli(
        ["verify", "--gamma", "-0.5", "--paths", "15000", "--seed", "21",
         "--workers", "1", "--out", "neg"],
        tmp_path,
    )
    assert res.returncode == 0, res.stdout + res.stderr


def test_verify_negative_control_exits_3(tmp_path):
    res = run_cli(
        ["verify", "--paths", "40000", "--seed", "21", "--workers", "1",
         "--inject-weight-bias", "0.05", "--out", "biased"],
        tmp_path,
    )
    assert res.returncode == 3
    assert (tmp_path / "biased.json").exists()  # report still written
    body = json.loads((tmp_path / "biased.json").read_text())
    failed = [c["check"] for c in body["checks"] if c["status"] == "fail"]
    assert any(name.startswith("transport-agreement") for name in failed)


def test_defaults_file_fills_gaps_and_flags_win(tmp_path):
    (tmp_path / "base.conf").write_text(
        "# shared settings\ngamma = 1.0\na = 1.0\nt = 1\npaths = 3000\nseed = 9\n"
    )
    res = run_cli(
        ["simulate", "--process", "ou-killed", "--defaults", "base.conf",
         "--paths", "1000", "--workers", "1", "--out", "d.csv"],
        tmp_path,
    )
    assert res.returncode == 0
    lines = _nonempty_lines(tmp_path / "d.csv")
    config_line = next(l for l in lines if l.startswith("# config:"))
    assert "paths=1000" in config_line  # flag beat the file
    assert "seed=9" in config_line      # file filled the gap


def test_verify_invalid_time_config(tmp_path):
    res = run_cli(["verify", "--t", "-1"], tmp_path)
    assert res.returncode == 2


def test_unwritable_output_exits_1(tmp_path):
    res = run_cli(
        ["density", "--gamma", "1", "--a", "1", "--t", "1",
         "--x-min", "0.1", "--x-max", "2", "--x-points", "5",
         "--out", "no/such/dir/out.csv"],
        tmp_path,
    )
    assert res.returncode == 1
    assert "cannot write" in res.stderr
