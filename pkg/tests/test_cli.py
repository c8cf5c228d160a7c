import json
import subprocess
import sys

import pytest

from shrinkerkit import cli, io
from shrinkerkit.shrinkers import canonical_curve

from shapes import sphere


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("kind", ["plane", "sphere", "cylinder", "circle", "line"])
def test_solve_canonical(capsys, kind):
    code, out, _ = run_cli(capsys, "solve", "--kind", kind, "--resolution", "129")
    verdict = json.loads(out)
    assert code == 0
    assert verdict["passed"] and verdict["kind"] == kind


def test_solve_writes_surface_and_verdict(tmp_path, capsys):
    out = tmp_path / "plane.csv"
    code, _, _ = run_cli(capsys, "solve", "--kind", "plane", "--out", str(out),
                         "--json", str(tmp_path / "v.json"))
    assert code == 0
    assert io.read_surface(out).kind == "profile"
    assert io.read_json(tmp_path / "plane.json") == io.read_json(tmp_path / "v.json")
    assert io.read_json(tmp_path / "v.json")["cone"]["conical"]


def test_entropy_on_written_sphere(tmp_path, capsys):
    path = tmp_path / "s.csv"
    io.write_surface(path, sphere(2.0))
    code, out, _ = run_cli(capsys, "entropy", "--surface", str(path))
    v = json.loads(out)
    assert code == 0 and v["status"] == "converged"
    assert v["entropy"] == pytest.approx(4 / 2.718281828459045, abs=1e-3)
    # too small a budget leaves only a lower bound, which is a failed check
    code, out, _ = run_cli(capsys, "entropy", "--surface", str(path), "--budget", "50")
    assert code == 1
    assert json.loads(out)["status"] == "lower-bound-only"


def test_spectrum_on_sphere(tmp_path, capsys):
    path = tmp_path / "s.csv"
    io.write_surface(path, canonical_curve("sphere", 2, 257))
    code, out, _ = run_cli(capsys, "spectrum", "--surface", str(path),
                           "--out", str(tmp_path / "f.csv"))
    assert code == 0
    assert json.loads(out)["mu"] == pytest.approx(-1.0, abs=1e-3)
    assert (tmp_path / "f.csv").read_text().startswith("x,r,f\n")


def test_flow_then_diagnose(tmp_path, capsys):
    path = tmp_path / "s.csv"
    io.write_surface(path, sphere(2.0))
    trace = tmp_path / "trace"
    code, out, _ = run_cli(capsys, "flow", "run", "--in", str(path), "--horizon", "-0.8",
                           "--save=-0.95,-0.9,-0.85,-0.8", "--trace-out", str(trace))
    assert code == 0
    assert json.loads(out)["times"] == pytest.approx([-1, -0.95, -0.9, -0.85, -0.8])
    code, out, _ = run_cli(capsys, "diagnose", "smc", "--trace", str(trace),
                           "--x0=0,0,0", "--t0", "0", "--csv", str(tmp_path / "s.csv"))
    v = json.loads(out)
    assert code == 0
    # S = -4t/r - r on a centred sphere of radius r
    assert v["min"] == pytest.approx(0.0, abs=1e-2)


def test_missing_file_exits_2(tmp_path, capsys):
    code, _, err = run_cli(capsys, "entropy", "--surface", str(tmp_path / "absent.csv"))
    assert code == 2
    assert err.startswith("shrinker: error:")


def test_malformed_file_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("0,0\n1,1\n")
    code, _, _ = run_cli(capsys, "spectrum", "--surface", str(path))
    assert code == 2


@pytest.mark.parametrize("argv", [
    [],
    ["solve"],
    ["solve", "--kind", "torus"],
    ["perturb", "--surface", "x.csv", "--eps", "small"],
    ["diagnose", "smc", "--trace", "t", "--x0", "a,b"],
])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    assert info.value.code == 2


def test_goldens_env_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.GOLDEN_ENV, str(tmp_path))
    code, out, _ = run_cli(capsys, "goldens")
    v = json.loads(out)
    assert code == 0 and v["ordering"]
    assert {r["tag"] for r in v["goldens"]} == {"plane", "circle", "sphere", "limit"}
    assert (tmp_path / "goldens.json").exists()
    # a second run compares against the stored table
    code, out, _ = run_cli(capsys, "goldens")
    assert code == 0
    assert max(json.loads(out)["regression"].values()) == 0.0


def test_goldens_flag_overrides_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.GOLDEN_ENV, str(tmp_path / "env"))
    code, _, _ = run_cli(capsys, "goldens", "--golden-dir", str(tmp_path / "flag"))
    assert code == 0
    assert (tmp_path / "flag" / "goldens.json").exists()
    assert not (tmp_path / "env").exists()


def test_goldens_detects_drift(tmp_path, capsys):
    d = tmp_path / "g"
    run_cli(capsys, "goldens", "--golden-dir", str(d))
    stored = io.read_json(d / "goldens.json")
    stored["goldens"][0]["value"] += 1e-3
    io.write_json(d / "goldens.json", stored)
    code, out, _ = run_cli(capsys, "goldens", "--golden-dir", str(d))
    assert code == 1
    assert not json.loads(out)["passed"]


def test_goldens_no_write(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "goldens", "--golden-dir", str(tmp_path / "g"), "--no-write")
    assert code == 0
    assert not (tmp_path / "g").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "shrinkerkit.cli", "solve", "--kind", "line"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0
    assert json.loads(res.stdout)["passed"]


def test_flow_resamples_first(tmp_path, capsys):
    path = tmp_path / "s.csv"
    io.write_surface(path, sphere(2.0, 801))
    code, out, _ = run_cli(capsys, "flow", "run", "--in", str(path), "--h", "0.05",
                           "--horizon", "-0.95", "--save=-0.95")
    assert code == 0
    # half circumference 2 pi / 0.05 gives about 126 nodes
    assert abs(json.loads(out)["final_nodes"] - 127) <= 2
