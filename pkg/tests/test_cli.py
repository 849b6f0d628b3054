import json

import pytest

from chetaev_lab.cli import main
from chetaev_lab.scenarios import scenario_ids

CONFIG = """
[system]
potential = harmonic
[grid]
lower = -8
upper = 8
points = 128
[initial]
family = eigenstate
[analysis]
operations = quantum_potential, moments, uncertainty
seed = 5
"""

# slices stored too sparsely for the trajectory integrator
CRASH = """
[system]
potential = free
[initial]
family = plane_wave
mode = 12
[grid]
points = 64
[evolution]
dt = 0.01
t_final = 1.0
store_every = 50
[analysis]
operations = trajectories
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "ground.ini"
    p.write_text(CONFIG)
    return p


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in scenario_ids():
        assert name in out


def test_validate(config_file, tmp_path, capsys):
    assert main(["validate", str(config_file)]) == 0
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\npoints = 4\n[system]\nfoo = 1\n")
    assert main(["validate", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "points >= 8" in err and "unknown key 'foo'" in err
    assert main(["validate", str(tmp_path / "missing.ini")]) == 1


def test_run_config_with_out_and_seed(config_file, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(config_file), "--out", str(out), "--seed", "11", "--quiet"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 11 and m["scenario"] == "ground"


def test_output_directory_from_environment(config_file, tmp_path, monkeypatch):
    monkeypatch.setenv("CHETAEV_LAB_OUT", str(tmp_path / "env"))
    assert main(["run", str(config_file), "--quiet"]) == 0
    assert (tmp_path / "env" / "ground" / "manifest.json").exists()


def test_output_directory_default(config_file, tmp_path, monkeypatch):
    monkeypatch.delenv("CHETAEV_LAB_OUT", raising=False)
    monkeypatch.chdir(tmp_path)
    assert main(["run", str(config_file), "--quiet"]) == 0
    assert (tmp_path / "runs" / "ground" / "manifest.json").exists()


def test_run_builtin_scenario(tmp_path, capsys):
    assert main(["run", "free-plane", "--out", str(tmp_path)]) == 0
    assert "free-plane: pass" in capsys.readouterr().out


def test_exit_codes(config_file, tmp_path, capsys):
    assert main(["run", "no-such-scenario", "--out", str(tmp_path / "x")]) == 1
    assert "valid ids" in capsys.readouterr().err
    assert main(["run", str(config_file), "--seed", "-1", "--out", str(tmp_path / "y")]) == 1

    strict = tmp_path / "strict.ini"
    strict.write_text(CONFIG + "tol_stationary = 1e-300\n")
    assert main(["run", str(strict), "--out", str(tmp_path / "z"), "--quiet"]) == 3

    crash = tmp_path / "crash.ini"
    crash.write_text(CRASH)
    assert main(["run", str(crash), "--out", str(tmp_path / "c"), "--quiet"]) == 2
    assert "manifest" in capsys.readouterr().err
    assert json.loads((tmp_path / "c" / "manifest.json").read_text())["status"] == "error"


def test_usage_errors_exit_by_argparse():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
