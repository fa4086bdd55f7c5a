import json

import pytest

from spvtrap.cli import EXIT_CODES, run
from spvtrap.io import read_csv


def _error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("spvtrap-error: ")
    return json.loads(err[len("spvtrap-error: "):])


def test_unknown_command(capsys):
    assert run(["frobnicate"]) == EXIT_CODES["usage"]
    assert _error(capsys)["category"] == "usage"


def test_missing_config(tmp_path, capsys):
    code = run(["--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path), "ion"])
    assert code == EXIT_CODES["config"]
    assert _error(capsys)["code"] == 3


def test_bad_dataset(tmp_path, capsys):
    ds = tmp_path / "d.csv"
    ds.write_text("wavelength_nm,flux_cm2s,dV_volts,sigma_volts\n1055,-1,0.1,0.01\n")
    assert run(["--out", str(tmp_path), "fit", "spv", str(ds)]) == EXIT_CODES["io"]
    assert "line 2" in _error(capsys)["message"]


def test_unknown_scenario(tmp_path, capsys):
    assert run(["--out", str(tmp_path), "rabi", "fig9z"]) == EXIT_CODES["config"]


def test_solver_failure_category(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[qubit]\nheating_rate_quanta_per_s = 1e16\n[motion]\nmax_fock_state = 6\n"
                   "[run]\nduration_us = 1\n")
    assert run(["--out", str(tmp_path), "rabi", str(cfg)]) == EXIT_CODES["solver"]


def test_ion_chain(tmp_path, capsys):
    assert run(["--out", str(tmp_path), "ion"]) == 0
    out = capsys.readouterr().out
    assert "field_V_per_m: 288" in out


def test_equilibrium_and_determinism(tmp_path, capsys):
    for sub in ("a", "b"):
        assert run(["--out", str(tmp_path / sub), "spv", "flux-sweep", "--points", "3"]) == 0
    a = (tmp_path / "a").glob("*.csv")
    for f in a:
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    assert run(["--out", str(tmp_path), "spv", "equilibrium"]) == 0
    header, arr = read_csv(tmp_path / "equilibrium_profile.csv")
    assert header[1] == "phi0_V" and arr[0, 1] == pytest.approx(0.6416, abs=1e-3)


def test_small_commands(tmp_path):
    out = str(tmp_path)
    assert run(["--out", out, "bulk-modes"]) == 0
    assert run(["--out", out, "ocs", "--points", "20"]) == 0
    assert run(["--out", out, "fit", "ocs"]) == 0
    assert (tmp_path / "fit_ocs_report.txt").exists()


def test_reproduce_unknown_figure(tmp_path, capsys):
    assert run(["--out", str(tmp_path), "reproduce", "fig99"]) == EXIT_CODES["usage"]
