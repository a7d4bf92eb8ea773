from __future__ import annotations

import io
import math
import subprocess
import sys

import numpy as np
import pytest

import fraccont.cli as cli
from fraccont.cli import read_config, run
from fraccont.contlab import ContinuityReport
from fraccont.errors import NotConverged
from fraccont.fracgrid import GridFn, read_csv
from fraccont.specdiff import ModeTrajectory

FAST_SWEEP = ["--target", "spectral", "--theta", "e1", "--P", "1", "--levels", "3"]


def test_mlf_prints_the_value(capsys):
    assert run(["mlf", "--alpha", "1", "--z", "1"]) == 0
    assert float(capsys.readouterr().out) == math.e


def test_bad_parameter_exits_with_code_two_and_names_it(capsys):
    assert run(["mlf", "--alpha", "0", "--z", "1"]) == 2
    err = capsys.readouterr().err
    assert "ValidationError" in err and "[alpha]" in err
    assert run(["mlf", "--alpha", "x", "--z", "1"]) == 2
    assert run(["mlf", "--z", "1"]) == 2
    assert "[alpha]" in capsys.readouterr().err


def test_argparse_errors_return_their_code():
    assert run(["nosuchcommand"]) == 2
    assert run(["mlf", "--help"]) == 0


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# relaxation\nalpha = 1\nz = 2   # overridden\n")
    assert run(["mlf", "--config", str(cfg), "--z", "1"]) == 0
    assert float(capsys.readouterr().out) == math.e
    assert run(["mlf", "--config", str(cfg)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(math.e**2)


def test_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("alpha = 1\nz = 1\nwibble = 3\n")
    assert run(["mlf", "--config", str(cfg)]) == 2
    assert "[wibble]" in capsys.readouterr().err
    cfg.write_text("alpha 1\n")
    assert run(["mlf", "--config", str(cfg)]) == 2
    assert run(["mlf", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert run(["montecarlo", "--seed", "x"]) == 2


def test_read_config_normalises_dashes(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("physical-out = a.csv\n\n")
    assert read_config(str(cfg)) == {"physical_out": "a.csv"}


def test_abel_command_writes_solution(tmp_path, capsys):
    out = tmp_path / "u.csv"
    assert run(["abel", "--alpha", "0.5", "--N", "64", "--mesh", "graded", "--out", str(out)]) == 0
    u = GridFn.from_csv(str(out))
    assert u.grid.N == 64
    assert repr(float(u.values[-1, 0])) in capsys.readouterr().out
    assert u.values[-1, 0] == pytest.approx(0.4275835761558070, rel=1e-4)
    assert run(["abel", "--alpha", "0.5", "--mesh", "chebyshev"]) == 2


def test_seqfde_command(tmp_path, capsys):
    out = tmp_path / "y.csv"
    assert run(["seqfde", "--etas", "0.5", "--p", "1", "--b", "1", "--N", "512",
                "--out", str(out)]) == 0
    header, rows = read_csv(str(out))
    assert rows.shape[0] == 513
    # E_{1/2,1/2}(-1)
    assert rows[-1, 1] == pytest.approx(0.136606, abs=2e-3)
    assert "y(T)" in capsys.readouterr().out
    assert run(["seqfde", "--etas", "0.5,0.5", "--p", "1", "--b", "1,0"]) == 2


def test_diffusion_command(tmp_path, capsys):
    out, phys = tmp_path / "modes.csv", tmp_path / "u.csv"
    assert run(["diffusion", "--alpha", "0.5", "--L", str(math.pi), "--P", "4", "--N", "10",
                "--out", str(out), "--physical-out", str(phys), "--nx", "5"]) == 0
    tr = ModeTrajectory.from_csv(str(out))
    assert tr.frames[-1, 0] == pytest.approx(0.427583576155807004, rel=1e-12)
    header, rows = read_csv(str(phys))
    assert header == ["t", "x", "u"] and rows.shape == (11 * 5, 3)
    assert "||v(T)||_L2" in capsys.readouterr().out
    assert run(["diffusion", "--alpha", "0.5", "--forced", "1", "--theta", "decay", "--P", "4",
                "--N", "8"]) == 0
    assert run(["diffusion", "--alpha", "0.5", "--theta", "spike"]) == 2


def test_sweep_writes_report(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert run(["sweep", *FAST_SWEEP, "--out", str(out)]) == 0
    r = ContinuityReport.from_csv(str(out))
    assert r.rows.shape == (4, 2) and r.verdict
    assert "slope=" in capsys.readouterr().out
    assert run(["sweep", *FAST_SWEEP]) == 0
    text = capsys.readouterr().out
    assert text.startswith("h,") and "verdict=" in text


def test_montecarlo_is_byte_identical(tmp_path):
    args = ["montecarlo", *FAST_SWEEP, "--alpha0", "0.4", "--alpha1", "0.6", "--trials", "16",
            "--seed", "7"]
    a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
    assert run([*args, "--out", str(a)]) == 0
    assert run([*args, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert run([*args[:-1], "8", "--out", str(c)]) == 0
    assert a.read_bytes() != c.read_bytes()


def test_illposed_command(tmp_path, capsys):
    assert run(["illposed", "--example", "abel", "--nmin", "2", "--nmax", "4"]) == 0
    header, rows = read_csv(io.StringIO(capsys.readouterr().out))
    assert header[0] == "n" and rows[:, 0].tolist() == [2, 3, 4]
    assert np.allclose(rows[:, 1] ** 2, 1 / (rows[:, 0] * math.pi))
    out = tmp_path / "w.csv"
    assert run(["illposed", "--example", "exp", "--nmax", "20", "--out", str(out)]) == 0
    _, rows = read_csv(str(out))
    assert np.allclose(rows[:, 4], 2 / rows[:, 0]) and np.all(np.isnan(rows[:, 3]))
    for bad in (["--nmin", "1"], ["--nmin", "5", "--nmax", "3"], ["--example", "heat"],
                ["--a", "0"]):
        assert run(["illposed", *bad]) == 2


def test_solver_failure_exits_with_code_one(monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise NotConverged("no convergence")

    monkeypatch.setattr(cli, "solve_second_kind", broken)
    assert run(["abel", "--alpha", "0.5", "--N", "8"]) == 1
    assert "NotConverged" in capsys.readouterr().err


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "fraccont.cli", "mlf", "--alpha", "0.5",
                          "--z", "-1"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert float(res.stdout) == pytest.approx(0.427583576155807004, rel=1e-14)
