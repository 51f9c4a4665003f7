import subprocess
import sys

import pytest

from fasflow.cli import run
from fasflow.fieldio import REPORT_HEADER, read_report

pytestmark = pytest.mark.filterwarnings("ignore:.*fewer than", "ignore:.*single cell")


def test_two_cell_all_solvers(tmp_path, capsys):
    report = tmp_path / "r.csv"
    code = run(["--problem", "two_cell", "--solver", "single_newton,fas_newton,cascadic",
                "--report", str(report)])
    assert code == 0
    rows = read_report(report)
    assert [r["solver"] for r in rows] == ["single_newton", "fas_newton", "cascadic"]
    assert all(r["converged"] == "true" and r["cells"] == "2" for r in rows)
    assert rows[0]["nonlinear_iters"] == "1" and rows[0]["mA"] == ""
    assert "ok" in capsys.readouterr().out


def test_alpha_sweep_rows_and_determinism(tmp_path):
    args = ["--problem", "synthetic2d", "--solver", "single_newton,fas_newton", "--sweep-alpha",
            "0.1,0.2,0.4,0.8,1.6", "--sweep-sizes", "16", "--levels", "2", "--factor", "8", "--ma", "2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(args + ["--report", str(a)]) == 0
    assert run(args + ["--report", str(b)]) == 0
    ra, rb = read_report(a), read_report(b)
    assert len(ra) == 10 and list(ra[0]) == REPORT_HEADER
    strip = lambda rows: [{k: v for k, v in r.items() if k != "time_s"} for r in rows]  # noqa: E731
    assert strip(ra) == strip(rb)
    assert sorted({r["alpha"] for r in ra}, key=float) == ["0.1", "0.2", "0.4", "0.8", "1.6"]
    fas = [r for r in ra if r["solver"] == "fas_newton"]
    assert all(r["levels"] == "2" and r["mA"] == "2" and r["mf"] == "1" for r in fas)


def test_export_per_run(tmp_path):
    out = tmp_path / "sol.vtk"
    assert run(["--problem", "synthetic2d", "--solver", "single_newton", "--sweep-alpha", "0.1,0.2",
                "--sweep-sizes", "8", "--export", str(out)]) == 0
    assert len(list(tmp_path.glob("sol_*.vtk"))) == 2


def test_nonconverged_exit_code(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[mesh]\nnx = 8\nny = 8\n\n[kappa]\nlaw = exponential\nalpha = 1.6\n\n"
                   "[field]\nsigma = 1.0\n\n[solver]\nmax_iters = 1\n")
    args = ["--config", str(cfg), "--solver", "single_picard"]
    assert run(args) == 1
    assert run(args + ["--allow-nonconverged"]) == 0


def test_bad_input():
    assert run(["--problem", "nowhere"]) == 2
    assert run(["--problem", "two_cell", "--solver", "amg"]) == 2
    assert run([]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fasflow", "--problem", "two_cell", "--solver", "newton"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0, res.stderr
    assert "single_newton" in res.stdout
