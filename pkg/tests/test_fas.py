import math

import numpy as np
import pytest
import scipy.sparse as sp

from fasflow.catalog import richards, synthetic2d, two_cell
from fasflow.coarsen import Hierarchy, HierarchyParams, Transfer, build_hierarchy
from fasflow.fas import METHODS, Multilevel, SolverConfig, _Engine, SolveReport, backtrack, cap_step, solve

pytestmark = pytest.mark.filterwarnings("ignore:.*fewer than", "ignore:.*single cell")


def _abs(z):
    return abs(float(z[0]))


def test_backtrack_immediate_accept():
    x, s, n, ok = backtrack(_abs, np.array([4.0]), np.array([-6.0]))
    assert x[0] == -2.0 and s == 1.0 and n == 0 and ok


def test_backtrack_hand_trace():
    # |1 + 10 s| for s = 1, 1/2, 1/4, 1/8, 1/16: 11, 6, 3.5, 2.25, 1.625; each halving pays off
    x, s, n, ok = backtrack(_abs, np.array([1.0]), np.array([10.0]), max_halvings=4, theta=0.9)
    assert n == 4 and s == 0.0625 and x[0] == pytest.approx(1.625) and ok


def test_backtrack_early_exit():
    # a residual floor: halving does not reduce by the factor theta, so the full step is kept
    r = lambda z: 10.0 + abs(float(z[0]))  # noqa: E731
    x, s, n, ok = backtrack(r, np.array([0.0]), np.array([1.0]), max_halvings=4, theta=0.9)
    assert n == 0 and s == 1.0 and x[0] == 1.0


def test_backtrack_nonfinite():
    r = lambda z: math.nan  # noqa: E731
    x, s, n, ok = backtrack(r, np.array([3.0]), np.array([1.0]), max_halvings=2)
    assert not ok and x[0] == 3.0


def test_pressure_cap():
    dx = np.array([1.0, -1.0, 0.5])
    same, scale = cap_step(dx, dx, 2.0)
    assert scale == 1.0 and np.array_equal(same, dx)
    cap = math.log(1.5) / 1.6
    out, scale = cap_step(dx, dx, cap)
    assert scale == pytest.approx(0.2534, abs=1e-4)
    assert np.abs(out).max() == pytest.approx(cap)


@pytest.mark.parametrize("method", METHODS)
def test_two_cell_every_method(method):
    pb = two_cell()
    x, rep = solve(pb, method)
    assert rep.converged
    assert np.allclose(x[pb.level0().n_flux:], [0.75, 0.25], atol=1e-10)
    if method != "single_picard":
        assert rep.iterations <= 1


def test_aliases_and_unknown():
    pb = two_cell()
    assert solve(pb, "newton")[1].method == "single_newton"
    assert solve(pb, "fas-newton")[1].converged
    with pytest.raises(ValueError):
        solve(pb, "multigrid")


@pytest.fixture(scope="module")
def small():
    pb = synthetic2d(0.8, n=16)
    h = build_hierarchy(pb.mesh, pb.K0, HierarchyParams(3, (8, 4), 4, 1), level0=pb.level0())
    return pb, h


def test_solvers_reach_same_solution(small):
    pb, h = small
    cfg = SolverConfig(rel_tol=1e-10, hierarchy=h.params)
    ref, rep = solve(pb, "single_newton", cfg)
    assert rep.converged
    for method in ("single_picard", "fas_newton", "fas_picard", "cascadic"):
        x, rep = solve(pb, method, cfg, h)
        assert rep.converged, method
        assert np.allclose(x, ref, rtol=1e-6, atol=1e-7 * np.abs(ref).max()), method


def test_fas_fixed_point(small):
    pb, h = small
    x, rep = solve(pb, "single_newton", SolverConfig(rel_tol=1e-14, abs_tol=1e-13))
    ml = Multilevel(pb, h)
    eng = _Engine(ml, SolverConfig(abs_tol=1e-9), "newton", SolveReport("fas_newton"))
    y, early = eng.vcycle(0, x.copy(), pb.rhs())
    assert np.array_equal(y, x) and not early


def test_identity_two_level_cycle_is_three_smoothing_steps(small):
    pb, _ = small
    lv = pb.level0()
    I_s = sp.identity(lv.n_flux, format="csr")
    I_p = sp.identity(lv.n_p, format="csr")
    h = Hierarchy([lv, lv], [Transfer(np.arange(lv.n_cells), I_p, I_s, I_s)], HierarchyParams(2, (2,), 1))
    cfg = SolverConfig(coarsest_steps=1, max_iters=1, rel_tol=1e-30, abs_tol=0.0, pressure_cap=0.0)
    x_fas, _ = solve(pb, "fas_newton", cfg, h)
    ml = Multilevel(pb, None)
    eng = _Engine(ml, cfg, "newton", SolveReport("single_newton"))
    x = pb.initial_guess()
    for _ in range(3):
        x, _ = eng.smooth(0, x, pb.rhs())
    assert np.allclose(x_fas, x, rtol=1e-8, atol=1e-10)


def test_report_contents(small, tmp_path):
    pb, h = small
    x, rep = solve(pb, "fas_newton", SolverConfig(hierarchy=h.params), h)
    assert rep.converged and rep.failure is None
    assert len(rep.residuals) == rep.iterations + 1
    assert rep.residuals[-1] <= 1e-8 * rep.residuals[0] or rep.residuals[-1] <= 1e-10
    assert len(rep.smoothing_steps) == 3 and rep.smoothing_steps[2] > 0
    assert rep.setup_time > 0 and rep.wall_time > 0
    rep.write_history(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "event,level,iteration,residual,step,halvings"
    assert len(lines) == len(rep.events) + 1


def test_cascadic_counts(small):
    pb, h = small
    _, rep = solve(pb, "cascadic", SolverConfig(hierarchy=h.params), h)
    assert rep.converged
    assert len(rep.level_iterations) == 3 and rep.iterations == rep.level_iterations[0]


def test_iteration_limit_reported(small):
    pb, h = small
    _, rep = solve(pb, "single_picard", SolverConfig(max_iters=2))
    assert not rep.converged and rep.iterations == 2 and rep.failure == "iteration limit reached"


def test_richards_small_grid():
    pb = richards("loam", 32, 8)
    x, rep = solve(pb, "fas_newton", SolverConfig(hierarchy=HierarchyParams(2, (16,), 4, 1)))
    assert rep.converged
    _, ref = solve(pb, "single_newton")
    assert ref.converged
