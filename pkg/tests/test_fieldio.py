import numpy as np
import pytest

from fasflow.catalog import from_config, synthetic2d
from fasflow.fas import solve
from fasflow.fieldio import (REPORT_HEADER, ConfigError, PermField, generate_synthetic_field, read_config,
                             read_perm_raster, read_report, read_solution, rescale_perm, write_perm_raster,
                             write_report, write_solution)


def test_raster_of_ones(tmp_path):
    path = tmp_path / "k.txt"
    np.savetxt(path, np.ones(3 * 6))
    f = read_perm_raster(path, 3, 2, 1)
    assert f.kx.shape == (1, 2, 3) and np.all(f.kx == 1) and np.all(f.kz == 1)


def test_raster_rescaling(tmp_path):
    path = tmp_path / "k.txt"
    np.savetxt(path, [2.0, 8.0, 2.0, 8.0, 2.0, 8.0])
    f = rescale_perm(read_perm_raster(path, 2, 1, 1))
    assert np.allclose(f.kx.ravel(), [0.25, 1.0])
    assert np.allclose(f.kz.ravel(), [0.0025, 0.01])


def test_raster_errors(tmp_path):
    with pytest.raises(OSError):
        read_perm_raster(tmp_path / "missing.txt", 2, 1, 1)
    path = tmp_path / "short.txt"
    np.savetxt(path, [1.0, 2.0])
    with pytest.raises(ValueError):
        read_perm_raster(path, 2, 1, 1)
    np.savetxt(path, [1.0, -2.0, 1.0, 1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        read_perm_raster(path, 2, 1, 1)


def test_raster_round_trip(tmp_path):
    f = generate_synthetic_field(4, 3, 2, seed=1)
    write_perm_raster(tmp_path / "k.txt", f)
    g = read_perm_raster(tmp_path / "k.txt", 4, 3, 2)
    assert np.allclose(g.kx, f.kx, rtol=1e-9) and g.shape == (4, 3, 2)


def test_synthetic_fields():
    assert np.all(generate_synthetic_field(5, 4, 1, sigma=0.0).kx == 1.0)
    a = generate_synthetic_field(8, 8, 1, seed=4)
    b = generate_synthetic_field(8, 8, 1, seed=4)
    assert np.array_equal(a.kx, b.kx)
    assert a.kx.max() == pytest.approx(1.0)
    c = generate_synthetic_field(64, 32, 1, style="channel", seed=2)
    assert c.kx.max() / c.kx.min() == pytest.approx(100.0, rel=0.01)
    layered = generate_synthetic_field(4, 6, 1, style="layered", seed=0)
    assert np.all(layered.kx == layered.kx[:, :, :1])
    with pytest.raises(ValueError):
        generate_synthetic_field(2, 2, 1, style="fractal")


def test_field_must_match_mesh():
    from fasflow.mesh import build_cartesian_mesh
    f = PermField(*(np.ones((1, 2, 2)),) * 3)
    with pytest.raises(ValueError):
        f.tensor(build_cartesian_mesh(3, 2, 1, dim=2))
    assert f.tensor(build_cartesian_mesh(2, 2, 1, dim=2)).shape == (4, 2)


MINIMAL = """
[mesh]
nx = 2
ny = 1

[kappa]
law = constant

[solver]
method = single_newton
"""

LOAM = """
[mesh]
nx = 16
ny = 4
hx = 250
hy = 250
hz = 100

[kappa]
law = richards
alpha = 1.246e2
beta = 1.77
k0 = 1.067

[boundary]
water_table = y=0 ; dirichlet ; head:0
pond = y=1000 & x<=1000 ; dirichlet ; head:0
"""


def test_minimal_config_is_two_cell_chain(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(MINIMAL)
    cfg = read_config(path)
    assert cfg["solver"]["method"] == "single_newton"
    pb = from_config(cfg)
    x, rep = solve(pb, cfg["solver"]["method"])
    assert rep.converged and rep.iterations == 1
    assert np.allclose(x[pb.level0().n_flux:], [0.75, 0.25], atol=1e-10)


def test_loam_config(tmp_path):
    path = tmp_path / "loam.ini"
    path.write_text(LOAM)
    cfg = read_config(path)
    law = cfg["kappa"]
    assert (law["alpha"], law["beta"], law["k0"]) == (124.6, 1.77, 1.067)
    pb = from_config(cfg)
    assert pb.law.kind == "richards" and np.allclose(pb.K0, 1.067)
    assert np.allclose(pb.offset, pb.mesh.cell_centers[:, 1])
    assert [r[0] for r in cfg["boundary"]] == ["water_table", "pond"]


def test_config_errors(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[mesh]\nnx = 2\n\n[kappa]\nlaw = constant\n")
    with pytest.raises(ConfigError):
        read_config(path)
    path.write_text("[mesh]\nnx = 2\nny = 1\nzz = 3\n\n[kappa]\nlaw = constant\n\n[extra]\na = 1\n")
    with pytest.warns(UserWarning) as rec:
        read_config(path)
    msgs = " ".join(str(w.message) for w in rec)
    assert "zz" in msgs and "extra" in msgs
    path.write_text("[mesh]\nnx = two\nny = 1\n\n[kappa]\nlaw = constant\n")
    with pytest.raises(ConfigError):
        read_config(path)
    with pytest.raises(ConfigError):
        read_config(tmp_path / "nope.ini")


def test_report_header_and_rows(tmp_path):
    rows = [{"solver": "fas_newton", "alpha": 0.8, "cells": 4096, "levels": 3, "mA": 4, "mf": 1,
             "nonlinear_iters": 3, "time_s": 0.123456789, "converged": True, "early_presmooth": False}]
    path = tmp_path / "r.csv"
    write_report(path, rows)
    text = path.read_text().splitlines()
    assert text[0] == "solver,alpha,cells,levels,mA,mf,nonlinear_iters,time_s,converged,early_presmooth"
    assert text[1] == "fas_newton,0.8,4096,3,4,1,3,0.123457,true,false"
    back = read_report(path)
    assert list(back[0]) == REPORT_HEADER


def test_solution_round_trip(tmp_path):
    pb = synthetic2d(0.4, n=8)
    x, _ = solve(pb, "single_newton")
    lv = pb.level0()
    p, flux = x[lv.n_flux:], pb.full_flux(x)
    write_solution(tmp_path / "s.vtk", pb.mesh, p, flux)
    text = (tmp_path / "s.vtk").read_text()
    assert "SCALARS pressure double 1" in text and "DIMENSIONS 9 9 2" in text
    back = read_solution(tmp_path / "s.vtk")
    assert np.allclose(back["pressure"], p, rtol=1e-11)
    assert np.allclose(back["flux"], flux, rtol=1e-11, atol=1e-300)
    with pytest.raises(ValueError):
        write_solution(tmp_path / "t.vtk", pb.mesh, p[:-1], flux)
