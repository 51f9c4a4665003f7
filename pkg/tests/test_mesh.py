import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fasflow.mesh import (DIRICHLET, INTERNAL, NEUMANN, BoundaryRule, build_cartesian_mesh, cell_graph,
                          classify_boundary, is_connected, parse_predicate, parse_value)


def test_unit_cube():
    m = build_cartesian_mesh(1, 1, 1)
    assert m.n_cells == 1
    assert m.n_faces == 6 and m.boundary.all()
    assert m.cell_volumes[0] == 1.0


def test_two_cells_3d_counts():
    m = build_cartesian_mesh(2, 1, 1)
    assert m.n_cells == 2
    assert m.internal.sum() == 1
    assert m.boundary.sum() == 10


def test_richards_grid_extent():
    m = build_cartesian_mesh(160, 40, 1, 25.0, 25.0, 1.0, active_mask=np.ones((1, 40, 160), bool))
    assert m.n_cells == 6400
    lo = m.face_centers.min(axis=0)
    hi = m.face_centers.max(axis=0)
    assert np.allclose(lo[:2], 0.0) and np.allclose(hi[:2], [4000.0, 1000.0])


def test_planar_mesh_uses_thickness():
    m = build_cartesian_mesh(2, 2, 1, 0.5, 0.25, 10.0, dim=2)
    assert m.dim == 2 and m.cell_centers.shape == (4, 2)
    assert np.allclose(m.cell_volumes, 0.5 * 0.25 * 10.0)
    xf = np.abs(m.face_normals[:, 0]) == 1
    assert np.allclose(m.face_measures[xf], 0.25 * 10.0)
    assert np.allclose(m.face_measures[~xf], 0.5 * 10.0)
    assert m.n_faces == 12


def test_active_mask_removes_cells():
    mask = np.ones((1, 2, 2), bool)
    mask[0, 1, 1] = False
    m = build_cartesian_mesh(2, 2, 1, dim=2, active_mask=mask)
    assert m.n_cells == 3
    assert m.internal.sum() == 2
    assert m.lattice_index[3] == -1


def test_invalid_arguments():
    with pytest.raises(ValueError):
        build_cartesian_mesh(0, 1, 1)
    with pytest.raises(ValueError):
        build_cartesian_mesh(2, 2, 2, dim=2)
    with pytest.raises(ValueError):
        build_cartesian_mesh(1, 1, 1, active_mask=np.zeros((1, 1, 1), bool))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 4))
def test_normals_and_incidence(nx, ny, nz):
    m = build_cartesian_mesh(nx, ny, nz, 1.0, 2.0, 0.5)
    # every normal points from K towards the face centre
    d = m.face_centers - m.cell_centers[m.face_cells[:, 0]]
    assert np.all(np.einsum("ij,ij->i", d, m.face_normals) > 0)
    # closed cells: outward normals weighted by area sum to zero
    acc = np.zeros((m.n_cells, 3))
    np.add.at(acc, m.face_cells[:, 0], m.face_normals * m.face_measures[:, None])
    it = m.internal
    np.add.at(acc, m.face_cells[it, 1], -m.face_normals[it] * m.face_measures[it, None])
    assert np.allclose(acc, 0.0)
    assert np.isclose(m.cell_volumes.sum(), nx * ny * nz * 1.0)
    ptr, _ = m.cell_faces()
    assert np.all(np.diff(ptr) == 6)


def test_cell_and_interface_views():
    m = build_cartesian_mesh(2, 1, 1, dim=2)
    c = m.cell(1)
    assert c.volume == 1.0 and len(c.faces) == 4
    e = int(np.flatnonzero(m.internal)[0])
    f = m.interface(e)
    assert f.cells == (0, 1) and f.kind == INTERNAL
    assert np.allclose(f.normal, [1.0, 0.0])


def test_predicates():
    xc = np.array([[0.0, 1000.0], [999.0, 1000.0], [1500.0, 1000.0], [10.0, 0.0]])
    assert parse_predicate("x<=1000 & y=1000")(xc).tolist() == [True, True, False, False]
    assert parse_predicate("y = 0")(xc).tolist() == [False, False, False, True]
    assert parse_predicate("x>999")(xc).tolist() == [False, False, True, False]
    with pytest.raises(ValueError):
        parse_predicate("x ~ 3")
    head = parse_value("head:2")
    assert np.allclose(head(xc), xc[:, 1] + 2)
    assert parse_value("-1.5") == -1.5


def test_bottom_dirichlet():
    m = build_cartesian_mesh(4, 3, 1, dim=2)
    m = classify_boundary(m, [BoundaryRule(parse_predicate("y=0"), "dirichlet", 0.0)])
    bottom = m.boundary & np.isclose(m.face_centers[:, 1], 0.0)
    assert np.all(m.face_kind[bottom] == DIRICHLET)
    assert np.all(m.face_kind[m.boundary & ~bottom] == NEUMANN)
    assert np.all(m.face_kind[m.internal] == INTERNAL)


def test_empty_rules_all_neumann():
    m = classify_boundary(build_cartesian_mesh(3, 3, 1, dim=2), [])
    assert np.all(m.face_kind[m.boundary] == NEUMANN)
    assert np.all(m.face_value == 0.0)


def test_two_cell_dirichlet_ends():
    m = build_cartesian_mesh(2, 1, 1, dim=2)
    m = classify_boundary(m, [BoundaryRule(parse_predicate("x=0"), "dirichlet", 1.0),
                              BoundaryRule(parse_predicate("x=2"), "dirichlet", 0.0)])
    assert (m.face_kind == DIRICHLET).sum() == 2
    assert sorted(m.face_value[m.face_kind == DIRICHLET]) == [0.0, 1.0]


def test_first_rule_wins_and_tags():
    m = build_cartesian_mesh(2, 2, 1, dim=2)
    m = classify_boundary(m, [BoundaryRule(parse_predicate("y=0 & x<=1"), "dirichlet", 5.0),
                              BoundaryRule(parse_predicate("y=0"), "neumann", 2.0)])
    bottom = np.flatnonzero(m.boundary & np.isclose(m.face_centers[:, 1], 0.0))
    left = bottom[m.face_centers[bottom, 0] < 1]
    right = bottom[m.face_centers[bottom, 0] > 1]
    assert m.face_kind[left[0]] == DIRICHLET and m.face_tag[left[0]] == 1
    assert m.face_kind[right[0]] == NEUMANN and m.face_value[right[0]] == 2.0 and m.face_tag[right[0]] == 2


def test_rule_errors():
    m = build_cartesian_mesh(2, 1, 1, dim=2)
    with pytest.raises(ValueError):
        classify_boundary(m, [BoundaryRule(parse_predicate("x=1"), "dirichlet", 0.0)])
    with pytest.raises(ValueError):
        classify_boundary(m, [BoundaryRule(parse_predicate("x=0"), "robin", 0.0)])
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        classify_boundary(m, [BoundaryRule(parse_predicate("x=7"), "dirichlet", 0.0)])
    assert any("matches no interface" in str(x.message) for x in w)


def test_dual_graph_counts():
    g = cell_graph(build_cartesian_mesh(2, 1, 1, dim=2))
    assert g.shape == (2, 2) and g.nnz == 2
    g = cell_graph(build_cartesian_mesh(3, 3, 1, dim=2))
    assert g.shape == (9, 9) and g.nnz // 2 == 12
    assert is_connected(g)
