import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fasflow.catalog import two_cell
from fasflow.mesh import build_cartesian_mesh, classify_boundary
from fasflow.tpfa import (KappaLaw, assemble_fine_system, half_transmissibilities, half_transmissibility,
                          reduced_system, residual, solve_reduced)


def _x_face(mesh, cell):
    faces = mesh.cell(cell).faces
    return int(next(e for e in faces if abs(mesh.face_normals[e, 0]) == 1))


def test_half_transmissibility_unit_square():
    m = build_cartesian_mesh(1, 1, 1, dim=2)
    assert half_transmissibility(m, np.ones((1, 2)), 0, _x_face(m, 0)) == 2.0
    assert np.allclose(half_transmissibilities(m, 1.0)[:, 0], 2.0)


def test_half_transmissibility_anisotropic():
    m = build_cartesian_mesh(1, 1, 1, dim=2)
    K = np.array([[4.0, 1.0]])
    assert half_transmissibility(m, K, 0, _x_face(m, 0)) == pytest.approx(8.0)


def test_half_transmissibility_richards_spacing():
    m = build_cartesian_mesh(2, 1, 1, 25.0, 25.0, 1.0, dim=2)
    assert half_transmissibility(m, 1.067, 0, _x_face(m, 0)) == pytest.approx(2.134, rel=1e-12)


def test_half_transmissibility_wrong_cell():
    m = build_cartesian_mesh(3, 1, 1, dim=2)
    with pytest.raises(ValueError):
        half_transmissibility(m, 1.0, 2, _x_face(m, 0))


@pytest.mark.parametrize("law", [KappaLaw.exponential(0.8), KappaLaw.richards(124.6, 1.77, 1.067),
                                 KappaLaw.constant()])
def test_law_derivatives(law):
    p = np.array([-30.0, -2.0, -0.3, 0.4, 1.5, 7.0])
    h = 1e-6
    fd = (law.value(p + h) - law.value(p - h)) / (2 * h)
    assert np.allclose(fd, law.derivative(p), rtol=1e-6, atol=1e-12)
    fd = (law.inverse(p + h) - law.inverse(p - h)) / (2 * h)
    assert np.allclose(fd, law.inverse_derivative(p), rtol=1e-6, atol=1e-12)
    assert np.allclose(law.value(p) * law.inverse(p), 1.0)
    assert np.all(law.value(p) > 0)


def test_richards_law_at_zero():
    law = KappaLaw.richards(124.6, 1.77)
    assert law.value(0.0) == 1.0
    assert law.inverse_derivative(np.array([0.0]))[0] == 0.0
    with pytest.raises(ValueError):
        KappaLaw.richards(-1.0, 2.0)


def test_all_neumann_single_cell():
    m = classify_boundary(build_cartesian_mesh(1, 1, 1, dim=2), [])
    s = assemble_fine_system(m, 1.0, KappaLaw.constant(), np.zeros(1), source=1.0)
    assert np.allclose(s.M.toarray(), np.eye(4))
    assert s.D.nnz == 0
    assert np.allclose(s.f, [1.0])
    A, rhs = reduced_system(s)
    assert np.allclose(A.toarray(), [[0.0]]) and np.allclose(rhs, [1.0])


def test_exponential_at_zero_matches_constant():
    pb = two_cell()
    a = assemble_fine_system(pb.mesh, 1.0, KappaLaw.exponential(0.1), np.zeros(2))
    b = assemble_fine_system(pb.mesh, 1.0, KappaLaw.constant(), np.zeros(2))
    assert np.allclose(a.matrix().toarray(), b.matrix().toarray())


def test_two_cell_reduced_oracle():
    pb = two_cell()
    s = assemble_fine_system(pb.mesh, 1.0, KappaLaw.constant(), np.zeros(2))
    A, rhs = reduced_system(s)
    assert np.allclose(A.toarray(), [[3.0, -1.0], [-1.0, 3.0]])
    assert np.allclose(rhs, [2.0, 0.0])
    sigma, p = solve_reduced(s)
    assert np.allclose(p, [0.75, 0.25], atol=1e-14)
    r = residual(pb.mesh, 1.0, KappaLaw.constant(), sigma, p)
    assert np.linalg.norm(r) <= 1e-13
    # the flux through every interface is the same, 1/2 to the right
    it = pb.mesh.internal
    assert np.allclose(sigma[it], 0.5)


def test_zero_state_zero_data():
    m = classify_boundary(build_cartesian_mesh(3, 2, 1, dim=2), [])
    r = residual(m, 1.0, KappaLaw.exponential(0.8), np.zeros(m.n_faces), np.zeros(m.n_cells))
    assert np.all(r == 0.0)


def test_residual_matches_matrix():
    m = classify_boundary(build_cartesian_mesh(3, 3, 1, dim=2), [])
    rng = np.random.default_rng(0)
    s, p = rng.normal(size=m.n_faces), rng.normal(size=m.n_cells)
    sys_ = assemble_fine_system(m, 1.0, KappaLaw.constant(), p, source=0.3)
    r = residual(m, 1.0, KappaLaw.constant(), s, p, source=0.3)
    assert np.allclose(r, sys_.matrix() @ np.r_[s, p] - sys_.rhs())


def test_reduced_is_m_matrix():
    from fasflow.mesh import BoundaryRule, parse_predicate
    m = build_cartesian_mesh(4, 4, 1, dim=2)
    m = classify_boundary(m, [BoundaryRule(parse_predicate("y=0"), "dirichlet", 0.0)])
    A, _ = reduced_system(assemble_fine_system(m, 1.0, KappaLaw.constant(), np.zeros(16)))
    A = A.toarray()
    off = A - np.diag(np.diag(A))
    assert np.all(off <= 0) and np.all(np.diag(A) > 0)
    assert np.all(np.linalg.eigvalsh(A) > 0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-3.0, 3.0))
def test_constant_pressure_scales_mass(alpha, c):
    m = build_cartesian_mesh(3, 2, 1, dim=2)
    law = KappaLaw.exponential(alpha)
    M0 = assemble_fine_system(m, 1.0, law, np.zeros(6)).M
    Mc = assemble_fine_system(m, 1.0, law, np.full(6, c)).M
    # Neumann rows hold the identity and do not scale
    nm = m.face_kind == 2
    d0, dc = M0.diagonal(), Mc.diagonal()
    assert np.allclose(dc[~nm], np.exp(-alpha * c) * d0[~nm])
    assert np.allclose(dc[nm], 1.0)


def test_source_is_conserved():
    from fasflow.mesh import BoundaryRule, parse_predicate
    m = build_cartesian_mesh(5, 4, 1, 0.2, 0.25, 3.0, dim=2)
    m = classify_boundary(m, [BoundaryRule(parse_predicate("y=0"), "dirichlet", 0.0)])
    K = np.random.default_rng(3).uniform(0.1, 2.0, size=(m.n_cells, 2))
    s = assemble_fine_system(m, K, KappaLaw.constant(), np.zeros(m.n_cells), source=2.0)
    sigma, p = solve_reduced(s)
    out = sigma[m.face_kind == 1].sum()
    # the net outflow through the Dirichlet boundary equals the total source
    assert out == pytest.approx(2.0 * m.cell_volumes.sum(), rel=1e-12)
    assert sp.issparse(s.D)
