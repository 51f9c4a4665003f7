"""Two-point flux approximation in mixed form.

The fine system for fluxes ``sigma`` (one per interface) and cell pressures
``p`` reads ``[M(p) D^T; D 0] [sigma; p] = -[g; f]`` with

* ``M`` diagonal: ``1/(k_K T_K) + 1/(k_L T_L)`` on internal interfaces,
  ``1/(k_K T_K)`` on Dirichlet interfaces and ``1`` on Neumann interfaces,
* ``D`` the signed cell/interface incidence (``-1`` on K, ``+1`` on L, Neumann
  columns empty),
* ``g`` the Dirichlet data, or ``|e| g_N`` on Neumann interfaces,
* ``f_K = |K| f + sum of |e| g_N`` over the Neumann interfaces of ``K``.

``T`` denotes the half transmissibility and ``k`` the scalar nonlinearity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import DIRICHLET, INTERNAL, NEUMANN, Mesh


@dataclass(frozen=True)
class KappaLaw:
    """Scalar nonlinearity ``kappa(p)``; ``richards`` acts on ``psi = p - z``.

    ``k0`` is the saturated conductivity; it scales the tensor field, not the
    scalar law.
    """
    kind: str = "constant"
    alpha: float = 0.0
    beta: float = 1.0
    k0: float = 1.0

    @classmethod
    def exponential(cls, alpha: float) -> "KappaLaw":
        return cls("exponential", alpha=float(alpha))

    @classmethod
    def richards(cls, alpha: float, beta: float, k0: float = 1.0) -> "KappaLaw":
        if alpha <= 0 or beta <= 0:
            raise ValueError("Richards parameters must be positive")
        return cls("richards", alpha=float(alpha), beta=float(beta), k0=float(k0))

    @classmethod
    def constant(cls) -> "KappaLaw":
        return cls("constant")

    def value(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "exponential":
            return np.exp(self.alpha * p)
        if self.kind == "richards":
            return self.alpha / (self.alpha + np.abs(p) ** self.beta)
        return np.ones_like(p)

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "exponential":
            return self.alpha * np.exp(self.alpha * p)
        if self.kind == "richards":
            a, b = self.alpha, self.beta
            ap = np.abs(p)
            return -a * b * _pow(ap, b - 1) * np.sign(p) / (a + ap ** b) ** 2
        return np.zeros_like(p)

    def inverse(self, p):
        """``1 / kappa(p)``."""
        p = np.asarray(p, dtype=float)
        if self.kind == "exponential":
            return np.exp(-self.alpha * p)
        if self.kind == "richards":
            return (self.alpha + np.abs(p) ** self.beta) / self.alpha
        return np.ones_like(p)

    def inverse_derivative(self, p):
        """``d(1/kappa)/dp``."""
        p = np.asarray(p, dtype=float)
        if self.kind == "exponential":
            return -self.alpha * np.exp(-self.alpha * p)
        if self.kind == "richards":
            return self.beta * _pow(np.abs(p), self.beta - 1) * np.sign(p) / self.alpha
        return np.zeros_like(p)


def _pow(x, e):
    # |psi|^(beta-1) with the convention 0^0 = 1 and 0^(negative) treated as 0
    # (the sign factor kills it anyway)
    with np.errstate(divide="ignore"):
        out = np.power(x, e)
    return np.where(x == 0, 0.0 if e != 0 else 1.0, out)


def as_tensor(mesh: Mesh, K0) -> np.ndarray:
    """Diagonal tensor field of shape ``(n_cells, dim)``."""
    K0 = np.asarray(K0, dtype=float)
    n, d = mesh.n_cells, mesh.dim
    if K0.ndim == 0:
        return np.full((n, d), float(K0))
    if K0.ndim == 1 and K0.shape[0] == n:
        return np.repeat(K0[:, None], d, axis=1)
    if K0.ndim == 2 and K0.shape[0] == n and K0.shape[1] >= d:
        return K0[:, :d].copy()
    raise ValueError(f"tensor field of shape {K0.shape} does not fit a mesh with {n} cells")


def half_transmissibilities(mesh: Mesh, K0) -> np.ndarray:
    """``T[e, s]`` for the cell on side ``s`` of interface ``e`` (NaN if absent)."""
    K = as_tensor(mesh, K0)
    if np.any(K <= 0) or not np.all(np.isfinite(K)):
        raise ValueError("permeability must be positive and finite")
    out = np.full((mesh.n_faces, 2), np.nan)
    for s in (0, 1):
        idx = np.flatnonzero(mesh.face_cells[:, s] >= 0)
        c = mesh.face_cells[idx, s]
        n = mesh.face_normals[idx] * (1.0 if s == 0 else -1.0)
        dx = mesh.face_centers[idx] - mesh.cell_centers[c]
        out[idx, s] = mesh.face_measures[idx] * np.einsum("ij,ij,ij->i", n, K[c], dx) / np.einsum("ij,ij->i", dx, dx)
    if np.any(out[~np.isnan(out)] <= 0):
        raise ValueError("non-positive half transmissibility; mesh is not K-orthogonal")
    return out


def half_transmissibility(mesh: Mesh, K0, cell: int, face: int) -> float:
    side = 0 if mesh.face_cells[face, 0] == cell else 1
    if mesh.face_cells[face, side] != cell:
        raise ValueError("cell does not touch the interface")
    n = mesh.face_normals[face] * (1.0 if side == 0 else -1.0)
    K = as_tensor(mesh, K0)[cell]
    dx = mesh.face_centers[face] - mesh.cell_centers[cell]
    return float(mesh.face_measures[face] * np.dot(n * K, dx) / np.dot(dx, dx))


def incidence(mesh: Mesh) -> sp.csr_matrix:
    """Divergence ``D`` (cells x interfaces); Neumann columns are empty."""
    fc = mesh.face_cells
    act = mesh.face_kind != NEUMANN
    e = np.flatnonzero(act)
    rows = [fc[e, 0]]
    cols = [e]
    vals = [-np.ones(len(e))]
    ei = np.flatnonzero(mesh.face_kind == INTERNAL)
    rows.append(fc[ei, 1])
    cols.append(ei)
    vals.append(np.ones(len(ei)))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(mesh.n_cells, mesh.n_faces))


def boundary_data(mesh: Mesh, source) -> tuple[np.ndarray, np.ndarray]:
    """Load vectors ``(g, f)`` of the fine system."""
    g = np.zeros(mesh.n_faces)
    dr = mesh.face_kind == DIRICHLET
    nm = mesh.face_kind == NEUMANN
    g[dr] = mesh.face_value[dr]
    g[nm] = mesh.face_measures[nm] * mesh.face_value[nm]
    src = np.broadcast_to(np.asarray(source, dtype=float), (mesh.n_cells,))
    f = mesh.cell_volumes * src
    np.add.at(f, mesh.face_cells[nm, 0], g[nm])
    return g, f


@dataclass
class SaddleSystem:
    M: sp.csr_matrix
    D: sp.csr_matrix
    E: sp.csr_matrix
    g: np.ndarray
    f: np.ndarray

    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.M, self.E], [self.D, None]], format="csr")

    def rhs(self) -> np.ndarray:
        return -np.concatenate([self.g, self.f])


def _m_diag(mesh: Mesh, T: np.ndarray, kinv: np.ndarray) -> np.ndarray:
    fc = mesh.face_cells
    d = np.ones(mesh.n_faces)
    act = mesh.face_kind != NEUMANN
    d[act] = kinv[fc[act, 0]] / T[act, 0]
    it = mesh.face_kind == INTERNAL
    d[it] += kinv[fc[it, 1]] / T[it, 1]
    return d


def assemble_fine_system(mesh: Mesh, K0, kappa: KappaLaw, p, source=0.0, offset=None) -> SaddleSystem:
    """Picard form of the fine system with ``M`` frozen at pressure ``p``."""
    T = half_transmissibilities(mesh, K0)
    p = np.asarray(p, dtype=float)
    z = 0.0 if offset is None else offset
    kinv = kappa.inverse(p - z)
    M = sp.diags(_m_diag(mesh, T, kinv)).tocsr()
    D = incidence(mesh)
    g, f = boundary_data(mesh, source)
    return SaddleSystem(M, D, D.T.tocsr(), g, f)


def residual(mesh: Mesh, K0, kappa: KappaLaw, sigma, p, source=0.0, offset=None) -> np.ndarray:
    """``[M(p) sigma + D^T p + g; D sigma + f]``."""
    s = assemble_fine_system(mesh, K0, kappa, p, source, offset)
    return np.concatenate([s.M @ sigma + s.D.T @ p + s.g, s.D @ sigma + s.f])


def reduced_system(system: SaddleSystem) -> tuple[sp.csr_matrix, np.ndarray]:
    """Cell-centred system ``D M^-1 D^T p = f - D M^-1 g`` for diagonal ``M``."""
    minv = 1.0 / system.M.diagonal()
    A = (system.D @ sp.diags(minv) @ system.D.T).tocsr()
    rhs = system.f - system.D @ (minv * system.g)
    return A, rhs


def solve_reduced(system: SaddleSystem) -> tuple[np.ndarray, np.ndarray]:
    """Direct solve through the reduced system; returns ``(sigma, p)``."""
    A, rhs = reduced_system(system)
    p = spla.spsolve(A.tocsc(), rhs)
    p = np.atleast_1d(p)
    sigma = -(system.D.T @ p + system.g) / system.M.diagonal()
    return sigma, p
