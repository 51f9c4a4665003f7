"""Cell-centred meshes: Cartesian construction, boundary tagging and the dual graph.

A mesh stores its geometry in flat numpy arrays.  Interfaces are indexed
globally; ``face_cells[e] = (K, L)`` with ``K < L`` for internal interfaces and
``(K, -1)`` for boundary interfaces, and ``face_normals[e]`` is the unit normal
pointing out of ``K``.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

INTERNAL = 0
DIRICHLET = 1
NEUMANN = 2

_KIND_NAMES = {"internal": INTERNAL, "dirichlet": DIRICHLET, "neumann": NEUMANN}


class Cell(NamedTuple):
    index: int
    centroid: np.ndarray
    volume: float
    faces: np.ndarray


class Interface(NamedTuple):
    index: int
    cells: tuple[int, int]
    normal: np.ndarray
    measure: float
    centroid: np.ndarray
    kind: int
    value: float


@dataclass(frozen=True)
class Mesh:
    dim: int
    cell_centers: np.ndarray
    cell_volumes: np.ndarray
    face_cells: np.ndarray
    face_normals: np.ndarray
    face_measures: np.ndarray
    face_centers: np.ndarray
    face_kind: np.ndarray
    face_value: np.ndarray
    face_tag: np.ndarray
    shape: tuple[int, int, int] | None = None
    spacing: tuple[float, float, float] | None = None
    lattice_index: np.ndarray | None = None
    _cell_faces: tuple = field(default=None, repr=False, compare=False)

    @property
    def n_cells(self) -> int:
        return len(self.cell_volumes)

    @property
    def n_faces(self) -> int:
        return len(self.face_measures)

    @property
    def internal(self) -> np.ndarray:
        return self.face_cells[:, 1] >= 0

    @property
    def boundary(self) -> np.ndarray:
        return self.face_cells[:, 1] < 0

    def cell_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) listing the interfaces of every cell."""
        if self._cell_faces is None:
            fc = self.face_cells
            rows = np.concatenate([fc[:, 0], fc[self.internal, 1]])
            cols = np.concatenate([np.arange(self.n_faces), np.flatnonzero(self.internal)])
            a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_cells, self.n_faces))
            a.sort_indices()
            object.__setattr__(self, "_cell_faces", (a.indptr.copy(), a.indices.copy()))
        return self._cell_faces

    def cell(self, i: int) -> Cell:
        ptr, idx = self.cell_faces()
        return Cell(i, self.cell_centers[i], float(self.cell_volumes[i]), idx[ptr[i]:ptr[i + 1]])

    def interface(self, e: int) -> Interface:
        k, l = self.face_cells[e]
        return Interface(e, (int(k), int(l)), self.face_normals[e], float(self.face_measures[e]),
                         self.face_centers[e], int(self.face_kind[e]), float(self.face_value[e]))

    def outward_normals(self, side: int) -> np.ndarray:
        """Normals pointing out of the cell on ``side`` (0 for K, 1 for L)."""
        return self.face_normals if side == 0 else -self.face_normals


def build_cartesian_mesh(nx: int, ny: int, nz: int = 1, hx: float = 1.0, hy: float = 1.0,
                         hz: float = 1.0, active_mask: np.ndarray | None = None,
                         dim: int | None = None) -> Mesh:
    """Cartesian mesh of ``nx * ny * nz`` boxes with x the fastest index.

    ``dim=2`` builds a planar mesh (requires ``nz == 1``) of thickness ``hz``:
    cell volumes are ``hx * hy * hz`` and interface measures ``h * hz``.  The
    default is 3D.  ``active_mask`` of shape
    ``(nz, ny, nx)`` or flat in x-fastest order removes cells.
    """
    if min(nx, ny, nz) < 1:
        raise ValueError("grid dimensions must be positive")
    if min(hx, hy, hz) <= 0:
        raise ValueError("grid spacings must be positive")
    dim = 3 if dim is None else dim
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if dim == 2 and nz != 1:
        raise ValueError("a planar mesh needs nz == 1")
    shape = (nx, ny, nz)
    h = np.array([hx, hy, hz], dtype=float)
    if active_mask is None:
        active = np.ones((nz, ny, nx), dtype=bool)
    else:
        active = np.asarray(active_mask, dtype=bool).reshape(nz, ny, nx)
    n = int(active.sum())
    if n == 0:
        raise ValueError("active mask removes every cell")
    lat = np.full((nz, ny, nx), -1, dtype=np.int64)
    lat[active] = np.arange(n)

    kk, jj, ii = np.nonzero(active)
    centers = np.stack([(ii + 0.5) * hx, (jj + 0.5) * hy, (kk + 0.5) * hz], axis=1)
    vol = float(np.prod(h))

    fcells, fnorm, fmeas, fcent = [], [], [], []
    # array axis for x, y, z in the (nz, ny, nx) lattice
    for ax in range(dim):
        arr_ax = 2 - ax
        pad = [(0, 0)] * 3
        pad[arr_ax] = (1, 1)
        p = np.pad(lat, pad, constant_values=-1)
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[arr_ax] = slice(0, -1)
        sl_hi[arr_ax] = slice(1, None)
        lo, hi = p[tuple(sl_lo)], p[tuple(sl_hi)]
        # face lattice positions: index along ax is the plane index 0..n_ax
        has = (lo >= 0) | (hi >= 0)
        pos = np.nonzero(has)
        a, b = lo[pos], hi[pos]
        k_cell = np.where(a >= 0, a, b)
        l_cell = np.where((a >= 0) & (b >= 0), b, -1)
        sign = np.where(a >= 0, 1.0, -1.0)
        nrm = np.zeros((len(a), 3))
        nrm[:, ax] = sign
        plane = [pos[2], pos[1], pos[0]]  # x, y, z lattice coords of the face
        cen = np.empty((len(a), 3))
        for d in range(3):
            cen[:, d] = (plane[d] + (0.0 if d == ax else 0.5)) * h[d]
        others = [d for d in range(3) if d != ax]
        fmeas.append(np.full(len(a), float(np.prod(h[others]))))
        fcells.append(np.stack([k_cell, l_cell], axis=1))
        fnorm.append(nrm)
        fcent.append(cen)

    face_cells = np.concatenate(fcells).astype(np.int64)
    nf = len(face_cells)
    mesh = Mesh(
        dim=dim,
        cell_centers=centers[:, :dim].copy(),
        cell_volumes=np.full(n, vol),
        face_cells=face_cells,
        face_normals=np.concatenate(fnorm)[:, :dim].copy(),
        face_measures=np.concatenate(fmeas),
        face_centers=np.concatenate(fcent)[:, :dim].copy(),
        face_kind=np.where(face_cells[:, 1] >= 0, INTERNAL, NEUMANN).astype(np.int8),
        face_value=np.zeros(nf),
        face_tag=np.where(face_cells[:, 1] >= 0, -1, 0).astype(np.int64),
        shape=shape,
        spacing=(float(hx), float(hy), float(hz)),
        lattice_index=lat.reshape(-1),
    )
    return mesh


@dataclass
class BoundaryRule:
    """Tag interfaces whose centroid satisfies ``predicate``.

    ``value`` is a number or a callable of the centroid array ``(m, dim)``.
    """
    predicate: Callable[[np.ndarray], np.ndarray]
    kind: str
    value: float | Callable[[np.ndarray], np.ndarray] = 0.0
    name: str = ""


_COND = re.compile(r"^\s*([xyz])\s*(<=|>=|==|=|<|>)\s*([-+0-9.eE]+)\s*$")


def parse_predicate(text: str, tol: float = 1e-9) -> Callable[[np.ndarray], np.ndarray]:
    """Parse ``"x<=1000 & y=1000"`` style conjunctions of coordinate tests."""
    conds = []
    for part in text.split("&"):
        m = _COND.match(part)
        if m is None:
            raise ValueError(f"cannot parse boundary predicate {part!r}")
        conds.append((" xyz".index(m.group(1)) - 1, m.group(2), float(m.group(3))))

    def pred(xc: np.ndarray) -> np.ndarray:
        out = np.ones(len(xc), dtype=bool)
        for ax, op, v in conds:
            if ax >= xc.shape[1]:
                raise ValueError("predicate uses an axis the mesh does not have")
            c = xc[:, ax]
            if op in ("=", "=="):
                out &= np.abs(c - v) <= tol * max(1.0, abs(v))
            elif op == "<":
                out &= c < v - tol
            elif op == ">":
                out &= c > v + tol
            elif op == "<=":
                out &= c <= v + tol
            else:
                out &= c >= v - tol
        return out

    return pred


def parse_value(text: str) -> float | Callable[[np.ndarray], np.ndarray]:
    """A number, or ``head:<h>`` meaning ``h`` plus the vertical coordinate."""
    text = text.strip()
    if text.startswith("head:"):
        head = float(text[5:])
        return lambda xc: head + xc[:, -1]
    return float(text)


def classify_boundary(mesh: Mesh, rules: Sequence[BoundaryRule]) -> Mesh:
    """Return a copy of ``mesh`` with boundary kinds and data assigned.

    Rules are applied in order and the first matching rule wins.  Boundary
    interfaces matched by no rule become homogeneous Neumann.
    """
    kind = np.where(mesh.internal, INTERNAL, NEUMANN).astype(np.int8)
    value = np.zeros(mesh.n_faces)
    tag = np.where(mesh.internal, -1, 0).astype(np.int64)
    done = mesh.internal.copy()
    bnd = mesh.boundary
    for r, rule in enumerate(rules):
        k = _KIND_NAMES.get(rule.kind.lower())
        if k is None or k == INTERNAL:
            raise ValueError(f"unknown boundary kind {rule.kind!r}")
        hit = np.asarray(rule.predicate(mesh.face_centers), dtype=bool)
        if np.any(hit & mesh.internal):
            raise ValueError(f"boundary rule {rule.name or r} matches an internal interface")
        sel = hit & bnd & ~done
        if not np.any(sel) and not np.any(hit & bnd):
            warnings.warn(f"boundary rule {rule.name or r} matches no interface", stacklevel=2)
        v = rule.value(mesh.face_centers[sel]) if callable(rule.value) else rule.value
        kind[sel] = k
        value[sel] = v
        tag[sel] = r + 1
        done |= sel
    return replace(mesh, face_kind=kind, face_value=value, face_tag=tag)


def cell_graph(mesh: Mesh) -> sp.csr_matrix:
    """Symmetric adjacency of the cells through internal interfaces."""
    fc = mesh.face_cells[mesh.internal]
    n = mesh.n_cells
    w = np.ones(2 * len(fc))
    a = sp.csr_matrix((w, (np.r_[fc[:, 0], fc[:, 1]], np.r_[fc[:, 1], fc[:, 0]])), shape=(n, n))
    a.data[:] = 1.0
    return a


def is_connected(adj: sp.spmatrix) -> bool:
    from scipy.sparse.csgraph import connected_components
    return connected_components(adj, directed=False)[0] <= 1
