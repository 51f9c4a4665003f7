"""Spectral coarsening of mixed finite-volume levels.

A :class:`Level` is an unassembled description of the saddle point operator
on one level of the hierarchy: every cell owns a block of pressure dofs and a
dense static mass block acting on its local flux dofs.  The actual mass matrix
for a pressure ``p`` is ``sum_K kappa^{-1}(pi_K(p)) W_K^T Mhat_K W_K``.

Coarsening groups cells into aggregates and builds

* ``P_p``: per aggregate the lowest eigenvectors of a local cell-based
  Laplacian, with the first one replaced by the (normalised) constant,
* ``P_sigma``: per coarse interface a trace basis (a PV trace from a local
  flow problem plus optional spectral traces) harmonically extended into
  the two neighbouring aggregates, and bubble functions inside aggregates,
* ``Q_sigma``: a left inverse of ``P_sigma`` with ``D_c Q_sigma = Q_p D``.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .mesh import NEUMANN, Mesh
from .partition import partition as _partition
from .tpfa import half_transmissibilities


@dataclass
class Level:
    index: int
    n_cells: int
    p_ptr: np.ndarray           # pressure dofs of cell K: p_ptr[K]:p_ptr[K+1]
    face_cells: np.ndarray      # (n_faces, 2); second entry -1 on the boundary
    face_tag: np.ndarray        # boundary tag, -1 on internal faces
    face_ptr: np.ndarray        # flux dofs of face F: face_ptr[F]:face_ptr[F+1]
    bubble_ptr: np.ndarray      # bubble dofs of cell K
    D: sp.csr_matrix            # (n_p, n_flux)
    cell_dofs: list             # local flux dofs per cell, ordered as the blocks
    blocks: list                # static mass blocks for kappa == 1
    pwc: sp.csr_matrix          # cell averages of the fine interpolant, (n_cells, n_p)
    volumes: np.ndarray
    offset: np.ndarray          # per-cell shift of the nonlinearity argument
    ones: np.ndarray            # level representation of the fine constant
    fine_faces: np.ndarray | None = None  # level 0: mesh interface of each flux dof

    @property
    def n_p(self) -> int:
        return int(self.p_ptr[-1])

    @property
    def n_flux(self) -> int:
        return int(self.bubble_ptr[-1])

    @property
    def n_faces(self) -> int:
        return len(self.face_cells)

    def pdofs(self, K: int) -> np.ndarray:
        return np.arange(self.p_ptr[K], self.p_ptr[K + 1])

    def graph(self) -> sp.csr_matrix:
        fc = self.face_cells[self.face_cells[:, 1] >= 0]
        n = self.n_cells
        a = sp.csr_matrix((np.ones(2 * len(fc)), (np.r_[fc[:, 0], fc[:, 1]], np.r_[fc[:, 1], fc[:, 0]])),
                          shape=(n, n))
        a.data[:] = 1.0
        return a

    def dof_cells(self) -> np.ndarray:
        """(n_flux, 2) cells touching each flux dof; bubbles give (K, -1)."""
        nf = self.face_ptr[-1]
        out = np.full((self.n_flux, 2), -1, dtype=np.int64)
        cnt = np.diff(self.face_ptr)
        out[:nf] = np.repeat(self.face_cells, cnt, axis=0)
        bc = np.diff(self.bubble_ptr)
        out[nf:, 0] = np.repeat(np.arange(self.n_cells), bc)
        return out

    def dof_kind(self) -> np.ndarray:
        """0 internal face dof, 1 boundary face dof, 2 bubble."""
        nf = self.face_ptr[-1]
        out = np.full(self.n_flux, 2, dtype=np.int8)
        cnt = np.diff(self.face_ptr)
        out[:nf] = np.repeat(np.where(self.face_cells[:, 1] >= 0, 0, 1), cnt)
        return out

    def assemble_static(self, cell_scale=None) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for K, (d, b) in enumerate(zip(self.cell_dofs, self.blocks)):
            s = 1.0 if cell_scale is None else cell_scale[K]
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
            vals.append(s * b.ravel())
        n = self.n_flux
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


@dataclass
class Transfer:
    labels: np.ndarray
    P_p: sp.csr_matrix
    P_sigma: sp.csr_matrix
    Q_sigma: sp.csr_matrix

    @property
    def Q_p(self) -> sp.csr_matrix:
        return self.P_p.T.tocsr()

    def prolong(self, sigma, p):
        return self.P_sigma @ sigma, self.P_p @ p

    def project(self, sigma, p):
        return self.Q_sigma @ sigma, self.P_p.T @ p

    def restrict(self, r_sigma, r_p):
        return self.P_sigma.T @ r_sigma, self.P_p.T @ r_p


@dataclass
class HierarchyParams:
    n_levels: int = 3
    factors: tuple = (16, 8)
    m_A: int = 4
    m_f: int = 1
    seed: int = 0
    svd_tol: float = 1e-8
    prune_tol: float = 1e-13

    def __post_init__(self):
        if self.n_levels < 1:
            raise ValueError("n_levels must be at least 1")
        if self.m_A < 1 or self.m_f < 1:
            raise ValueError("m_A and m_f must be positive")
        f = tuple(self.factors) if np.iterable(self.factors) else (self.factors,)
        if self.n_levels > 1 and len(f) == 0:
            raise ValueError("coarsening factors missing")
        if any(x <= 1 for x in f):
            raise ValueError("coarsening factors must exceed 1")
        self.factors = f

    def factor(self, l: int) -> float:
        return self.factors[min(l, len(self.factors) - 1)]


@dataclass
class Hierarchy:
    levels: list
    transfers: list
    params: HierarchyParams
    setup_time: float = 0.0
    partitions: list = field(default_factory=list)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def chain_p(self, l: int) -> sp.csr_matrix:
        """Pressure prolongation from level ``l`` to level 0."""
        P = sp.identity(self.levels[0].n_p, format="csr")
        for t in self.transfers[:l]:
            P = P @ t.P_p
        return P.tocsr()

    def chain_sigma(self, l: int) -> sp.csr_matrix:
        P = sp.identity(self.levels[0].n_flux, format="csr")
        for t in self.transfers[:l]:
            P = P @ t.P_sigma
        return P.tocsr()


def fine_level(mesh: Mesh, K0, offset=None) -> Level:
    """Level 0 from a mesh; Neumann interfaces carry no flux unknown."""
    T = half_transmissibilities(mesh, K0)
    keep = np.flatnonzero(mesh.face_kind != NEUMANN)
    fc = mesh.face_cells[keep]
    n = mesh.n_cells
    nf = len(keep)
    D = sp.csr_matrix((np.r_[-np.ones(nf), np.ones(np.sum(fc[:, 1] >= 0))],
                       (np.r_[fc[:, 0], fc[fc[:, 1] >= 0, 1]],
                        np.r_[np.arange(nf), np.flatnonzero(fc[:, 1] >= 0)])), shape=(n, nf))
    # local dofs of each cell, sorted, with diag(1/T)
    rows = np.r_[fc[:, 0], fc[fc[:, 1] >= 0, 1]]
    dofs = np.r_[np.arange(nf), np.flatnonzero(fc[:, 1] >= 0)]
    tv = np.r_[T[keep, 0], T[keep[fc[:, 1] >= 0], 1]]
    order = np.lexsort((dofs, rows))
    rows, dofs, tv = rows[order], dofs[order], tv[order]
    ptr = np.searchsorted(rows, np.arange(n + 1))
    cell_dofs = [dofs[ptr[k]:ptr[k + 1]] for k in range(n)]
    blocks = [np.diag(1.0 / tv[ptr[k]:ptr[k + 1]]) for k in range(n)]
    tag = np.where(fc[:, 1] >= 0, -1, mesh.face_tag[keep])
    return Level(
        index=0, n_cells=n, p_ptr=np.arange(n + 1), face_cells=fc.copy(), face_tag=tag,
        face_ptr=np.arange(nf + 1), bubble_ptr=np.full(n + 1, nf), D=D, cell_dofs=cell_dofs,
        blocks=blocks, pwc=sp.identity(n, format="csr"), volumes=mesh.cell_volumes.copy(),
        offset=np.zeros(n) if offset is None else np.asarray(offset, dtype=float).copy(),
        ones=np.ones(n), fine_faces=keep,
    )


class _Local:
    """Scratch map from global flux dofs to local positions."""

    def __init__(self, level: Level):
        self.level = level
        self.loc = np.full(level.n_flux, -1, dtype=np.int64)
        self.dof_cells = level.dof_cells()
        self.kind = level.dof_kind()
        self.cell_dof_sets = level.cell_dofs

    def interior(self, cells: np.ndarray, in_set: np.ndarray) -> np.ndarray:
        """Flux dofs with every touching cell inside the marked set (no boundary dofs)."""
        cand = np.unique(np.concatenate([self.cell_dof_sets[c] for c in cells]))
        dc = self.dof_cells[cand]
        k = self.kind[cand]
        ok = (k == 2) | ((k == 0) & in_set[dc[:, 1]] & in_set[dc[:, 0]])
        return cand[ok]

    def mass(self, cells, dofs: np.ndarray) -> np.ndarray:
        lv = self.level
        loc = self.loc
        loc[dofs] = np.arange(len(dofs))
        M = np.zeros((len(dofs), len(dofs)))
        for c in cells:
            d = lv.cell_dofs[c]
            ld = loc[d]
            s = ld >= 0
            if not np.any(s):
                continue
            if np.all(s):
                M[np.ix_(ld, ld)] += lv.blocks[c]
            else:
                M[np.ix_(ld[s], ld[s])] += lv.blocks[c][np.ix_(s, s)]
        loc[dofs] = -1
        return M


def _pdofs(level: Level, cells) -> np.ndarray:
    return np.concatenate([np.arange(level.p_ptr[c], level.p_ptr[c + 1]) for c in cells])


def _dense_D(level: Level, prow: np.ndarray, dofs: np.ndarray) -> np.ndarray:
    return level.D[prow][:, dofs].toarray()


def saddle_solve(M, D, g, f, kernel=None):
    """Solve ``[M D^T; D 0][s; p] = [g; f]`` with dense SPD ``M``.

    ``kernel`` is a known null vector of ``D^T`` used to regularise the
    reduced operator; right hand sides must then be compatible.
    """
    g = np.asarray(g, dtype=float)
    f = np.asarray(f, dtype=float)
    if M.shape[0] == 0:
        return np.zeros((0,) + f.shape[1:]), np.zeros_like(f)
    cho = sla.cho_factor(M)
    MiDt = sla.cho_solve(cho, D.T)
    L = D @ MiDt
    rhs = D @ sla.cho_solve(cho, g) - f
    if kernel is not None:
        u = kernel / np.linalg.norm(kernel)
        L = L + (np.trace(L) / max(1, L.shape[0])) * np.outer(u, u)
    L = 0.5 * (L + L.T)
    p = sla.solve(L, rhs, assume_a="pos")
    s = sla.cho_solve(cho, g - D.T @ p)
    return s, p


def _components(items: list, linked) -> list:
    """Connected components of a small item list under a pairwise predicate."""
    n = len(items)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if find(i) != find(j) and linked(items[i], items[j]):
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(items[i])
    return list(groups.values())


def coarse_faces(level: Level, labels: np.ndarray) -> tuple[list, list]:
    """Group level faces into coarse faces.

    Faces between the same pair of aggregates (or of one aggregate with the
    same boundary tag) are split into connected pieces, where two faces are
    linked when they share a cell or their cells are neighbours on both sides.
    Returns a list of ``(key, face_ids)`` and the interior face ids.
    """
    fc = level.face_cells
    A = labels[fc[:, 0]]
    B = np.where(fc[:, 1] >= 0, labels[np.maximum(fc[:, 1], 0)], -1)
    adj = level.graph().tolil().rows

    def near(a, b):
        return a == b or b in adj[a]

    groups: dict = {}
    interior = []
    for e in range(len(fc)):
        if B[e] < 0:
            key = (int(A[e]), -1, int(level.face_tag[e]))
        elif A[e] == B[e]:
            interior.append(e)
            continue
        else:
            key = (int(min(A[e], B[e])), int(max(A[e], B[e])), -1)
        groups.setdefault(key, []).append(e)

    out = []
    for key in sorted(groups):
        faces = groups[key]
        if len(faces) == 1:
            out.append((key, np.array(faces)))
            continue
        K = key[0]

        def linked(e1, e2, K=K):
            a1, b1 = fc[e1]
            a2, b2 = fc[e2]
            if b1 < 0:
                return near(a1, a2)
            # orient so that the first cell lies in aggregate K
            if labels[a1] != K:
                a1, b1 = b1, a1
            if labels[a2] != K:
                a2, b2 = b2, a2
            return a1 == a2 or b1 == b2 or (near(a1, a2) and near(b1, b2))

        for comp in _components(faces, linked):
            out.append((key, np.array(sorted(comp))))
    return out, np.array(interior, dtype=np.int64)


def _face_dofs(level: Level, faces: np.ndarray) -> np.ndarray:
    return np.concatenate([np.arange(level.face_ptr[e], level.face_ptr[e + 1]) for e in faces])


def _orth_basis(V: np.ndarray, tol: float, limit: int) -> np.ndarray:
    if V.shape[1] == 0 or limit <= 0:
        return np.zeros((V.shape[0], 0))
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        return np.zeros((V.shape[0], 0))
    k = int(np.sum(s > tol * s[0]))
    return U[:, :min(k, limit)]


def coarsen(level: Level, labels: np.ndarray, m_A: int, m_f: int = 1,
            svd_tol: float = 1e-8, prune_tol: float = 1e-13) -> tuple[Level, Transfer]:
    """Build the next level from an aggregation ``labels`` of ``level``'s cells."""
    labels = np.asarray(labels, dtype=np.int64)
    n_agg = int(labels.max()) + 1
    members = [[] for _ in range(n_agg)]
    for c in np.argsort(labels, kind="stable"):
        members[labels[c]].append(int(c))
    members = [np.array(m, dtype=np.int64) for m in members]
    if any(len(m) == 0 for m in members):
        raise ValueError("empty aggregate")
    ws = _Local(level)
    adj = level.graph()
    ones = level.ones
    in_set = np.zeros(level.n_cells + 1, dtype=bool)  # last slot absorbs -1 lookups

    cfaces, interior_faces = coarse_faces(level, labels)
    agg_faces = [[] for _ in range(n_agg)]
    for j, (key, faces) in enumerate(cfaces):
        agg_faces[key[0]].append(j)
        if key[1] >= 0:
            agg_faces[key[1]].append(j)
    cf_dofs = [_face_dofs(level, faces) for _, faces in cfaces]

    n_trunc_a = n_trunc_f = 0
    # --- pressure basis per aggregate ---------------------------------
    P_blocks, qpv, pdofs_agg, traces_src = [], [], [], []
    for K in range(n_agg):
        cells = members[K]
        pd = _pdofs(level, cells)
        pdofs_agg.append(pd)
        one = ones[pd]
        q1 = one / np.linalg.norm(one)
        qpv.append(q1)
        nbhd = np.unique(np.concatenate([cells, adj[cells].indices]))
        in_set[nbhd] = True
        dofs = ws.interior(nbhd, in_set)
        in_set[nbhd] = False
        want = min(m_A, len(pd))
        src = None
        if want > 1 and len(dofs) > 0:
            pn = _pdofs(level, nbhd)
            Mn = ws.mass(nbhd, dofs)
            Dn = _dense_D(level, pn, dofs)
            cho = sla.cho_factor(Mn)
            MiDt = sla.cho_solve(cho, Dn.T)
            L = Dn @ MiDt
            L = 0.5 * (L + L.T)
            _, vec = sla.eigh(L, subset_by_index=[0, min(m_A, len(pn)) - 1])
            pos = np.searchsorted(pn, pd)
            R = vec[pos]
            R = R - np.outer(q1, q1 @ R)
            rest = _orth_basis(R, svd_tol, want - 1)
            B = np.column_stack([q1, rest])
            if m_f > 1:
                src = (dofs, MiDt @ vec)
        else:
            B = q1[:, None]
        if B.shape[1] < m_A:
            n_trunc_a += 1
        P_blocks.append(B)
        traces_src.append(src)

    # --- interface traces ----------------------------------------------
    face_basis = []      # per coarse face: (t1, U, w) with w the PV functional row
    for j, (key, faces) in enumerate(cfaces):
        K, L = key[0], key[1]
        F = cf_dofs[j]
        cells = members[K] if L < 0 else np.concatenate([members[K], members[L]])
        in_set[cells] = True
        dofs = ws.interior(cells, in_set)
        in_set[cells] = False
        pK = pdofs_agg[K]
        oK = ones[pK]
        if L < 0:
            dofs = np.union1d(dofs, F)
            pu = pK
            rhs = -oK / (oK @ oK)
            kern = None
        else:
            pL = pdofs_agg[L]
            oL = ones[pL]
            pu = np.concatenate([pK, pL])
            rhs = np.concatenate([-oK / (oK @ oK), oL / (oL @ oL)])
            kern = ones[pu]
        Mu = ws.mass(cells, dofs)
        Du = _dense_D(level, pu, dofs)
        s, _ = saddle_solve(Mu, Du, np.zeros(len(dofs)), rhs, kernel=kern)
        t1 = s[np.searchsorted(dofs, F)]
        DKF = _dense_D(level, pK, F)
        psi = qpv[K] @ DKF
        nrm = np.linalg.norm(t1)
        if nrm < 1e-14 or abs(psi @ t1) < 1e-14 * nrm * max(1.0, np.linalg.norm(psi)):
            t1 = -psi.copy()
            nrm = np.linalg.norm(t1)
        t1 = t1 / nrm
        w = psi / (psi @ t1)
        U = np.zeros((len(F), 0))
        if m_f > 1 and L >= 0:
            cols = []
            for A in (K, L):
                src = traces_src[A]
                if src is None:
                    continue
                sd, Phi = src
                pos = np.searchsorted(sd, F)
                pos = np.minimum(pos, len(sd) - 1)
                if not np.all(sd[pos] == F):
                    continue
                cols.append(Phi[pos])
            if cols:
                V = np.column_stack(cols)
                V = V - np.outer(t1, w @ V)
                nv = np.linalg.norm(V, axis=0)
                V = V[:, nv > 1e-12 * max(1.0, nv.max(initial=0.0))]
                V = V / np.linalg.norm(V, axis=0)
                U = _orth_basis(V, svd_tol, m_f - 1)
            if U.shape[1] < m_f - 1:
                n_trunc_f += 1
        face_basis.append((t1, U, w))

    if n_trunc_a:
        warnings.warn(f"level {level.index + 1}: {n_trunc_a} of {n_agg} aggregates have fewer than "
                      f"{m_A} pressure vectors", stacklevel=2)
    if n_trunc_f:
        warnings.warn(f"level {level.index + 1}: {n_trunc_f} coarse faces have fewer than {m_f} traces",
                      stacklevel=2)

    # --- coarse numbering ----------------------------------------------
    nface_c = len(cfaces)
    fsz = np.array([1 + fb[1].shape[1] for fb in face_basis], dtype=np.int64)
    face_ptr_c = np.r_[0, np.cumsum(fsz)]
    psz = np.array([b.shape[1] for b in P_blocks], dtype=np.int64)
    p_ptr_c = np.r_[0, np.cumsum(psz)]
    bub_sz = psz - 1
    bubble_ptr_c = face_ptr_c[-1] + np.r_[0, np.cumsum(bub_sz)]
    n_flux_c = int(bubble_ptr_c[-1])

    Ps_r, Ps_c, Ps_v = [], [], []
    Qs_r, Qs_c, Qs_v = [], [], []

    def put(store, r, c, v):
        store[0].append(np.asarray(r, dtype=np.int64).ravel())
        store[1].append(np.asarray(c, dtype=np.int64).ravel())
        store[2].append(np.asarray(v, dtype=float).ravel())

    PS = (Ps_r, Ps_c, Ps_v)
    QS = (Qs_r, Qs_c, Qs_v)
    for j in range(nface_c):
        F = cf_dofs[j]
        t1, U, w = face_basis[j]
        T = np.column_stack([t1, U])
        cdofs = np.arange(face_ptr_c[j], face_ptr_c[j + 1])
        put(PS, np.repeat(F, len(cdofs)), np.tile(cdofs, len(F)), T)
        Qrows = np.vstack([w, U.T - np.outer(U.T @ t1, w)])
        put(QS, np.repeat(cdofs, len(F)), np.tile(F, len(cdofs)), Qrows)

    coarse_cell_dofs, coarse_blocks = [], []
    for K in range(n_agg):
        cells = members[K]
        pK = pdofs_agg[K]
        in_set[cells] = True
        idofs = ws.interior(cells, in_set)
        in_set[cells] = False
        myfaces = agg_faces[K]
        Fall = np.concatenate([cf_dofs[j] for j in myfaces]) if myfaces else np.zeros(0, dtype=np.int64)
        loc_dofs = np.concatenate([idofs, Fall])
        Mloc = ws.mass(cells, loc_dofs)
        Dloc = _dense_D(level, pK, loc_dofs)
        ni = len(idofs)
        Mii, MiF = Mloc[:ni, :ni], Mloc[:ni, ni:]
        Di, DF = Dloc[:, :ni], Dloc[:, ni:]
        q1 = qpv[K]
        B = P_blocks[K]
        # right hand sides: face extensions, then bubbles
        Tcols = []
        off = 0
        for j in myfaces:
            t1, U, _ = face_basis[j]
            T = np.column_stack([t1, U])
            nF = T.shape[0]
            Tfull = np.zeros((len(Fall), T.shape[1]))
            Tfull[off:off + nF] = T
            off += nF
            Tcols.append(Tfull)
        Tall = np.hstack(Tcols) if Tcols else np.zeros((len(Fall), 0))
        Gs = -MiF @ Tall
        DT = DF @ Tall
        Fs = np.outer(q1, q1 @ DT) - DT
        nb = B.shape[1] - 1
        G = np.hstack([Gs, np.zeros((ni, nb))])
        Fr = np.hstack([Fs, B[:, 1:]])
        if ni > 0:
            S, _ = saddle_solve(Mii, Di, G, Fr, kernel=ones[pK])
        else:
            S = np.zeros((0, G.shape[1]))
        # P_sigma entries inside K
        col = 0
        ccols = []
        for j in myfaces:
            cdofs = np.arange(face_ptr_c[j], face_ptr_c[j + 1])
            ccols.append(cdofs)
            if ni:
                put(PS, np.repeat(idofs, len(cdofs)), np.tile(cdofs, ni), S[:, col:col + len(cdofs)])
            col += len(cdofs)
        bdofs = np.arange(bubble_ptr_c[K], bubble_ptr_c[K + 1])
        if nb and ni:
            put(PS, np.repeat(idofs, nb), np.tile(bdofs, ni), S[:, col:col + nb])
        if nb:
            Qb = (sp.csr_matrix(B[:, 1:].T) @ level.D[pK]).tocoo()
            put(QS, bdofs[Qb.row], Qb.col, Qb.data)
        # coarse static block
        cl = np.concatenate(ccols + [bdofs]) if ccols else bdofs
        PK = np.zeros((len(loc_dofs), len(cl)))
        if ni:
            PK[:ni, :S.shape[1]] = S
        PK[ni:, :Tall.shape[1]] = Tall
        blk = PK.T @ Mloc @ PK
        coarse_cell_dofs.append(cl.astype(np.int64))
        coarse_blocks.append(0.5 * (blk + blk.T))

    n_fine = level.n_flux
    P_sigma = sp.csr_matrix((np.concatenate(Ps_v), (np.concatenate(Ps_r), np.concatenate(Ps_c))),
                            shape=(n_fine, n_flux_c))
    Q_sigma = sp.csr_matrix((np.concatenate(Qs_v), (np.concatenate(Qs_r), np.concatenate(Qs_c))),
                            shape=(n_flux_c, n_fine))
    pr, pc, pv = [], [], []
    for K in range(n_agg):
        B = P_blocks[K]
        pr.append(np.repeat(pdofs_agg[K], B.shape[1]))
        pc.append(np.tile(np.arange(p_ptr_c[K], p_ptr_c[K + 1]), B.shape[0]))
        pv.append(B.ravel())
    P_p = sp.csr_matrix((np.concatenate(pv), (np.concatenate(pr), np.concatenate(pc))),
                        shape=(level.n_p, int(p_ptr_c[-1])))
    Dc = (P_p.T @ level.D @ P_sigma).tocsr()
    if Dc.nnz:
        Dc.data[np.abs(Dc.data) < prune_tol * np.abs(Dc.data).max()] = 0.0
        Dc.eliminate_zeros()

    agg = sp.csr_matrix((np.ones(level.n_cells), (labels, np.arange(level.n_cells))),
                        shape=(n_agg, level.n_cells))
    vol = agg @ level.volumes
    pwc = (sp.diags(1.0 / vol) @ agg @ sp.diags(level.volumes) @ level.pwc @ P_p).tocsr()
    offset = (agg @ (level.volumes * level.offset)) / vol
    fcells = np.array([[k[0], k[1]] for k, _ in cfaces], dtype=np.int64).reshape(-1, 2)
    ftag = np.array([k[2] for k, _ in cfaces], dtype=np.int64)
    coarse = Level(
        index=level.index + 1, n_cells=n_agg, p_ptr=p_ptr_c, face_cells=fcells, face_tag=ftag,
        face_ptr=face_ptr_c, bubble_ptr=bubble_ptr_c, D=Dc, cell_dofs=coarse_cell_dofs,
        blocks=coarse_blocks, pwc=pwc, volumes=vol, offset=offset, ones=P_p.T @ ones,
    )
    return coarse, Transfer(labels, P_p, P_sigma, Q_sigma)


def build_hierarchy(mesh: Mesh, K0, params: HierarchyParams | None = None, offset=None,
                    level0: Level | None = None) -> Hierarchy:
    """Partition and coarsen recursively until ``params.n_levels`` levels exist."""
    params = params or HierarchyParams()
    t0 = time.perf_counter()
    lv = level0 if level0 is not None else fine_level(mesh, K0, offset)
    levels, transfers, parts = [lv], [], []
    for l in range(params.n_levels - 1):
        if lv.n_cells == 1:
            warnings.warn("coarsest level reached a single cell; stopping early", stacklevel=2)
            break
        target = max(1, math.ceil(lv.n_cells / params.factor(l)))
        part = _partition(lv.graph(), target, seed=params.seed + l)
        parts.append(part)
        lv, tr = coarsen(lv, part.labels, params.m_A, params.m_f, params.svd_tol, params.prune_tol)
        levels.append(lv)
        transfers.append(tr)
    return Hierarchy(levels, transfers, params, time.perf_counter() - t0, parts)
