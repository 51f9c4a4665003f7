"""Nonlinear saddle point operator on one level of the hierarchy.

``A(x) = [M(p) sigma + D^T p; D sigma]`` for ``x = [sigma; p]``, with the mass
matrix evaluated at the cell averages ``pwc @ p`` (shifted by the level offset).
Assembly reuses a fixed sparsity pattern; only the data arrays change.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coarsen import Level
from .linsolve import BlockSystem, LocalGroup
from .tpfa import KappaLaw


@dataclass
class _Pattern:
    indptr: np.ndarray
    indices: np.ndarray
    slot: np.ndarray
    shape: tuple

    def build(self, weights) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=weights, minlength=len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


def _pattern(rows, cols, shape) -> _Pattern:
    key = rows.astype(np.int64) * shape[1] + cols
    uk, slot = np.unique(key, return_inverse=True)
    r, c = np.divmod(uk, shape[1])
    indptr = np.searchsorted(r, np.arange(shape[0] + 1))
    return _Pattern(indptr, c.astype(np.int64), slot, shape)


class LevelOperator:
    """Evaluate residuals, Picard systems and Jacobians on a :class:`Level`."""

    def __init__(self, level: Level, law: KappaLaw):
        self.level = level
        self.law = law
        self.n_sigma = level.n_flux
        self.n_p = level.n_p
        self.D = level.D.tocsr()
        self.DT = self.D.T.tocsr()
        self.pwc = level.pwc.tocsr()
        rows, cols, vals, cell = [], [], [], []
        for K, (d, b) in enumerate(zip(level.cell_dofs, level.blocks)):
            r = np.repeat(d, len(d))
            c = np.tile(d, len(d))
            v = b.ravel()
            nz = v != 0
            rows.append(r[nz])
            cols.append(c[nz])
            vals.append(v[nz])
            cell.append(np.full(nz.sum(), K))
        self._r = np.concatenate(rows)
        self._c = np.concatenate(cols)
        self._v = np.concatenate(vals)
        self._cell = np.concatenate(cell)
        n = self.n_sigma
        self._mpat = _pattern(self._r, self._c, (n, n))
        self._npat = _pattern(self._r, self._cell, (n, level.n_cells))
        self._groups = None

    @property
    def size(self) -> int:
        return self.n_sigma + self.n_p

    def split(self, x):
        return x[:self.n_sigma], x[self.n_sigma:]

    def cell_pressure(self, p) -> np.ndarray:
        return self.pwc @ p - self.level.offset

    def kinv(self, p) -> np.ndarray:
        return self.law.inverse(self.cell_pressure(p))

    def mass(self, p) -> sp.csr_matrix:
        return self._mpat.build(self._v * self.kinv(p)[self._cell])

    def n_matrix(self, sigma) -> sp.csr_matrix:
        """``N(sigma)`` with column ``K`` equal to ``W_K^T Mhat_K W_K sigma``."""
        return self._npat.build(self._v * sigma[self._c])

    def apply(self, x) -> np.ndarray:
        s, p = self.split(x)
        w = self._v * self.kinv(p)[self._cell] * s[self._c]
        Ms = np.bincount(self._r, weights=w, minlength=self.n_sigma)
        return np.concatenate([Ms + self.DT @ p, self.D @ s])

    def residual(self, x, b) -> np.ndarray:
        return self.apply(x) - b

    def picard_system(self, x, b) -> BlockSystem:
        """System ``[M(p) D^T; D 0] y = b`` expressed with ``g, f = -b``."""
        _, p = self.split(x)
        M = self.mass(p)
        return BlockSystem(M, self.DT, self.D, -b[:self.n_sigma], -b[self.n_sigma:],
                           symmetric=True, local=lambda: self.local_groups(x, newton=False))

    def jacobian(self, x) -> sp.csr_matrix:
        M, E = self._jac_blocks(x)
        return sp.bmat([[M, E], [self.D, None]], format="csr")

    def _jac_blocks(self, x):
        s, p = self.split(x)
        q = self.cell_pressure(p)
        M = self._mpat.build(self._v * self.law.inverse(q)[self._cell])
        N = self.n_matrix(s)
        E = (N @ sp.diags(self.law.inverse_derivative(q)) @ self.pwc + self.DT).tocsr()
        return M, E

    def newton_system(self, x, b) -> BlockSystem:
        """``J dx = -r`` with ``g, f = r``."""
        r = self.residual(x, b)
        M, E = self._jac_blocks(x)
        return BlockSystem(M, E, self.D, r[:self.n_sigma], r[self.n_sigma:], symmetric=False,
                           local=lambda: self.local_groups(x, newton=True))

    # -- unassembled per-cell blocks for hybridization ---------------------

    def _static_groups(self):
        if self._groups is None:
            lv = self.level
            by = defaultdict(list)
            for K in range(lv.n_cells):
                by[(len(lv.cell_dofs[K]), int(lv.p_ptr[K + 1] - lv.p_ptr[K]))].append(K)
            groups = []
            Dcsr = self.D
            for (n, m), cells in sorted(by.items()):
                cells = np.array(cells)
                dofs = np.array([lv.cell_dofs[K] for K in cells]).reshape(len(cells), n)
                pd = lv.p_ptr[cells][:, None] + np.arange(m)[None, :]
                blk = np.array([lv.blocks[K] for K in cells]).reshape(len(cells), n, n)
                Dl = np.empty((len(cells), m, n))
                for i, K in enumerate(cells):
                    Dl[i] = Dcsr[pd[i]][:, dofs[i]].toarray()
                pw = np.array([self.pwc[K, pd[i]].toarray().ravel() for i, K in enumerate(cells)])
                groups.append((cells, dofs, pd, blk, Dl, pw.reshape(len(cells), m)))
            self._groups = groups
        return self._groups

    def local_groups(self, x, newton: bool) -> list:
        s, p = self.split(x)
        q = self.cell_pressure(p)
        kinv = self.law.inverse(q)
        dk = self.law.inverse_derivative(q) if newton else None
        out = []
        for cells, dofs, pd, blk, Dl, pw in self._static_groups():
            M = blk * kinv[cells][:, None, None]
            E = np.transpose(Dl, (0, 2, 1)).copy()
            if newton:
                v = np.einsum("gab,gb->ga", blk, s[dofs]) * dk[cells][:, None]
                E += v[:, :, None] * pw[:, None, :]
            out.append(LocalGroup(dofs, pd, M, E, Dl))
        return out
