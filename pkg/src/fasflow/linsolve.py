"""Linear solvers for saddle point systems ``[M E; D 0] [s; p] = -[g; f]``.

Two routes are provided:

* block preconditioned Krylov (MINRES when ``E = D^T``, GMRES otherwise) with
  the preconditioner ``diag(diag(M)^-1, S^-1)``, ``S = D diag(M)^-1 E``,
* hybridization: fluxes are duplicated per cell, continuity is enforced by
  Lagrange multipliers and the multiplier system is solved by CG or GMRES.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass
class LocalGroup:
    """Per-cell blocks of equal size stacked along the first axis."""
    dofs: np.ndarray    # (G, n) global flux dofs
    pdofs: np.ndarray   # (G, m) global pressure dofs
    M: np.ndarray       # (G, n, n)
    E: np.ndarray       # (G, n, m)
    D: np.ndarray       # (G, m, n)


@dataclass
class BlockSystem:
    M: sp.csr_matrix
    E: sp.csr_matrix
    D: sp.csr_matrix
    g: np.ndarray
    f: np.ndarray
    symmetric: bool = True
    local: list | Callable | None = None

    @property
    def n_sigma(self) -> int:
        return self.M.shape[0]

    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.M, self.E], [self.D, None]], format="csr")

    def rhs(self) -> np.ndarray:
        return -np.concatenate([self.g, self.f])

    def local_groups(self) -> list:
        if self.local is None:
            raise ValueError("system carries no per-cell blocks")
        if callable(self.local):
            self.local = self.local()
        return self.local


@dataclass
class KrylovConfig:
    rtol: float = 1e-10
    restart: int = 50
    maxiter: int = 500
    max_restarts: int = 3


@dataclass
class LinearStats:
    method: str
    iterations: int = 0
    residual: float = 0.0
    fallback: bool = False
    extra: dict = field(default_factory=dict)


class _Counter:
    def __init__(self):
        self.n = 0

    def __call__(self, *_):
        self.n += 1


def _krylov(A, b, x0, P, symmetric: bool, cfg: KrylovConfig, stats: LinearStats, rtol: float):
    nb = np.linalg.norm(b)
    x = x0
    for _ in range(cfg.max_restarts + 1):
        cnt = _Counter()
        if symmetric:
            x, _ = spla.minres(A, b, x0=x, rtol=rtol, maxiter=cfg.maxiter, M=P, callback=cnt)
        else:
            x, _ = spla.gmres(A, b, x0=x, rtol=rtol, atol=0.0, restart=cfg.restart,
                              maxiter=max(1, cfg.maxiter // cfg.restart), M=P, callback=cnt,
                              callback_type="pr_norm")
        stats.iterations += cnt.n
        res = np.linalg.norm(b - A @ x)
        stats.residual = res / nb
        if np.isfinite(res) and res <= cfg.rtol * nb:
            return x
    return None


def _direct(A, b, stats: LinearStats):
    stats.fallback = True
    x = spla.spsolve(A.tocsc(), b)
    stats.residual = np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300)
    return x


def solve_block(system: BlockSystem, cfg: KrylovConfig | None = None) -> tuple[np.ndarray, LinearStats]:
    """Block-preconditioned MINRES/GMRES; falls back to a sparse direct solve."""
    cfg = cfg or KrylovConfig()
    stats = LinearStats("minres" if system.symmetric else "gmres")
    A = system.matrix()
    b = system.rhs()
    n = system.n_sigma
    if not np.any(b):
        return np.zeros_like(b), stats
    dM = system.M.diagonal()
    if np.any(dM <= 0) or not np.all(np.isfinite(dM)):
        return _direct(A, b, stats), stats
    S = (system.D @ sp.diags(1.0 / dM) @ system.E).tocsc()
    try:
        lu = spla.splu(S)
    except RuntimeError:
        return _direct(A, b, stats), stats

    def prec(r):
        return np.concatenate([r[:n] / dM, lu.solve(r[n:])])

    P = spla.LinearOperator(A.shape, matvec=prec, dtype=float)
    with np.errstate(all="ignore"):
        x = _krylov(A, b, np.zeros_like(b), P, system.symmetric, cfg, stats, cfg.rtol)
    if x is None:
        x = _direct(A, b, stats)
    return x, stats


@dataclass
class HybridSystem:
    H: sp.csr_matrix
    xi: np.ndarray
    symmetric: bool
    groups: list
    inverses: list
    hat_offsets: list
    local_rhs: list
    C: sp.csr_matrix
    n_sigma: int
    n_p: int
    counts: np.ndarray

    def back_substitute(self, lam) -> np.ndarray:
        Ct_lam = self.C.T @ lam
        sigma = np.zeros(self.n_sigma)
        p = np.zeros(self.n_p)
        for grp, Ainv, off, rhs in zip(self.groups, self.inverses, self.hat_offsets, self.local_rhs):
            G, n = grp.dofs.shape
            r = rhs.copy()
            r[:, :n] += Ct_lam[off:off + G * n].reshape(G, n)
            y = -np.einsum("gij,gj->gi", Ainv, r)
            np.add.at(sigma, grp.dofs.ravel(), y[:, :n].ravel())
            p[grp.pdofs.ravel()] = y[:, n:].ravel()
        return np.concatenate([sigma / self.counts, p])


def hybridize(system: BlockSystem, local: list | None = None) -> HybridSystem:
    """Form the multiplier system ``H lambda = xi`` from per-cell blocks."""
    groups = local if local is not None else system.local_groups()
    n_sigma, n_p = system.n_sigma, system.D.shape[0]
    all_dofs = np.concatenate([g.dofs.ravel() for g in groups])
    counts = np.bincount(all_dofs, minlength=n_sigma).astype(float)
    if np.any(counts == 0):
        raise ValueError("some flux dofs belong to no cell")
    # the first copy of each dof carries the global load
    first = np.zeros(len(all_dofs), dtype=bool)
    _, idx = np.unique(all_dofs, return_index=True)
    first[idx] = True
    order = np.argsort(all_dofs, kind="stable")
    sd = all_dofs[order]
    pair = np.flatnonzero(sd[1:] == sd[:-1])
    nl = len(pair)
    C = sp.csr_matrix((np.r_[np.ones(nl), -np.ones(nl)],
                       (np.r_[np.arange(nl), np.arange(nl)], np.r_[order[pair], order[pair + 1]])),
                      shape=(nl, len(all_dofs)))
    inverses, offsets, rhss = [], [], []
    br, bc, bv = [], [], []
    off = 0
    for grp in groups:
        G, n = grp.dofs.shape
        m = grp.pdofs.shape[1]
        A = np.zeros((G, n + m, n + m))
        A[:, :n, :n] = grp.M
        A[:, :n, n:] = grp.E
        A[:, n:, :n] = grp.D
        Ainv = np.linalg.inv(A)
        inverses.append(Ainv)
        offsets.append(off)
        ghat = np.where(first[off:off + G * n], system.g[grp.dofs.ravel()], 0.0).reshape(G, n)
        rhss.append(np.concatenate([ghat, system.f[grp.pdofs]], axis=1))
        base = off + np.arange(G)[:, None] * n + np.arange(n)[None, :]
        br.append(np.repeat(base, n, axis=1).ravel())
        bc.append(np.tile(base, (1, n)).ravel())
        bv.append(Ainv[:, :n, :n].ravel())
        off += G * n
    B = sp.csr_matrix((np.concatenate(bv), (np.concatenate(br), np.concatenate(bc))), shape=(off, off))
    H = (C @ B @ C.T).tocsr()
    u = np.concatenate([np.einsum("gij,gj->gi", Ai, r)[:, :g.dofs.shape[1]].ravel()
                        for Ai, r, g in zip(inverses, rhss, groups)]) if groups else np.zeros(0)
    xi = -(C @ u)
    return HybridSystem(H, xi, system.symmetric, groups, inverses, offsets, rhss, C, n_sigma, n_p, counts)


def solve_hybrid(system: BlockSystem, cfg: KrylovConfig | None = None) -> tuple[np.ndarray, LinearStats]:
    cfg = cfg or KrylovConfig()
    hs = hybridize(system)
    stats = LinearStats("hybrid-cg" if hs.symmetric else "hybrid-gmres")
    nl = hs.H.shape[0]
    if nl == 0 or not np.any(hs.xi):
        lam = np.zeros(nl)
    else:
        lu = spla.splu(hs.H.tocsc())
        P = spla.LinearOperator(hs.H.shape, matvec=lu.solve, dtype=float)
        nb = np.linalg.norm(hs.xi)
        lam = np.zeros(nl)
        ok = False
        for _ in range(cfg.max_restarts + 1):
            cnt = _Counter()
            if hs.symmetric:
                lam, _ = spla.cg(hs.H, hs.xi, x0=lam, rtol=cfg.rtol, atol=0.0, maxiter=cfg.maxiter, M=P,
                                 callback=cnt)
            else:
                lam, _ = spla.gmres(hs.H, hs.xi, x0=lam, rtol=cfg.rtol, atol=0.0, restart=cfg.restart,
                                    maxiter=max(1, cfg.maxiter // cfg.restart), M=P, callback=cnt,
                                    callback_type="pr_norm")
            stats.iterations += cnt.n
            res = np.linalg.norm(hs.xi - hs.H @ lam)
            if np.isfinite(res) and res <= cfg.rtol * nb:
                ok = True
                break
        if not ok:
            stats.fallback = True
            lam = lu.solve(hs.xi)
    x = hs.back_substitute(lam)
    A = system.matrix()
    b = system.rhs()
    stats.residual = np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300)
    return x, stats


def solve(system: BlockSystem, method: str = "block", cfg: KrylovConfig | None = None):
    """Dispatch to ``"block"``, ``"hybrid"`` or ``"direct"``."""
    if method == "block":
        return solve_block(system, cfg)
    if method == "hybrid":
        return solve_hybrid(system, cfg)
    if method == "direct":
        stats = LinearStats("direct")
        A = system.matrix()
        return _direct(A, system.rhs(), stats), stats
    raise ValueError(f"unknown linear solver {method!r}")
