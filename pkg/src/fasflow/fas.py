"""Nonlinear solvers: Newton, Picard, FAS V-cycles and a cascadic variant.

All solvers share the same smoothing step (one globalised Newton or Picard
update) and the same backtracking line search.  Residual norms are plain
Euclidean norms of ``A(x) - b``.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .coarsen import Hierarchy, HierarchyParams, build_hierarchy
from .linsolve import KrylovConfig
from .linsolve import solve as linear_solve
from .operator import LevelOperator
from .problem import Problem

log = logging.getLogger(__name__)

METHODS = ("single_newton", "single_picard", "fas_newton", "fas_picard", "cascadic")
ALIASES = {"newton": "single_newton", "picard": "single_picard"}


@dataclass
class SolverConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_iters: int = 50
    coarsest_steps: int = 10
    pre_smooth: int = 1
    post_smooth: int = 1
    max_halvings: int | None = None       # None: take the problem default
    theta: float = 0.9
    pressure_cap: float | None = None     # None: take the problem default; <= 0 disables
    linear: KrylovConfig = field(default_factory=KrylovConfig)
    fine_linear: str = "block"
    coarse_linear: str = "hybrid"
    hierarchy: HierarchyParams = field(default_factory=HierarchyParams)


@dataclass
class SolveReport:
    method: str
    converged: bool = False
    iterations: int = 0
    residuals: list = field(default_factory=list)
    initial_residual: float = float("nan")
    early_presmooth: bool = False
    wall_time: float = 0.0
    setup_time: float = 0.0
    smoothing_steps: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    level_iterations: list = field(default_factory=list)
    level_states: list = field(default_factory=list)  # cascadic: (x, b, reference residual) per level
    events: list = field(default_factory=list)
    failure: str | None = None

    def _grow(self, n):
        for a in (self.smoothing_steps, self.backtracks, self.linear_iterations):
            while len(a) < n:
                a.append(0)

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["event", "level", "iteration", "residual", "step", "halvings"])
            for e in self.events:
                w.writerow([e["event"], e["level"], e["iteration"], f"{e['residual']:.6e}", e.get("step", ""),
                            e.get("halvings", "")])


def _norm(v) -> float:
    n = float(np.linalg.norm(v))
    return n if math.isfinite(n) else math.inf


def backtrack(residual_norm, x, dx, max_halvings: int = 4, theta: float = 0.9):
    """Halve the step while the residual grows and halving still pays off.

    Returns ``(x_new, step, halvings, ok)``; ``ok`` is False when every trial
    point produced a non-finite residual, in which case ``x`` is returned.
    """
    r0 = residual_norm(x)
    s, n = 1.0, 0
    rs = residual_norm(x + dx)
    while rs > r0 and n < max_halvings:
        rh = residual_norm(x + 0.5 * s * dx)
        if rh > theta * rs:
            break
        s *= 0.5
        n += 1
        rs = rh
    if not math.isfinite(rs):
        return x, s, n, False
    return x + s * dx, s, n, True


def cap_step(dx, dp, cap: float | None):
    """Scale ``dx`` so that ``max |dp| <= cap``; ``dp`` is the cell pressure part of ``dx``."""
    if cap is None or dp.size == 0:
        return dx, 1.0
    m = float(np.max(np.abs(dp)))
    if m <= cap:
        return dx, 1.0
    return dx * (cap / m), cap / m


class Multilevel:
    """Level operators plus transfers for one problem."""

    def __init__(self, problem: Problem, hierarchy: Hierarchy | None):
        self.problem = problem
        self.hierarchy = hierarchy
        levels = hierarchy.levels if hierarchy is not None else [problem.level0()]
        self.ops = [LevelOperator(lv, problem.law) for lv in levels]
        self.transfers = hierarchy.transfers if hierarchy is not None else []

    @property
    def n_levels(self) -> int:
        return len(self.ops)

    def project(self, l, x):
        t = self.transfers[l]
        op = self.ops[l]
        return np.concatenate([t.Q_sigma @ x[:op.n_sigma], t.P_p.T @ x[op.n_sigma:]])

    def restrict(self, l, r):
        t = self.transfers[l]
        op = self.ops[l]
        return np.concatenate([t.P_sigma.T @ r[:op.n_sigma], t.P_p.T @ r[op.n_sigma:]])

    def prolong(self, l, y):
        t = self.transfers[l]
        nc = self.ops[l + 1].n_sigma
        return np.concatenate([t.P_sigma @ y[:nc], t.P_p @ y[nc:]])


class _Engine:
    def __init__(self, ml: Multilevel, cfg: SolverConfig, smoother: str, report: SolveReport):
        self.ml = ml
        self.cfg = cfg
        self.smoother = smoother
        self.report = report
        pb = ml.problem
        self.max_halvings = cfg.max_halvings if cfg.max_halvings is not None else pb.max_halvings
        cap = cfg.pressure_cap if cfg.pressure_cap is not None else pb.pressure_cap
        self.cap = cap if cap is not None and cap > 0 else None
        report._grow(ml.n_levels)
        self.iteration = 0

    def rnorm(self, l, x, b) -> float:
        with np.errstate(all="ignore"):
            return _norm(self.ml.ops[l].residual(x, b))

    def smooth(self, l, x, b):
        """One globalised nonlinear step on level ``l``."""
        op = self.ml.ops[l]
        method = self.cfg.fine_linear if l == 0 else self.cfg.coarse_linear
        with np.errstate(all="ignore"):
            if self.smoother == "newton":
                sysm = op.newton_system(x, b)
                dx, st = linear_solve(sysm, method, self.cfg.linear)
            else:
                sysm = op.picard_system(x, b)
                y, st = linear_solve(sysm, method, self.cfg.linear)
                dx = y - x
        rep = self.report
        rep.smoothing_steps[l] += 1
        rep.linear_iterations[l] += st.iterations
        if not np.all(np.isfinite(dx)):
            return x, False
        if self.cap is not None:
            dx, _ = cap_step(dx, op.pwc @ dx[op.n_sigma:], self.cap)
        xn, s, n, ok = backtrack(lambda z: self.rnorm(l, z, b), x, dx, self.max_halvings, self.cfg.theta)
        rep.backtracks[l] += n
        rep.events.append({"event": "smooth", "level": l, "iteration": self.iteration,
                           "residual": self.rnorm(l, xn, b), "step": s, "halvings": n})
        return xn, ok

    def coarsest(self, l, x, b):
        r0 = self.rnorm(l, x, b)
        for _ in range(self.cfg.coarsest_steps):
            x, ok = self.smooth(l, x, b)
            r = self.rnorm(l, x, b)
            if not ok or r <= self.cfg.rel_tol * r0 or r <= self.cfg.abs_tol:
                break
        return x

    def vcycle(self, l, x, b, stop=None):
        """One FAS V-cycle; ``stop(x)`` may end the cycle after pre-smoothing."""
        cfg = self.cfg
        if self.rnorm(l, x, b) <= cfg.abs_tol:
            return x, False
        if l == self.ml.n_levels - 1:
            return self.coarsest(l, x, b), False
        for _ in range(cfg.pre_smooth):
            x, _ = self.smooth(l, x, b)
        if stop is not None and stop(x):
            return x, True
        op, opc = self.ml.ops[l], self.ml.ops[l + 1]
        with np.errstate(all="ignore"):
            xc = self.ml.project(l, x)
            bc = opc.apply(xc) - self.ml.restrict(l, op.residual(x, b))
        yc, _ = self.vcycle(l + 1, xc.copy(), bc)
        dx = self.ml.prolong(l, yc - xc)
        if np.all(np.isfinite(dx)):
            x, s, n, _ = backtrack(lambda z: self.rnorm(l, z, b), x, dx, self.max_halvings, cfg.theta)
            self.report.backtracks[l] += n
            self.report.events.append({"event": "correct", "level": l, "iteration": self.iteration,
                                       "residual": self.rnorm(l, x, b), "step": s, "halvings": n})
        for _ in range(cfg.post_smooth):
            x, _ = self.smooth(l, x, b)
        return x, False


def _converged(r, r0, cfg) -> bool:
    return r <= cfg.rel_tol * r0 or r <= cfg.abs_tol


def solve(problem: Problem, method: str = "fas_newton", config: SolverConfig | None = None,
          hierarchy: Hierarchy | None = None, x0=None):
    """Solve ``problem``; returns ``(x, report)`` with ``x = [sigma; p]`` on level 0."""
    cfg = config or SolverConfig()
    method = method.lower().replace("-", "_")
    method = ALIASES.get(method, method)
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    report = SolveReport(method)
    t0 = time.perf_counter()
    multilevel = method.startswith("fas") or method == "cascadic"
    if multilevel and hierarchy is None:
        hierarchy = build_hierarchy(problem.mesh, problem.K0, cfg.hierarchy, problem.offset,
                                    level0=problem.level0())
    if multilevel:
        report.setup_time = hierarchy.setup_time
    ml = Multilevel(problem, hierarchy if multilevel else None)
    smoother = "picard" if method.endswith("picard") else "newton"
    eng = _Engine(ml, cfg, smoother, report)
    b = problem.rhs()
    x = problem.initial_guess() if x0 is None else np.array(x0, dtype=float)
    t1 = time.perf_counter()
    if method == "cascadic":
        x = _cascadic(eng, x, b)
    else:
        x = _outer(eng, x, b, multilevel)
    report.wall_time = time.perf_counter() - t1
    if not multilevel:
        report.setup_time = t1 - t0
    return x, report


def _outer(eng: _Engine, x, b, multilevel: bool):
    cfg, rep = eng.cfg, eng.report
    r0 = eng.rnorm(0, x, b)
    rep.initial_residual = r0
    rep.residuals.append(r0)
    if r0 <= cfg.abs_tol:
        rep.converged = True
        return x
    if not math.isfinite(r0):
        rep.failure = "non-finite initial residual"
        return x
    for it in range(1, cfg.max_iters + 1):
        eng.iteration = it
        if multilevel and eng.ml.n_levels > 1:
            x, early = eng.vcycle(0, x, b, stop=lambda z: _converged(eng.rnorm(0, z, b), r0, cfg))
        else:
            x, _ = eng.smooth(0, x, b)
            early = False
        r = eng.rnorm(0, x, b)
        rep.residuals.append(r)
        rep.iterations = it
        log.info("%s iteration %d residual %.3e", rep.method, it, r)
        if not math.isfinite(r):
            rep.failure = "non-finite residual"
            return x
        if _converged(r, r0, cfg):
            rep.converged = True
            rep.early_presmooth = early
            return x
    rep.failure = "iteration limit reached"
    return x


def _cascadic(eng: _Engine, x0, b0):
    """Coarse-to-fine nested iteration with per-level Newton solves."""
    ml, cfg, rep = eng.ml, eng.cfg, eng.report
    L = ml.n_levels
    bs, xs = [b0], [x0]
    for l in range(L - 1):
        bs.append(ml.restrict(l, bs[-1]))
        xs.append(ml.project(l, xs[-1]))
    counts = [0] * L
    x = xs[-1]
    ok = True
    for l in range(L - 1, -1, -1):
        if l < L - 1:
            x = ml.prolong(l, x)
        ref = eng.rnorm(l, xs[l], bs[l])
        rep.residuals.append(eng.rnorm(l, x, bs[l]))
        done = _converged(rep.residuals[-1], ref, cfg)
        while not done and counts[l] < cfg.max_iters:
            eng.iteration = counts[l] + 1
            x, _ = eng.smooth(l, x, bs[l])
            counts[l] += 1
            r = eng.rnorm(l, x, bs[l])
            rep.residuals.append(r)
            if not math.isfinite(r):
                break
            done = _converged(r, ref, cfg)
        ok = ok and done
        rep.level_states.insert(0, (x, bs[l], ref))
        if l == 0:
            rep.initial_residual = ref
    rep.level_iterations = counts
    rep.iterations = counts[0]
    rep.converged = ok
    if not ok:
        rep.failure = "a level did not converge"
    return x
