"""Benchmark front end: run catalog problems through one or more solvers and tabulate."""
from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

from .catalog import DEFAULTS, PROBLEMS, build_problem
from .coarsen import HierarchyParams, build_hierarchy
from .fas import ALIASES, METHODS, SolverConfig, solve
from .fieldio import read_config, write_report, write_solution


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _sizes(text: str) -> list[tuple[int, ...]]:
    return [tuple(int(n) for n in item.lower().split("x")) for item in text.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fasflow", description=__doc__)
    ap.add_argument("--config", metavar="PATH", help="INI file describing mesh, law, boundary and solver")
    ap.add_argument("--problem", metavar="NAME", help=f"catalog problem, one of {', '.join(PROBLEMS)}")
    ap.add_argument("--solver", metavar="LIST", help=f"comma separated, from {', '.join(METHODS)}")
    ap.add_argument("--levels", type=int, metavar="N")
    ap.add_argument("--factor", type=_ints, metavar="LIST", help="coarsening factor per level, e.g. 16,8")
    ap.add_argument("--ma", type=int, metavar="N", help="eigenvectors per aggregate")
    ap.add_argument("--mf", type=int, metavar="N", help="traces per coarse face")
    ap.add_argument("--alpha", type=float, metavar="X")
    ap.add_argument("--sweep-alpha", type=_floats, metavar="LIST")
    ap.add_argument("--sweep-sizes", type=_sizes, metavar="LIST", help="e.g. 160x40,320x80 or 32,64")
    ap.add_argument("--seed", type=int, metavar="N")
    ap.add_argument("--tol-rel", type=float, metavar="X")
    ap.add_argument("--tol-abs", type=float, metavar="X")
    ap.add_argument("--report", metavar="PATH", help="CSV report")
    ap.add_argument("--export", metavar="PATH", help="VTK solution file")
    ap.add_argument("--allow-nonconverged", action="store_true")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _export_path(base: str, tag: str, many: bool) -> Path:
    p = Path(base)
    return p.with_name(f"{p.stem}_{tag}{p.suffix or '.vtk'}") if many else p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    cfg = read_config(args.config) if args.config else {}
    scfg, ocfg = cfg.get("solver", {}), cfg.get("output", {})
    name = args.problem or ("raster" if cfg else None)
    if name is None:
        print("error: give --problem or --config", file=sys.stderr)
        return 2
    if name not in PROBLEMS:
        print(f"error: unknown problem {name!r}; choose from {', '.join(PROBLEMS)}", file=sys.stderr)
        return 2
    if name == "raster" and not cfg:
        print("error: the raster problem needs --config", file=sys.stderr)
        return 2

    solvers = (args.solver or scfg.get("method", "fas_newton")).split(",")
    solvers = [s.strip().lower().replace("-", "_") for s in solvers if s.strip()]
    solvers = [ALIASES.get(s, s) for s in solvers]
    bad = [s for s in solvers if s not in METHODS]
    if bad:
        print(f"error: unknown solver(s) {bad}; choose from {', '.join(METHODS)}", file=sys.stderr)
        return 2

    d = DEFAULTS[name]
    levels = args.levels or scfg.get("levels", d.levels)
    factors = tuple(args.factor) if args.factor else (
        tuple(_ints(scfg["factors"])) if "factors" in scfg else d.factors)
    m_A = args.ma or scfg.get("ma", d.m_A)
    m_f = args.mf or scfg.get("mf", d.m_f)
    seed = args.seed if args.seed is not None else scfg.get("seed", 0)
    if args.sweep_alpha:
        alphas = args.sweep_alpha
    elif args.alpha is not None:
        alphas = [args.alpha]
    else:
        alphas = [None]
    sizes = args.sweep_sizes or [None]
    report_path = args.report or ocfg.get("report")
    export = args.export or ocfg.get("export")

    hp = HierarchyParams(n_levels=levels, factors=factors, m_A=m_A, m_f=m_f, seed=seed)
    base = SolverConfig(hierarchy=hp)
    for key, attr in (("rel_tol", "rel_tol"), ("abs_tol", "abs_tol"), ("max_iters", "max_iters"),
                      ("max_halvings", "max_halvings"), ("theta", "theta")):
        if key in scfg:
            setattr(base, attr, scfg[key])
    if args.tol_rel is not None:
        base.rel_tol = args.tol_rel
    if args.tol_abs is not None:
        base.abs_tol = args.tol_abs

    rows, failed = [], 0
    many = len(solvers) * len(alphas) * len(sizes) > 1
    for size in sizes:
        hierarchy = None
        for alpha in alphas:
            if name == "raster" or (name == "two_cell" and cfg):
                pb = build_problem("raster", config=cfg)
            else:
                pb = build_problem(name, alpha, size, seed)
            for method in solvers:
                multilevel = method.startswith("fas") or method == "cascadic"
                if multilevel and hierarchy is None:
                    # the hierarchy depends on mesh and K0 only, so sweeps over alpha share it
                    with warnings.catch_warnings():
                        warnings.simplefilter("default")
                        hierarchy = build_hierarchy(pb.mesh, pb.K0, hp, pb.offset, level0=pb.level0())
                    print(f"hierarchy: cells per level {[lv.n_cells for lv in hierarchy.levels]}, "
                          f"setup {hierarchy.setup_time:.2f} s")
                t0 = time.perf_counter()
                x, rep = solve(pb, method, base, hierarchy if multilevel else None)
                elapsed = time.perf_counter() - t0
                a = pb.law.alpha
                rows.append({
                    "solver": method, "alpha": float(a), "cells": pb.mesh.n_cells,
                    "levels": len(hierarchy.levels) if multilevel else 1,
                    "mA": m_A if multilevel else "", "mf": m_f if multilevel else "",
                    "nonlinear_iters": rep.iterations, "time_s": float(rep.wall_time),
                    "converged": rep.converged, "early_presmooth": rep.early_presmooth,
                    "_setup": rep.setup_time if multilevel else 0.0, "_total": elapsed,
                    "_levels": rep.level_iterations, "_failure": rep.failure,
                })
                if not rep.converged:
                    failed += 1
                if export:
                    tag = f"{method}_a{a:g}_n{pb.mesh.n_cells}"
                    lv = pb.level0()
                    write_solution(_export_path(export, tag, many), pb.mesh, x[lv.n_flux:], pb.full_flux(x))

    _summary(rows)
    if report_path:
        write_report(report_path, rows)
        print(f"report written to {report_path}")
    if failed and not args.allow_nonconverged:
        print(f"{failed} run(s) did not converge", file=sys.stderr)
        return 1
    return 0


def _summary(rows) -> None:
    print(f"{'solver':<14}{'alpha':>11}{'cells':>9}{'iters':>8}{'solve s':>10}{'setup s':>10}  status")
    for r in rows:
        its = f"{r['nonlinear_iters']}{'*' if r['early_presmooth'] else ''}"
        if r["solver"] == "cascadic" and r["_levels"]:
            its = "/".join(str(c) for c in r["_levels"])
        status = "ok" if r["converged"] else f"FAILED ({r['_failure']})"
        print(f"{r['solver']:<14}{r['alpha']:>11.4g}{r['cells']:>9}{its:>8}{r['time_s']:>10.3f}"
              f"{r['_setup']:>10.3f}  {status}")
    if any(r["early_presmooth"] for r in rows):
        print("* converged during the finest-level pre-smoothing of the last cycle")


def main() -> None:
    sys.exit(run())
