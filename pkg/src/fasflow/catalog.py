"""Ready-made benchmark problems."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fieldio import generate_synthetic_field, read_perm_raster, rescale_perm
from .mesh import BoundaryRule, build_cartesian_mesh, classify_boundary, parse_predicate, parse_value
from .problem import Problem
from .tpfa import KappaLaw

PROBLEMS = ("two_cell", "synthetic2d", "synthetic3d", "richards_loam", "richards_sand", "raster")

# soil parameters (alpha, beta, k0)
SOILS = {
    "loam": (1.246e2, 1.77, 1.067),
    "sand": (1.175e6, 4.74, 8.160e2),
}


@dataclass
class Defaults:
    levels: int
    factors: tuple
    m_A: int
    m_f: int = 1
    alpha: float | None = None


DEFAULTS = {
    "two_cell": Defaults(1, (2,), 1, 1, 0.0),
    "synthetic2d": Defaults(3, (16, 8), 4, 1, 0.8),
    "synthetic3d": Defaults(3, (16, 8), 4, 1, 0.8),
    "richards_loam": Defaults(3, (36,), 13, 1),
    "richards_sand": Defaults(3, (36,), 13, 1),
    "raster": Defaults(3, (16, 8), 4, 1, 0.8),
}


def two_cell() -> Problem:
    """Two unit cells between ``p = 1`` and ``p = 0``; exact ``p = [3/4, 1/4]``."""
    mesh = build_cartesian_mesh(2, 1, 1, dim=2)
    mesh = classify_boundary(mesh, [
        BoundaryRule(parse_predicate("x=0"), "dirichlet", 1.0, "left"),
        BoundaryRule(parse_predicate("x=2"), "dirichlet", 0.0, "right"),
    ])
    return Problem(mesh, np.ones(2), KappaLaw.constant(), 0.0, name="two_cell")


def _synthetic_source(mesh, f0: float) -> np.ndarray:
    """Source growing towards the top of the domain, constant below 90% height."""
    y = mesh.cell_centers[:, 1]
    top = y.max() + 0.5 * mesh.spacing[1]
    return f0 * np.maximum(np.exp((y - 0.9 * top) / (0.5 * top)), 1.0)


def synthetic2d(alpha: float = 0.8, n: int = 64, seed: int = 0, sigma: float = 1.0,
                f0: float = 2.0, style: str = "lognormal", thickness: float = 1000.0) -> Problem:
    """Unit square slab, lognormal permeability, exponential law, ``p = 0`` at ``y = 0``.

    The pressure increment per smoothing step is capped so that the
    nonlinearity changes by at most a factor 1.5.
    """
    mesh = build_cartesian_mesh(n, n, 1, 1.0 / n, 1.0 / n, thickness, dim=2)
    mesh = classify_boundary(mesh, [BoundaryRule(parse_predicate("y=0"), "dirichlet", 0.0, "outlet")])
    field = generate_synthetic_field(n, n, 1, style, seed, sigma)
    K0 = field.tensor(mesh)
    law = KappaLaw.exponential(alpha)
    cap = math.log(1.5) / alpha if alpha > 0 else None
    return Problem(mesh, K0, law, _synthetic_source(mesh, f0), name="synthetic2d", pressure_cap=cap,
                   meta={"alpha": alpha, "seed": seed})


def synthetic3d(alpha: float = 0.8, n: int = 16, seed: int = 0, sigma: float = 1.0,
                f0: float | None = None, side: float = 1000.0) -> Problem:
    """Box analogue of :func:`synthetic2d`: ``side x side x side/2`` with half as many layers.

    The default source ``2 / side**2`` keeps pressures of the same size as in
    the planar problem.
    """
    nz = max(2, n // 2)
    h = side / n
    mesh = build_cartesian_mesh(n, n, nz, h, h, 0.5 * side / nz)
    mesh = classify_boundary(mesh, [BoundaryRule(parse_predicate("y=0"), "dirichlet", 0.0, "outlet")])
    field = generate_synthetic_field(n, n, nz, "lognormal", seed, sigma)
    K0 = field.tensor(mesh)
    law = KappaLaw.exponential(alpha)
    cap = math.log(1.5) / alpha if alpha > 0 else None
    f0 = 2.0 / side ** 2 if f0 is None else f0
    return Problem(mesh, K0, law, _synthetic_source(mesh, f0), name="synthetic3d", pressure_cap=cap,
                   meta={"alpha": alpha, "seed": seed})


def richards(soil: str = "loam", nx: int = 160, ny: int = 40, width: float = 4000.0,
             height: float = 1000.0, strip: float = 1000.0, thickness: float = 100.0) -> Problem:
    """Vertical section with a water table at the bottom and a ponded strip on top.

    ``p`` is the hydraulic head ``psi + z``.  Bottom: ``psi = 0``; top for
    ``x <= strip``: ``psi = 0``; everything else is impermeable.  The initial
    guess is hydrostatic, ``psi = 0``.
    """
    a, b, k0 = SOILS[soil]
    mesh = build_cartesian_mesh(nx, ny, 1, width / nx, height / ny, thickness, dim=2)
    mesh = classify_boundary(mesh, [
        BoundaryRule(parse_predicate("y=0"), "dirichlet", parse_value("head:0"), "water_table"),
        BoundaryRule(parse_predicate(f"y={height} & x<={strip}"), "dirichlet", parse_value("head:0"), "pond"),
    ])
    z = mesh.cell_centers[:, 1].copy()
    law = KappaLaw.richards(a, b, k0)
    return Problem(mesh, np.full(mesh.n_cells, k0), law, 0.0, offset=z, name=f"richards_{soil}",
                   max_halvings=10 if soil == "sand" else 4, initial_pressure=z.copy(),
                   meta={"soil": soil})


def from_config(cfg: dict, name: str = "raster") -> Problem:
    """Problem described entirely by a configuration dictionary.

    Without a ``[boundary]`` section the left face holds ``p = 1`` and the
    right face ``p = 0``; without a ``[field]`` section ``K0 = 1``.
    """
    m = cfg["mesh"]
    nx, ny, nz = m["nx"], m["ny"], m.get("nz", 1)
    hx, hy, hz = m.get("hx", 1.0), m.get("hy", 1.0), m.get("hz", 1.0)
    dim = m.get("dim", 2 if nz == 1 else 3)
    mesh = build_cartesian_mesh(nx, ny, nz, hx, hy, hz, dim=dim)
    if "boundary" in cfg:
        rules = [BoundaryRule(parse_predicate(pred), kind, parse_value(val), key)
                 for key, pred, kind, val in cfg["boundary"]]
    else:
        rules = [BoundaryRule(parse_predicate("x=0"), "dirichlet", 1.0, "left"),
                 BoundaryRule(parse_predicate(f"x={nx * hx}"), "dirichlet", 0.0, "right")]
    mesh = classify_boundary(mesh, rules)
    fs = cfg.get("field")
    if fs is None:
        K0 = np.ones(mesh.n_cells)
    elif "raster" in fs:
        field = read_perm_raster(fs["raster"], nx, ny, nz)
        if fs.get("rescale", "yes").lower() in ("yes", "true", "1"):
            field = rescale_perm(field)
        K0 = field.tensor(mesh)
    else:
        K0 = generate_synthetic_field(nx, ny, nz, fs.get("style", "lognormal"), fs.get("seed", 0),
                                      fs.get("sigma", 1.0)).tensor(mesh)
    kap = cfg["kappa"]
    law = make_law(kap["law"], kap.get("alpha", 0.0), kap.get("beta", 1.0), kap.get("k0", 1.0))
    offset = mesh.cell_centers[:, -1].copy() if law.kind == "richards" else None
    cap = None
    if law.kind == "exponential" and law.alpha > 0:
        cap = math.log(1.5) / law.alpha
    sol = cfg.get("solver", {})
    if "pressure_cap" in sol:
        cap = sol["pressure_cap"]
    return Problem(mesh, K0 * (law.k0 if law.kind == "richards" else 1.0), law, 0.0, offset=offset,
                   name=name, pressure_cap=cap, max_halvings=sol.get("max_halvings", 4),
                   initial_pressure=offset)


def make_law(kind: str, alpha: float = 0.0, beta: float = 1.0, k0: float = 1.0) -> KappaLaw:
    kind = kind.lower()
    if kind == "exponential":
        return KappaLaw.exponential(alpha)
    if kind == "richards":
        return KappaLaw.richards(alpha, beta, k0)
    if kind == "constant":
        return KappaLaw.constant()
    raise ValueError(f"unknown nonlinearity {kind!r}")


def build_problem(name: str, alpha: float | None = None, size=None, seed: int = 0,
                  config: dict | None = None) -> Problem:
    """Instantiate a catalog problem.

    ``size`` is a cell count per side or a tuple of cells per axis, e.g.
    ``(160, 40)`` for the Richards section or ``(64, 64)`` for synthetic2d.
    """
    dims = None if size is None else ((size,) if np.isscalar(size) else tuple(size))
    if name == "two_cell":
        return two_cell()
    if name in ("synthetic2d", "synthetic3d"):
        if dims is not None and len(set(dims[:2])) != 1:
            raise ValueError(f"{name} needs a square horizontal grid, got {dims}")
        a = DEFAULTS[name].alpha if alpha is None else alpha
        fn = synthetic2d if name == "synthetic2d" else synthetic3d
        return fn(a, dims[0], seed) if dims else fn(a, seed=seed)
    if name in ("richards_loam", "richards_sand"):
        nx, ny = (160, 40) if dims is None else (dims if len(dims) == 2 else (dims[0], dims[0] // 4))
        return richards(name.split("_")[1], nx, ny)
    if name == "raster":
        if config is None:
            raise ValueError("the raster problem needs a configuration file")
        return from_config(config)
    raise ValueError(f"unknown problem {name!r}; choose from {PROBLEMS}")
