"""Permeability fields, configuration files and result writers."""
from __future__ import annotations

import configparser
import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .mesh import Mesh
from .partition import Partition, read_aggregation, write_aggregation  # noqa: F401


@dataclass
class PermField:
    """Diagonal permeability on a lattice; arrays have shape ``(nz, ny, nx)``."""
    kx: np.ndarray
    ky: np.ndarray
    kz: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        nz, ny, nx = self.kx.shape
        return nx, ny, nz

    def tensor(self, mesh: Mesh) -> np.ndarray:
        """Per-cell diagonal tensor ``(n_cells, dim)`` for a Cartesian mesh on this lattice."""
        if mesh.shape != self.shape or mesh.lattice_index is None:
            raise ValueError(f"field of shape {self.shape} does not match mesh {mesh.shape}")
        act = mesh.lattice_index >= 0
        cols = [self.kx.ravel()[act], self.ky.ravel()[act], self.kz.ravel()[act]]
        return np.stack(cols[:mesh.dim], axis=1)

    def layer(self, k: int) -> "PermField":
        sl = slice(k, k + 1)
        return PermField(self.kx[sl].copy(), self.ky[sl].copy(), self.kz[sl].copy())


def read_perm_raster(path, nx: int, ny: int, nz: int) -> PermField:
    """Read ``3*nx*ny*nz`` values: all kx, then ky, then kz, x fastest."""
    data = np.loadtxt(path, dtype=float, ndmin=1).ravel() if Path(path).stat().st_size else np.zeros(0)
    n = nx * ny * nz
    if data.size != 3 * n:
        raise ValueError(f"raster {path} holds {data.size} values, expected {3 * n}")
    if not np.all(np.isfinite(data)) or np.any(data <= 0):
        raise ValueError(f"raster {path} has non-positive or non-finite entries")
    kx, ky, kz = (data[i * n:(i + 1) * n].reshape(nz, ny, nx) for i in range(3))
    return PermField(kx, ky, kz)


def write_perm_raster(path, field: PermField) -> None:
    np.savetxt(path, np.concatenate([field.kx.ravel(), field.ky.ravel(), field.kz.ravel()]), fmt="%.10g")


def rescale_perm(field: PermField) -> PermField:
    """Scale so the largest horizontal value is 1; vertical gets a further 1/100."""
    m = max(field.kx.max(), field.ky.max())
    return PermField(field.kx / m, field.ky / m, field.kz / (100.0 * m))


def generate_synthetic_field(nx: int, ny: int, nz: int = 1, style: str = "lognormal", seed: int = 0,
                             sigma: float = 1.0, correlation: float = 2.0) -> PermField:
    """Isotropic synthetic field, normalised so its maximum is 1.

    ``lognormal``: ``exp(sigma * G)`` with ``G`` smoothed white noise of unit variance.
    ``layered``: one lognormal value per horizontal layer (along the last axis used).
    ``channel``: meandering high permeability channels with a 100:1 contrast.
    """
    rng = np.random.default_rng(seed)
    shape = (nz, ny, nx)
    if style == "lognormal":
        g = rng.standard_normal(shape)
        if correlation > 0:
            g = gaussian_filter(g, sigma=[correlation if s > 1 else 0 for s in shape], mode="wrap")
        g = (g - g.mean()) / (g.std() or 1.0)
        k = np.exp(sigma * g)
    elif style == "layered":
        vert = 0 if nz > 1 else 1
        vals = np.exp(sigma * rng.standard_normal(shape[vert]))
        k = np.broadcast_to(vals.reshape([-1 if i == vert else 1 for i in range(3)]), shape).copy()
    elif style == "channel":
        z, y, x = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
        k = np.full(shape, 0.01)
        n_ch = max(1, ny // 16)
        for c in range(n_ch):
            amp = rng.uniform(1.0, 0.1 * ny + 1.0)
            per = rng.uniform(0.5, 1.5) * nx
            ph = rng.uniform(0, 2 * np.pi)
            y0 = (c + 0.5) * ny / n_ch
            width = max(1.0, 0.03 * ny)
            centre = y0 + amp * np.sin(2 * np.pi * x / per + ph)
            k[np.abs(y - centre) <= width] = 1.0
    else:
        raise ValueError(f"unknown field style {style!r}")
    k = k / k.max()
    return PermField(k.copy(), k.copy(), k.copy())


# -- configuration ---------------------------------------------------------

class ConfigError(ValueError):
    pass


_SCHEMA = {
    "mesh": {"nx": (int, True), "ny": (int, True), "nz": (int, False), "hx": (float, False),
             "hy": (float, False), "hz": (float, False), "dim": (int, False)},
    "kappa": {"law": (str, True), "alpha": (float, False), "beta": (float, False), "k0": (float, False)},
    "solver": {"method": (str, False), "levels": (int, False), "factors": (str, False), "ma": (int, False),
               "mf": (int, False), "rel_tol": (float, False), "abs_tol": (float, False),
               "max_iters": (int, False), "max_halvings": (int, False), "theta": (float, False),
               "pressure_cap": (float, False), "seed": (int, False)},
    "output": {"report": (str, False), "export": (str, False), "history": (str, False),
               "aggregation": (str, False)},
    "field": {"style": (str, False), "sigma": (float, False), "seed": (int, False), "raster": (str, False),
              "rescale": (str, False)},
    "boundary": None,  # free-form rules: name = predicate ; kind ; value
}
_REQUIRED_SECTIONS = ("mesh", "kappa")


def read_config(path) -> dict:
    """Read an INI file into ``{section: {key: value}}``.

    Unknown keys and sections produce warnings; missing required keys raise
    :class:`ConfigError`.  The ``[boundary]`` section is kept as an ordered
    list of ``(name, predicate, kind, value)`` strings.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))  # ";" separates boundary rule fields
    cp.optionxform = str.lower
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read configuration {path}")
    out: dict = {}
    for sec in cp.sections():
        name = sec.lower()
        if name not in _SCHEMA:
            warnings.warn(f"unknown configuration section [{sec}]", stacklevel=2)
            continue
        if name == "boundary":
            rules = []
            for key, val in cp.items(sec):
                parts = [s.strip() for s in val.split(";")]
                if len(parts) not in (2, 3):
                    raise ConfigError(f"boundary rule {key!r} needs 'predicate ; kind [; value]'")
                rules.append((key, parts[0], parts[1], parts[2] if len(parts) == 3 else "0"))
            out["boundary"] = rules
            continue
        schema = _SCHEMA[name]
        vals = {}
        for key, raw in cp.items(sec):
            if key not in schema:
                warnings.warn(f"unknown key {key!r} in [{sec}]", stacklevel=2)
                continue
            typ = schema[key][0]
            try:
                vals[key] = typ(raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from None
        out[name] = vals
    for sec in _REQUIRED_SECTIONS:
        if sec not in out:
            raise ConfigError(f"missing required section [{sec}]")
    for sec, vals in out.items():
        if sec == "boundary":
            continue
        for key, (_, req) in _SCHEMA[sec].items():
            if req and key not in vals:
                raise ConfigError(f"missing required key {key!r} in [{sec}]")
    return out


# -- writers ---------------------------------------------------------------

REPORT_HEADER = ["solver", "alpha", "cells", "levels", "mA", "mf", "nonlinear_iters", "time_s", "converged",
                 "early_presmooth"]


def write_report(path, rows) -> None:
    """Write benchmark rows (dicts keyed by :data:`REPORT_HEADER`)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in REPORT_HEADER])


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _fmt(v):
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def write_solution(path, mesh: Mesh, pressure, flux) -> None:
    """Legacy VTK ASCII: cell scalars ``pressure`` and an interface field ``flux``."""
    pressure = np.asarray(pressure, dtype=float)
    flux = np.asarray(flux, dtype=float)
    if pressure.shape != (mesh.n_cells,) or flux.shape != (mesh.n_faces,):
        raise ValueError("pressure/flux sizes do not match the mesh")
    lines = ["# vtk DataFile Version 3.0", "fasflow solution", "ASCII"]
    if mesh.shape is not None and mesh.lattice_index is not None:
        nx, ny, nz = mesh.shape
        hx, hy, hz = mesh.spacing
        lines += ["DATASET STRUCTURED_POINTS", f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}",
                  "ORIGIN 0 0 0", f"SPACING {hx:.10g} {hy:.10g} {hz:.10g}"]
        ncell = nx * ny * nz
        vals = np.full(ncell, np.nan)
        act = mesh.lattice_index >= 0
        vals[act] = pressure[mesh.lattice_index[act]]
    else:
        lines += ["DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_cells} double"]
        c = np.zeros((mesh.n_cells, 3))
        c[:, :mesh.dim] = mesh.cell_centers
        lines += [" ".join(f"{v:.10g}" for v in row) for row in c]
        lines += [f"CELLS {mesh.n_cells} {2 * mesh.n_cells}"] + [f"1 {i}" for i in range(mesh.n_cells)]
        lines += [f"CELL_TYPES {mesh.n_cells}"] + ["1"] * mesh.n_cells
        ncell = mesh.n_cells
        vals = pressure
    lines += [f"CELL_DATA {ncell}", "SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.12g}" for v in vals]
    lines += ["FIELD interfaces 1", f"flux 1 {mesh.n_faces} double"]
    lines += [f"{v:.12g}" for v in flux]
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path) -> dict:
    """Read back the arrays written by :func:`write_solution`."""
    toks = Path(path).read_text().split("\n")
    out = {}
    i = 0
    while i < len(toks):
        t = toks[i].split()
        if t[:2] == ["SCALARS", "pressure"]:
            n = int(next(s for s in toks if s.startswith("CELL_DATA")).split()[1])
            out["pressure"] = np.array([float(v) for v in toks[i + 2:i + 2 + n]])
            i += 2 + n
            continue
        if t and t[0] == "flux":
            n = int(t[2])
            out["flux"] = np.array([float(v) for v in toks[i + 1:i + 1 + n]])
            i += 1 + n
            continue
        i += 1
    return out
