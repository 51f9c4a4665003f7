"""A nonlinear flow problem: mesh with boundary data, permeability, law and source."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coarsen import Level, fine_level
from .mesh import NEUMANN, Mesh
from .tpfa import KappaLaw, boundary_data


@dataclass
class Problem:
    mesh: Mesh
    K0: np.ndarray
    law: KappaLaw
    source: np.ndarray | float = 0.0
    offset: np.ndarray | None = None       # per-cell shift, e.g. elevation for Richards
    name: str = "problem"
    pressure_cap: float | None = None
    max_halvings: int = 4
    initial_pressure: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    _level0: Level | None = field(default=None, repr=False)

    def level0(self) -> Level:
        if self._level0 is None:
            self._level0 = fine_level(self.mesh, self.K0, self.offset)
        return self._level0

    def loads(self) -> tuple[np.ndarray, np.ndarray]:
        """Full fine loads ``(g, f)`` over every mesh interface and cell."""
        return boundary_data(self.mesh, self.source)

    def rhs(self) -> np.ndarray:
        """Level-0 right hand side ``b = -[g; f]`` (Neumann fluxes eliminated)."""
        g, f = self.loads()
        keep = self.level0().fine_faces
        return -np.concatenate([g[keep], f])

    def initial_guess(self) -> np.ndarray:
        lv = self.level0()
        p = np.zeros(lv.n_p) if self.initial_pressure is None else np.asarray(self.initial_pressure, float)
        return np.concatenate([np.zeros(lv.n_flux), p])

    def full_flux(self, x) -> np.ndarray:
        """Flux on every mesh interface, Neumann values included."""
        lv = self.level0()
        g, _ = self.loads()
        out = np.zeros(self.mesh.n_faces)
        nm = self.mesh.face_kind == NEUMANN
        out[nm] = -g[nm]
        out[lv.fine_faces] = x[:lv.n_flux]
        return out
