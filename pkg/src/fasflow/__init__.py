"""Nonlinear multigrid (FAS) for mixed two-point-flux finite volumes with spectral coarsening."""
from .catalog import build_problem
from .coarsen import Hierarchy, HierarchyParams, build_hierarchy
from .fas import METHODS, SolveReport, SolverConfig, backtrack, solve
from .mesh import BoundaryRule, Mesh, build_cartesian_mesh, classify_boundary
from .partition import Partition, partition
from .problem import Problem
from .tpfa import KappaLaw

__version__ = "0.1.0"

__all__ = [
    "BoundaryRule", "Hierarchy", "HierarchyParams", "KappaLaw", "METHODS", "Mesh", "Partition", "Problem",
    "SolveReport", "SolverConfig", "backtrack", "build_cartesian_mesh", "build_hierarchy", "build_problem",
    "classify_boundary", "partition", "solve",
]
