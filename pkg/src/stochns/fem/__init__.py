"""Finite elements on the periodic torus: mesh, stable pairs, assembly and solvers."""

from .assembly import (
    AssembledOperators,
    assemble_convection_btilde,
    assemble_operators,
    btilde,
    cross_norms,
    evaluate_spectral_on_mesh,
    modal_loads,
    spectral_load,
)
from .elements import ELEMENTS, FemSpacePair, FemState
from .mesh import PeriodicMesh, build_periodic_mesh
from .quadrature import triangle_rule
from .solvers import (
    SaddleSolution,
    SolverError,
    check_inf_sup,
    inf_sup_quotient,
    project_Ph0,
    project_Qh0,
    solve_saddle_point,
)

__all__ = [
    "AssembledOperators", "assemble_convection_btilde", "assemble_operators", "btilde",
    "cross_norms", "evaluate_spectral_on_mesh", "modal_loads", "spectral_load",
    "ELEMENTS", "FemSpacePair", "FemState", "PeriodicMesh", "build_periodic_mesh",
    "triangle_rule", "SaddleSolution", "SolverError", "check_inf_sup", "inf_sup_quotient",
    "project_Ph0", "project_Qh0", "solve_saddle_point",
]
