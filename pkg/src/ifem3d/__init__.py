"""Enriched immersed finite elements for 3D elliptic interface problems.

Typical use::

    from ifem3d import example1, solve_problem
    result = solve_problem(example1(), 16)
    print(result.errors)
"""

__version__ = "0.1.0"

from .assembly import (
    AssemblyParams,
    Discretization,
    IFEField,
    SparseSystem,
    assemble_system,
    interpolate,
    reconstruct_solution,
    symmetry_defect,
)
from .enrichment import JumpData
from .geometry import AssumptionViolationError, DegenerateCutError, GeometryWarning
from .levelset import LevelSet, Orthocircle, Plane, Sphere, Squircle, make_level_set, register_level_set
from .mesh import BoxDomain, Mesh, build_mesh
from .pipeline import (
    SolveResult,
    SolverOptions,
    conditioning_study,
    convergence_study,
    epsilon_robustness_study,
    solve_problem,
)
from .postprocess import ErrorReport, compute_errors
from .problems import ExactSolution, ProblemSpec, example1, example2, example3, make_problem, manufactured, planar_patch
from .solver import IndefiniteMatrixError, build_amg, estimate_condition, pcg_solve

__all__ = [
    "__version__",
    "AssemblyParams",
    "Discretization",
    "IFEField",
    "SparseSystem",
    "assemble_system",
    "interpolate",
    "reconstruct_solution",
    "symmetry_defect",
    "JumpData",
    "AssumptionViolationError",
    "DegenerateCutError",
    "GeometryWarning",
    "LevelSet",
    "Orthocircle",
    "Plane",
    "Sphere",
    "Squircle",
    "make_level_set",
    "register_level_set",
    "BoxDomain",
    "Mesh",
    "build_mesh",
    "SolveResult",
    "SolverOptions",
    "conditioning_study",
    "convergence_study",
    "epsilon_robustness_study",
    "solve_problem",
    "ErrorReport",
    "compute_errors",
    "ExactSolution",
    "ProblemSpec",
    "example1",
    "example2",
    "example3",
    "make_problem",
    "manufactured",
    "planar_patch",
    "IndefiniteMatrixError",
    "build_amg",
    "estimate_condition",
    "pcg_solve",
]
