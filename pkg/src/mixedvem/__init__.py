"""Mixed virtual element solver for 2D advection-diffusion-reaction problems,
with monomial, partially orthonormal and fully orthonormal polynomial bases."""

from .diagnostics import (
    ExperimentReport,
    condition_number,
    convergence_rate,
    element_conditions,
    interpolant_error,
    pressure_error,
    velocity_error,
)
from .errors import ConditioningError, VemError
from .global_solver import DofMap, GlobalSystem, SolutionFields, assemble_global, number_dofs, solve
from .local_assembly import ContextCache, assemble_element, build_context
from .mesh import PolygonalMesh, build_rectangle_grid, read_mesh, write_mesh
from .problems import ProblemData, patch_problem, polynomial_problem, test1_problem
from .vector_basis import Approach

__version__ = "0.1.0"

__all__ = [
    "Approach",
    "ConditioningError",
    "ContextCache",
    "DofMap",
    "ExperimentReport",
    "GlobalSystem",
    "PolygonalMesh",
    "ProblemData",
    "SolutionFields",
    "VemError",
    "assemble_element",
    "assemble_global",
    "build_context",
    "build_rectangle_grid",
    "condition_number",
    "convergence_rate",
    "element_conditions",
    "interpolant_error",
    "number_dofs",
    "patch_problem",
    "polynomial_problem",
    "pressure_error",
    "read_mesh",
    "solve",
    "test1_problem",
    "velocity_error",
    "write_mesh",
]
