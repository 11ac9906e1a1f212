"""Finite element meshes and matrices that satisfy discrete maximum principles.

Galerkin P1/Q1 discretization of steady advection-diffusion-reaction problems
with anisotropic diffusivity, checkers for the matrix and solution level
maximum principles, mesh restrictions that guarantee them, and a metric
driven mesh adaptation loop.
"""

from .adapt import (AdaptConfig, AdaptResult, MetricField, ThetaPolicy, adapt_mesh, build_metric,
                    builtin_remesh, export_metric, import_metric, uniformity_residuals)
from .assembly import (AssembledSystem, assemble, local_stiffness_q4, local_stiffness_t3,
                       solve_system)
from .errors import (BackendError, ConfigurationError, DmpMeshError, DomainError, InputError,
                     NumericalError, ParseError, SingularGeometryError, SolverError,
                     ValidationError)
from .mesh import (QuadMesh, Triangulation, load_mesh, structured_quads, structured_rectangle,
                   structured_rectangle_with_hole, write_mesh)
from .postprocess import balance_errors, export_vtk, read_vtk, recover_flux
from .principles import (check_dcp, check_matrix_principles, check_solution_principles,
                         classify_dominance, dwmp_witness)
from .problem import (DiffusivityField, ProblemSpec, ScalarField, VectorField, load_problem,
                      problem_from_dict)
from .restrictions import (check_anisotropic_nonobtuse, check_generalized_delaunay,
                           mesh_nondimensional_numbers, physics_numbers, q4_feasibility,
                           t3_feasibility)

__all__ = [name for name in dir() if not name.startswith("_")]
