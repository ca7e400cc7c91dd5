"""Solver and verification tools for the time-fractional Allen-Cahn equation.

A nonuniform L2-1_sigma type time stepping on graded meshes is paired with
Raviart-Thomas mixed finite elements in space.
"""

from .errors import InvariantViolation, ParameterDomainError, SolverError
from .gronwall import gronwall_bound, make_instance, verify_gronwall
from .kernels import build_kernel_tables, check_kernel_properties, discrete_caputo
from .solver import ProblemSpec, run
from .temporal_mesh import GradedTimeMesh, build_graded_mesh, default_gamma, default_nu, dt_star
from .verification import CASES, convergence_study, get_case

__version__ = "0.1.0"

__all__ = [
    "CASES",
    "GradedTimeMesh",
    "InvariantViolation",
    "ParameterDomainError",
    "ProblemSpec",
    "SolverError",
    "build_graded_mesh",
    "build_kernel_tables",
    "check_kernel_properties",
    "convergence_study",
    "default_gamma",
    "default_nu",
    "discrete_caputo",
    "dt_star",
    "get_case",
    "gronwall_bound",
    "make_instance",
    "run",
    "verify_gronwall",
]
