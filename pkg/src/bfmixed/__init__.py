"""Mixed pseudostress-velocity finite elements for unsteady Brinkman-Forchheimer flow."""

from .assembly import Discretization, ProblemSpec
from .mesh import Mesh, generate_structured
from .problems import example1_spec, example3_spec, example4_spec
from .solver import NewtonError, SingularSystemError, Solver, SystemState, solve_initial, time_loop
from .spaces import StressSpace, VelocitySpace

__all__ = [
    "Discretization", "Mesh", "NewtonError", "ProblemSpec", "SingularSystemError", "Solver",
    "StressSpace", "SystemState", "VelocitySpace", "example1_spec", "example3_spec",
    "example4_spec", "generate_structured", "solve_initial", "time_loop",
]
