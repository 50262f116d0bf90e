"""Simulation and verification lab for semilinear damped wave equations.

``eps u_tt + alpha u_t + beta u - L u = f(x, u)`` with Dirichlet data on a box,
discretised in summation-by-parts flux form and advanced by a Cayley /
Strang splitting scheme, together with monitors for the Lyapunov functionals,
energy identities and tail estimates that govern its long-time behaviour.
"""

from .errors import (
    AttractorLabError,
    BlowUpError,
    CheckFailure,
    ConfigurationError,
    CriterionFailed,
    HypothesisViolation,
    NumericalFailure,
    PreconditionError,
    ResolutionError,
    ShapeError,
)
from .grid import Grid, build_grid
from .operators import CoefficientSet, ConstantsBundle, lambda1, make_coefficients, select_rates
from .semiflow import EvolutionConfig, StateZ, Trajectory, evolve

__version__ = "0.1.0"

__all__ = [
    "AttractorLabError",
    "BlowUpError",
    "CheckFailure",
    "CoefficientSet",
    "ConfigurationError",
    "ConstantsBundle",
    "CriterionFailed",
    "EvolutionConfig",
    "Grid",
    "HypothesisViolation",
    "NumericalFailure",
    "PreconditionError",
    "ResolutionError",
    "ShapeError",
    "StateZ",
    "Trajectory",
    "build_grid",
    "evolve",
    "lambda1",
    "make_coefficients",
    "select_rates",
]
