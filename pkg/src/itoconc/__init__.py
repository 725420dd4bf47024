"""Concentration bounds for the supremum of Ito integrals, with Monte Carlo certification."""

from .bounds import (
    BoundParams, BoundValue, asymptotic_rate, check_feller, eval_alpha0, eval_cir,
    eval_decomposition, eval_double_integral, eval_explicit_eq1, eval_explicit_lt1,
    eval_explicit_neg_alpha, eval_gaussian_functional, eval_gaussian_tail, eval_general_eq1,
    eval_general_lt1, eval_neg_alpha, rate_exponent,
)
from .errors import (
    ConfigError, DomainError, FellerViolation, InvalidInput, InvalidKernel, InvalidParameter,
    ItoConcError, SimulationFailure, SolverFailure,
)
from .vsolver import OptimalV, VSolution, closed_form_v_alpha0, solve_v_eq1, solve_v_lt1

__version__ = "0.1.0"
