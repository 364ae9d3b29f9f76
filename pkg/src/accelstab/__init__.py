"""Euler and Runge-Kutta discretizations of the accelerated Euler-Lagrange ODE
on strongly convex quadratics, with a stability analyzer for their iteration
matrices."""

from .errors import AccelStabError, NumericalError, ValidationError
from .harness import (
    DetectorSettings,
    RunConfig,
    Trace,
    compare_schemes,
    detect_divergence,
    fit_rate,
    reproduce_divergence_table,
    run_trajectory,
)
from .objective import QuadraticObjective, build_objective, eigendecompose, log_spaced_objective
from .schemes import IterateState, SchemeKind, SchemeParams, step, transition_matrix
from .stability import (
    LimitClass,
    analyze,
    divergence_bound,
    first_unstable_iteration,
    limit_classification,
    spectral_radius,
)

__version__ = "0.1.0"
