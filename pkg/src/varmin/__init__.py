"""Discrete minimisation of action functionals and convergence of Euler-Cauchy polygons."""

from .analysis import (
    ConvergenceReport,
    PhasePolygon,
    SampledCurve,
    continuous_action,
    el_residual,
    polygon_distance,
    polygonal_interpolant,
    polyline_action,
    reference_flow,
    refine_study,
)
from .discrete import (
    BoundsCertificate,
    DiscretePath,
    Grid,
    MomentumPath,
    bounds_certificate,
    discrete_action,
    discrete_gradient,
    discrete_hamilton_residual,
    discrete_momenta,
)
from .errors import (
    CatalogLookupError,
    CompletenessError,
    ConditionViolationError,
    ConjugateSolveError,
    ContractError,
    ModelDefinitionError,
    ModelEvaluationError,
    VarminError,
)
from .legendre import ConjugateResult, conjugate_velocity, roundtrip_residual
from .model import (
    ConditionReport,
    LagrangianModel,
    TerminalCost,
    catalog_lookup,
    check_conditions,
    eval_lagrangian,
    terminal_cost_lookup,
)
from .mollify import mollification_study, mollify_curve
from .problem import Problem
from .solve import SolveOptions, SolveResult, initial_guess, minimize_discrete, solve, transversality_residual

__version__ = "0.1.0"
