"""Disciplined convex-concave programming with an embedded SOCP solver."""

from .atoms import (
    abs_, broadcast, hstack, max_entries, maximum, min_entries, minimum, norm, norm1,
    norm2, norm_inf, pos, reshape, sqrt, square, sum_entries, sum_squares, trace,
    vectorize, vstack,
)
from .cone import ConeProgram, Recovery, canonicalize, recover
from .domain import DomainConstraints, contains, domain
from .errors import (
    DcprogError, DomainViolation, InitializationFailed, NotDccp, NotDcp,
    NotDifferentiable, ShapeError, SubproblemFailed,
)
from .expr import (
    Constant, Constraint, Curvature, Expression, Parameter, Sign, Variable, curvature,
    evaluate, gradient, jacobians, multiply, sign,
)
from .solver import ConeSolution, ConeStatus, kkt_residuals, solve_cone
from .transform import (
    Maximize, Minimize, Problem, build_penalty_subproblem, convexify_constraint, is_dccp,
    is_dcp, linearize, split_equalities,
)

from .ccp import (
    CcpParams, CcpStatus, IterationRecord, SolveResult, damp, initialize, solve_convex,
    solve_dccp, tau_update,
)

__all__ = [
    "abs_", "broadcast", "hstack", "max_entries", "maximum", "min_entries", "minimum", "norm",
    "norm1", "norm2", "norm_inf", "pos", "reshape", "sqrt", "square", "sum_entries",
    "sum_squares", "trace", "vectorize", "vstack", "ConeProgram", "Recovery", "canonicalize",
    "recover", "DomainConstraints", "contains", "domain", "DcprogError", "DomainViolation",
    "InitializationFailed", "NotDccp", "NotDcp", "NotDifferentiable", "ShapeError",
    "SubproblemFailed", "Constant", "Constraint", "Curvature", "Expression", "Parameter",
    "Sign", "Variable", "curvature", "evaluate", "gradient", "jacobians", "multiply", "sign",
    "ConeSolution", "ConeStatus", "kkt_residuals", "solve_cone", "Maximize", "Minimize",
    "Problem", "build_penalty_subproblem", "convexify_constraint", "is_dccp", "is_dcp",
    "linearize", "split_equalities", "CcpParams", "CcpStatus", "IterationRecord",
    "SolveResult", "damp", "initialize", "solve_convex", "solve_dccp", "tau_update",
]

__version__ = "0.1.0"
