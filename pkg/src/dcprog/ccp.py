"""Penalty convex-concave procedure with damping, randomized initialization
and restarts."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .atoms import norm2, vstack
from .cone import canonicalize, recover
from .domain import DomainConstraints, domain
from .errors import DomainViolation, InitializationFailed, NotDccp, NotDifferentiable, SubproblemFailed
from .expr import Reshape, Variable
from .solver import ConeStatus, solve_cone
from .transform import Problem, build_penalty_subproblem, is_dccp, is_dcp, split_equalities

log = logging.getLogger(__name__)

# a subproblem that stops at the iteration cap is still usable if it is this accurate
ACCEPT_RESIDUAL = 1e-6
MAX_DAMPING = 20
INIT_ROUNDS = 5


class CcpStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    INITIALIZATION_FAILED = "initialization_failed"
    SUBPROBLEM_FAILED = "subproblem_failed"


@dataclass
class CcpParams:
    tau0: float = 0.005
    mu: float = 1.2
    tau_max: float = 1e8
    max_iter: int = 100
    alpha: float = 0.8
    k_ini: int = 10
    restarts: int = 1
    tol_obj: float = 1e-4
    tol_slack: float = 1e-3
    rng_seed: int = 0
    solver_tol: float = 1e-8
    solver_max_iter: int = 100

    def __post_init__(self):
        if not self.tau0 > 0 or not self.tau_max > 0:
            raise ValueError("tau0 and tau_max must be positive")
        if self.tau0 > self.tau_max:
            raise ValueError("tau0 must not exceed tau_max")
        # mu == 1 is allowed: it holds tau fixed
        if self.mu < 1:
            raise ValueError("mu must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("max_iter", "k_ini", "restarts"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationRecord:
    k: int
    objective: float | None
    penalized_objective: float
    max_slack: float
    tau: float
    damped: bool = False


@dataclass
class SolveResult:
    status: CcpStatus
    assignment: dict
    trace: list[IterationRecord] = field(default_factory=list)
    best_restart: int = 0
    objective: float | None = None
    max_violation: float = math.inf
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status is CcpStatus.CONVERGED

    def value(self, var: Variable) -> np.ndarray:
        return self.assignment[var]


def tau_update(tau: float, mu: float, tau_max: float) -> float:
    return min(mu * tau, tau_max)


def damp(x_prev: Mapping, x_candidate: Mapping, alpha: float) -> dict:
    """Per-variable convex combination ``alpha * x_candidate + (1 - alpha) * x_prev``."""
    if set(x_prev) != set(x_candidate):
        raise ValueError("assignments cover different variables")
    return {v: alpha * np.asarray(x_candidate[v], float) + (1 - alpha) * np.asarray(x_prev[v], float)
            for v in x_prev}


def solve_convex(p: Problem, tol: float = 1e-8, max_iter: int = 100):
    """Solve a DCP problem; returns ``(assignment, value)`` over all its variables."""
    cp, rec = canonicalize(p)
    sol = solve_cone(cp, tol=tol, max_iter=max_iter)
    ok = sol.status is ConeStatus.OPTIMAL or (
        sol.status is ConeStatus.MAX_ITER and sol.residuals.max() <= ACCEPT_RESIDUAL
    )
    if not ok:
        raise SubproblemFailed(
            f"cone solver returned {sol.status.value} (residual {sol.residuals.max():.2e})"
        )
    return recover(rec, sol.x), cp.problem_value(sol.objective)


def problem_domain(p: Problem) -> DomainConstraints:
    d = DomainConstraints()
    d.extend(domain(p.objective))
    for c in p.constraints:
        d.extend(domain(c.lhs))
        d.extend(domain(c.rhs))
    return d


def _draw(variables, rng) -> dict:
    return {v: rng.standard_normal(v.shape) for v in variables}


def initialize(p: Problem, k_ini: int, rng, tol: float = 1e-8) -> dict:
    """Average of ``k_ini`` Gaussian draws, each projected onto the problem's domain."""
    variables = p.variables()
    dom = problem_domain(p)
    draws = [_draw(variables, rng) for _ in range(k_ini)]
    if not len(dom):
        return {v: np.mean([d[v] for d in draws], axis=0) for v in variables}
    projections = []
    for z in draws:
        gap = vstack([Reshape(v - z[v], (v.size, 1)) for v in variables])
        proj = Problem(norm2(gap), dom.constraints, sense="minimize")
        try:
            x, _ = solve_convex(proj, tol=tol)
        except SubproblemFailed as exc:
            raise InitializationFailed(f"projection onto the domain failed: {exc}") from exc
        projections.append(x)
    return {v: np.mean([x[v] for x in projections], axis=0) for v in variables}


def _objective_or_none(p: Problem, x) -> float | None:
    try:
        return p.objective_value(x)
    except DomainViolation:
        return None


def _violation(p: Problem, x) -> float:
    try:
        return p.max_violation(x)
    except DomainViolation:
        return math.inf


def _gradients_exist(sub, x) -> bool:
    try:
        sub.update(x)
    except (DomainViolation, NotDifferentiable):
        return False
    return True


def _run(p: Problem, params: CcpParams, rng, initial: Mapping | None) -> SolveResult:
    variables = p.variables()
    sub = build_penalty_subproblem(p, None, params.tau0)

    x = None
    for _ in range(INIT_ROUNDS):
        given = {v: np.asarray(initial[v], float).reshape(v.shape) for v in variables
                 if initial and v in initial}
        start = {}
        if len(given) < len(variables):
            try:
                start = initialize(p, params.k_ini, rng, params.solver_tol)
            except InitializationFailed as exc:
                return SolveResult(CcpStatus.INITIALIZATION_FAILED, {}, message=str(exc))
        start.update(given)
        if _gradients_exist(sub, start):
            x = start
            break
        # a user point without gradients is dropped in favour of fresh draws
        initial = None
    if x is None:
        return SolveResult(CcpStatus.INITIALIZATION_FAILED, {},
                           message="no starting point with gradients available")

    trace: list[IterationRecord] = []
    tau = params.tau0
    status = CcpStatus.MAX_ITERATIONS
    prev = None
    for k in range(params.max_iter):
        # linearizations already sit at x: it passed the gradient check
        sub.tau.value = tau
        try:
            cand, pen = solve_convex(sub.base, params.solver_tol, params.solver_max_iter)
        except SubproblemFailed as exc:
            return SolveResult(CcpStatus.SUBPROBLEM_FAILED, x, trace, objective=_objective_or_none(p, x),
                               max_violation=_violation(p, x), message=f"iteration {k}: {exc}")
        slack = sub.max_slack(cand)
        x_new = {v: cand[v] for v in variables}
        damped = False
        if not sub.is_trivial:
            tries = 0
            while not _gradients_exist(sub, x_new):
                if tries == MAX_DAMPING:
                    return SolveResult(CcpStatus.SUBPROBLEM_FAILED, x, trace,
                                       objective=_objective_or_none(p, x), max_violation=_violation(p, x),
                                       message=f"iteration {k}: gradients missing after damping")
                x_new = damp(x, x_new, params.alpha)
                damped = True
                tries += 1
        x = x_new
        trace.append(IterationRecord(k, _objective_or_none(p, x), pen, slack, tau, damped))
        if sub.is_trivial:
            status = CcpStatus.CONVERGED
            break
        if (prev is not None and abs(pen - prev) <= params.tol_obj * max(1.0, abs(prev))
                and slack <= params.tol_slack
                and _violation(p, x) <= params.tol_slack + 1e-6):
            status = CcpStatus.CONVERGED
            break
        prev = pen
        tau = tau_update(tau, params.mu, params.tau_max)

    return SolveResult(status, x, trace, objective=_objective_or_none(p, x), max_violation=_violation(p, x))


def _rank(p: Problem, params: CcpParams, r: SolveResult):
    """Sort key: feasible runs by objective, then infeasible runs by slack, then failures."""
    if r.status in (CcpStatus.INITIALIZATION_FAILED, CcpStatus.SUBPROBLEM_FAILED):
        return (2, 0.0)
    slack = r.trace[-1].max_slack if r.trace else math.inf
    if slack <= params.tol_slack and r.max_violation <= params.tol_slack + 1e-6:
        obj = r.objective if r.objective is not None else math.inf
        return (0, obj if p.minimize else -obj)
    return (1, slack)


def solve_dccp(p: Problem, params: CcpParams | None = None, initial: Mapping | None = None,
               **overrides) -> SolveResult:
    """Run penalty CCP on a DCCP problem.

    Initial values come from ``initial`` or from variables with a ``value``
    set; they seed the first restart only. Failures are reported through
    ``SolveResult.status`` rather than raised.
    """
    params = params or CcpParams()
    if overrides:
        params = CcpParams(**{**params.to_dict(), **overrides})
    if not is_dccp(p):
        raise NotDccp("problem has an expression of unknown curvature")
    p = split_equalities(p)

    if is_dcp(p):
        try:
            x, value = solve_convex(p, params.solver_tol, params.solver_max_iter)
        except SubproblemFailed as exc:
            return SolveResult(CcpStatus.SUBPROBLEM_FAILED, {}, message=str(exc))
        x = {v: x[v] for v in p.variables()}
        rec = IterationRecord(0, _objective_or_none(p, x), value, 0.0, params.tau0)
        return SolveResult(CcpStatus.CONVERGED, x, [rec], objective=rec.objective,
                           max_violation=_violation(p, x))

    given = dict(initial or {})
    for v in p.variables():
        if v not in given and v.value is not None:
            given[v] = v.value

    streams = np.random.SeedSequence(params.rng_seed).spawn(params.restarts)
    results = []
    for r, seq in enumerate(streams):
        rng = np.random.default_rng(seq)
        res = _run(p, params, rng, given if (r == 0 and given) else None)
        res.best_restart = r
        results.append(res)
        log.debug("restart %d: %s objective=%s", r, res.status.value, res.objective)

    best = min(results, key=lambda res: _rank(p, params, res))
    if _rank(p, params, best)[0] == 1:
        best.status = CcpStatus.MAX_ITERATIONS
    return best


__all__ = [
    "CcpStatus", "CcpParams", "IterationRecord", "SolveResult", "tau_update", "damp",
    "initialize", "solve_dccp", "solve_convex", "problem_domain",
]
