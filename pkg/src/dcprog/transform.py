"""Problem-level DCP/DCCP checks, linearization and convexification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import DomainConstraints, domain
from .errors import NotDccp, ShapeError
from .expr import (
    Constraint,
    Curvature,
    Expression,
    Parameter,
    AffineMap,
    Variable,
    as_expr,
    evaluate,
    jacobians,
    vec,
)
from .atoms import sum_entries


class Minimize:
    sense = "minimize"

    def __init__(self, expr):
        self.expr = as_expr(expr)


class Maximize:
    sense = "maximize"

    def __init__(self, expr):
        self.expr = as_expr(expr)


class Problem:
    """``minimize/maximize objective subject to constraints``."""

    def __init__(self, objective, constraints: Sequence[Constraint] = (), sense: str | None = None):
        if isinstance(objective, (Minimize, Maximize)):
            sense, objective = objective.sense, objective.expr
        if sense not in ("minimize", "maximize"):
            raise ValueError("sense must be 'minimize' or 'maximize'")
        self.sense = sense
        self.objective = as_expr(objective)
        if not self.objective.is_scalar:
            raise ShapeError("objective must be scalar")
        self.constraints = list(constraints)

    @property
    def minimize(self) -> bool:
        return self.sense == "minimize"

    def variables(self) -> list[Variable]:
        found = {v.id: v for v in self.objective.variables()}
        for c in self.constraints:
            found.update((v.id, v) for v in c.variables())
        return [found[k] for k in sorted(found)]

    def objective_value(self, assignment=None) -> float:
        return float(evaluate(self.objective, assignment)[0, 0])

    def max_violation(self, assignment=None) -> float:
        return max((c.violation(assignment) for c in self.constraints), default=0.0)

    def is_dcp(self) -> bool:
        return is_dcp(self)

    def is_dccp(self) -> bool:
        return is_dccp(self)

    def __repr__(self):
        lines = [f"{self.sense} {self.objective.name()}"]
        lines += [f"  s.t. {c!r}" for c in self.constraints]
        return "\n".join(lines)


def _objective_ok(p: Problem) -> bool:
    c = p.objective.curvature
    return c.is_convex if p.minimize else c.is_concave


def is_dcp(p: Problem) -> bool:
    return _objective_ok(p) and all(c.is_dcp() for c in p.constraints)


def is_dccp(p: Problem) -> bool:
    return p.objective.curvature is not Curvature.UNKNOWN and all(
        c.is_dccp() for c in p.constraints
    )


def split_equalities(p: Problem) -> Problem:
    """Replace each non-affine equality ``l == r`` with ``l <= r`` and ``l >= r``."""
    out = []
    for c in p.constraints:
        if c.relop == "==" and not (c.lhs.curvature.is_affine and c.rhs.curvature.is_affine):
            out.append(Constraint(c.lhs, "<=", c.rhs))
            out.append(Constraint(c.lhs, ">=", c.rhs))
        else:
            out.append(c)
    return Problem(p.objective, out, sense=p.sense)


class LinearizedExpression:
    """First-order expansion of a convex or concave expression, plus its domain.

    The expansion point enters only through parameters, so ``update`` moves the
    linearization without rebuilding the expression.
    """

    def __init__(self, source: Expression, point: Mapping | None = None):
        self.source = as_expr(source)
        curv = self.source.curvature
        if curv is Curvature.UNKNOWN:
            raise NotDccp(f"cannot linearize {self.source!r}: unknown curvature")
        self.is_affine = curv.is_affine
        if self.is_affine:
            self.affine = self.source
            self.domain = DomainConstraints()
        else:
            self.domain = domain(self.source)
            size = self.source.size
            self._offset = Parameter((size, 1), name="lin_offset")
            self._vars = self.source.variables()
            self._grads = [Parameter((size, v.size), name=f"lin_grad_{v.name()}") for v in self._vars]
            self._points = [Parameter((v.size, 1), name=f"lin_point_{v.name()}") for v in self._vars]
            self.affine = AffineMap(self._vars, self._grads, self._offset, self.source.shape,
                                    points=self._points)
        if point is not None:
            self.update(point)

    def update(self, point: Mapping | None) -> None:
        """Move the expansion point; raises DomainViolation / NotDifferentiable."""
        if self.is_affine:
            return
        val = evaluate(self.source, point)
        jac = jacobians(self.source, point)
        # assigned only after every gradient exists, so a failure leaves the old point intact
        for v, gp, zp in zip(self._vars, self._grads, self._points):
            gp.value = jac[v].toarray()
            zp.value = vec(evaluate(v, point)).reshape(-1, 1)
        self._offset.value = vec(val).reshape(-1, 1)

    def __repr__(self):
        return f"LinearizedExpression({self.source!r})"


def linearize(e, z: Mapping | None = None) -> LinearizedExpression:
    return LinearizedExpression(e, z)


def _sides_to_linearize(c: Constraint) -> tuple[bool, bool]:
    lc, rc = c.lhs.curvature, c.rhs.curvature
    if Curvature.UNKNOWN in (lc, rc):
        raise NotDccp(f"constraint {c!r} has an expression of unknown curvature")
    if c.relop == "==":
        if not (lc.is_affine and rc.is_affine):
            raise NotDccp(f"non-affine equality {c!r}; split equalities first")
        return False, False
    if c.relop == "<=":
        return not lc.is_convex, not rc.is_concave
    return not lc.is_concave, not rc.is_convex


def convexify_constraint(c: Constraint, z: Mapping | None = None):
    """DCP restriction of ``c`` at ``z`` (no slack) and the linearizations' domains."""
    lin_l, lin_r = _sides_to_linearize(c)
    if not (lin_l or lin_r):
        return [c], DomainConstraints()
    dom = DomainConstraints()
    lhs, rhs = c.lhs, c.rhs
    if lin_l:
        lin = LinearizedExpression(c.lhs, z)
        lhs = lin.affine
        dom.extend(lin.domain)
    if lin_r:
        lin = LinearizedExpression(c.rhs, z)
        rhs = lin.affine
        dom.extend(lin.domain)
    return [Constraint(lhs, c.relop, rhs)], dom


@dataclass
class PenaltySubproblem:
    """Convex restriction solved at every CCP iteration.

    ``base`` is DCP; its parameters (linearization points and ``tau``) are
    refreshed by ``update``.
    """

    base: Problem
    source: Problem
    tau: Parameter
    slacks: list[Variable] = field(default_factory=list)
    linearizations: list[LinearizedExpression] = field(default_factory=list)
    objective_linearization: LinearizedExpression | None = None

    @property
    def is_trivial(self) -> bool:
        """True when nothing is linearized (the source problem is DCP)."""
        return not self.linearizations

    def update(self, point: Mapping | None, tau: float | None = None) -> None:
        for lin in self.linearizations:
            lin.update(point)
        if tau is not None:
            self.tau.value = tau

    def max_slack(self, assignment: Mapping) -> float:
        vals = [np.max(evaluate(s, assignment)) for s in self.slacks]
        return float(max(vals, default=0.0))


def build_penalty_subproblem(p: Problem, z: Mapping | None, tau: float) -> PenaltySubproblem:
    if not is_dccp(p):
        raise NotDccp("problem is not DCCP")
    p = split_equalities(p)
    tau_param = Parameter((1, 1), value=tau, name="tau", nonneg=True)
    lins: list[LinearizedExpression] = []
    dom = DomainConstraints()

    objective = p.objective
    obj_lin = None
    if not _objective_ok(p):
        obj_lin = LinearizedExpression(p.objective)
        lins.append(obj_lin)
        objective = obj_lin.affine
        dom.extend(obj_lin.domain)

    constraints: list[Constraint] = []
    slacks: list[Variable] = []
    for c in p.constraints:
        lin_l, lin_r = _sides_to_linearize(c)
        if not (lin_l or lin_r):
            constraints.append(c)
            continue
        lhs, rhs = c.lhs, c.rhs
        for flag, side in ((lin_l, "lhs"), (lin_r, "rhs")):
            if flag:
                lin = LinearizedExpression(getattr(c, side))
                lins.append(lin)
                dom.extend(lin.domain)
                if side == "lhs":
                    lhs = lin.affine
                else:
                    rhs = lin.affine
        s = Variable(c.shape, name=f"slack{len(slacks)}")
        slacks.append(s)
        if c.relop == "<=":
            constraints.append(Constraint(lhs, "<=", rhs + s))
        else:
            constraints.append(Constraint(lhs + s, ">=", rhs))

    constraints += [Constraint(s, ">=", 0.0) for s in slacks]
    constraints += dom.constraints
    if slacks:
        total = sum_entries(slacks[0])
        for s in slacks[1:]:
            total = total + sum_entries(s)
        penalty = tau_param * total
        objective = objective + penalty if p.minimize else objective - penalty
    base = Problem(objective, constraints, sense=p.sense)
    sub = PenaltySubproblem(base, p, tau_param, slacks, lins, obj_lin)
    if z is not None:
        sub.update(z)
    return sub


__all__ = [
    "Minimize", "Maximize", "Problem", "is_dcp", "is_dccp", "split_equalities",
    "LinearizedExpression", "linearize", "convexify_constraint", "PenaltySubproblem",
    "build_penalty_subproblem",
]
