"""Nonlinear atoms and expression builders.

Convex: square, abs, pos, norm1, norm2, norm_inf, max_entries, maximum,
sum_squares. Concave: sqrt, min_entries, minimum.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import DomainViolation, NotDifferentiable, ShapeError
from .expr import (
    DECREASING,
    INCREASING,
    Constraint,
    Curvature,
    Expression,
    HStack,
    Reshape,
    Sign,
    Sum,
    Trace,
    VStack,
    as_expr,
    promote_all,
    vec,
)


def _sign_mono(arg: Expression):
    """Monotonicity of |x|-like atoms: increasing on x >= 0, decreasing on x <= 0."""
    if arg.sign.is_nonneg:
        return INCREASING
    if arg.sign.is_nonpos:
        return DECREASING
    return None


def _row(values: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(np.asarray(values, dtype=float).reshape(1, -1))


class Elementwise(Expression):
    """Atoms applied entry by entry; the Jacobian is diagonal."""

    def __init__(self, arg):
        super().__init__(arg, shape=arg.shape)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def local_jacobians(self, values):
        return [sp.diags(self.derivative(vec(values[0])), format="csr")]

    def vjp(self, values, adj):
        return [adj * self.derivative(vec(values[0]))[None, :]]


class Square(Elementwise):
    atom_curvature = Curvature.CONVEX

    def monotonicity(self, i):
        return _sign_mono(self.args[0])

    def sign_rule(self):
        return Sign.POSITIVE

    def numeric(self, values):
        return values[0] ** 2

    def derivative(self, x):
        return 2.0 * x


class Abs(Elementwise):
    atom_curvature = Curvature.CONVEX

    def monotonicity(self, i):
        return _sign_mono(self.args[0])

    def sign_rule(self):
        return Sign.POSITIVE

    def numeric(self, values):
        return np.abs(values[0])

    def derivative(self, x):
        return np.sign(x)


class Pos(Elementwise):
    atom_curvature = Curvature.CONVEX

    def sign_rule(self):
        return Sign.POSITIVE

    def numeric(self, values):
        return np.maximum(values[0], 0.0)

    def derivative(self, x):
        return (x > 0).astype(float)


class Sqrt(Elementwise):
    atom_curvature = Curvature.CONCAVE

    def sign_rule(self):
        return Sign.POSITIVE

    def domain_rule(self):
        return [Constraint(self.args[0], ">=", 0.0)]

    def numeric(self, values):
        x = values[0]
        if np.any(x < 0):
            raise DomainViolation(f"sqrt of negative value {float(x.min()):g}")
        return np.sqrt(x)

    def derivative(self, x):
        if np.any(x < 0):
            raise DomainViolation(f"sqrt of negative value {float(x.min()):g}")
        if np.any(x == 0):
            raise NotDifferentiable("sqrt has no supergradient at 0")
        return 0.5 / np.sqrt(x)


class Reduction(Expression):
    def __init__(self, arg):
        super().__init__(arg, shape=(1, 1))


class SumSquares(Reduction):
    atom_curvature = Curvature.CONVEX

    def monotonicity(self, i):
        return _sign_mono(self.args[0])

    def sign_rule(self):
        return Sign.POSITIVE

    def numeric(self, values):
        return np.array([[np.sum(values[0] ** 2)]])

    def local_jacobians(self, values):
        return [_row(2.0 * vec(values[0]))]


class Norm1(Reduction):
    atom_curvature = Curvature.CONVEX

    def monotonicity(self, i):
        return _sign_mono(self.args[0])

    def sign_rule(self):
        return Sign.POSITIVE

    def numeric(self, values):
        return np.array([[np.abs(values[0]).sum()]])

    def local_jacobians(self, values):
        return [_row(np.sign(vec(values[0])))]


class Norm2(Reduction):
    """Euclidean norm of all entries (Frobenius norm for matrices)."""

    atom_curvature = Curvature.CONVEX

    def monotonicity(self, i):
        return _sign_mono(self.args[0])

    def sign_rule(self):
        return Sign.POSITIVE

    def numeric(self, values):
        return np.array([[np.linalg.norm(values[0])]])

    def local_jacobians(self, values):
        x = vec(values[0])
        nrm = np.linalg.norm(x)
        if nrm == 0:
            return [_row(np.zeros_like(x))]
        return [_row(x / nrm)]


def _active_average(mask: np.ndarray) -> np.ndarray:
    return mask.astype(float) / mask.sum()


class NormInf(Reduction):
    atom_curvature = Curvature.CONVEX

    def monotonicity(self, i):
        return _sign_mono(self.args[0])

    def sign_rule(self):
        return Sign.POSITIVE

    def numeric(self, values):
        return np.array([[np.abs(values[0]).max()]])

    def local_jacobians(self, values):
        x = vec(values[0])
        a = np.abs(x)
        top = a.max()
        if top == 0:
            return [_row(np.zeros_like(x))]
        return [_row(np.sign(x) * _active_average(a == top))]


class MaxEntries(Reduction):
    atom_curvature = Curvature.CONVEX

    def sign_rule(self):
        return self.args[0].sign

    def numeric(self, values):
        return np.array([[values[0].max()]])

    def local_jacobians(self, values):
        x = vec(values[0])
        return [_row(_active_average(x == x.max()))]


class MinEntries(Reduction):
    atom_curvature = Curvature.CONCAVE

    def sign_rule(self):
        return self.args[0].sign

    def numeric(self, values):
        return np.array([[values[0].min()]])

    def local_jacobians(self, values):
        x = vec(values[0])
        return [_row(_active_average(x == x.min()))]


class _ElementwiseExtreme(Expression):
    pick = staticmethod(np.maximum)

    def __init__(self, *args):
        if len(args) < 2:
            raise ShapeError("need at least two arguments")
        args = promote_all(args)
        super().__init__(*args, shape=args[0].shape)

    def numeric(self, values):
        out = values[0]
        for v in values[1:]:
            out = self.pick(out, v)
        return out

    def local_jacobians(self, values):
        flat = np.stack([vec(v) for v in values])
        best = self.pick.reduce(flat, axis=0)
        active = flat == best
        weights = active / active.sum(axis=0)
        return [sp.diags(w, format="csr") for w in weights]


class Maximum(_ElementwiseExtreme):
    atom_curvature = Curvature.CONVEX
    pick = staticmethod(np.maximum)

    def sign_rule(self):
        signs = [a.sign for a in self.args]
        if any(s.is_nonneg for s in signs):
            return Sign.POSITIVE
        if all(s.is_nonpos for s in signs):
            return Sign.NEGATIVE
        return Sign.UNKNOWN


class Minimum(_ElementwiseExtreme):
    atom_curvature = Curvature.CONCAVE
    pick = staticmethod(np.minimum)

    def sign_rule(self):
        signs = [a.sign for a in self.args]
        if any(s.is_nonpos for s in signs):
            return Sign.NEGATIVE
        if all(s.is_nonneg for s in signs):
            return Sign.POSITIVE
        return Sign.UNKNOWN


# -- builders ----------------------------------------------------------------------


def square(x):
    return Square(as_expr(x))


def abs_(x):
    return Abs(as_expr(x))


def pos(x):
    return Pos(as_expr(x))


def sqrt(x):
    return Sqrt(as_expr(x))


def sum_squares(x):
    return SumSquares(as_expr(x))


def norm1(x):
    return Norm1(as_expr(x))


def norm2(x):
    return Norm2(as_expr(x))


def norm_inf(x):
    return NormInf(as_expr(x))


def norm(x, p=2):
    if p in (2, "2", "fro"):
        return norm2(x)
    if p in (1, "1"):
        return norm1(x)
    if p in (np.inf, "inf"):
        return norm_inf(x)
    raise ValueError(f"unsupported norm {p!r}")


def max_entries(x):
    return MaxEntries(as_expr(x))


def min_entries(x):
    return MinEntries(as_expr(x))


def maximum(*args):
    return Maximum(*args)


def minimum(*args):
    return Minimum(*args)


def sum_entries(x, axis=None):
    return Sum(as_expr(x), axis=axis)


def trace(x):
    return Trace(as_expr(x))


def reshape(x, shape):
    return Reshape(as_expr(x), shape)


def vectorize(x):
    x = as_expr(x)
    return Reshape(x, (x.size, 1))


def hstack(args):
    return HStack(*args)


def vstack(args):
    return VStack(*args)


def broadcast(x, shape):
    from .expr import Promote

    return Promote(as_expr(x), shape)


__all__ = [
    "square", "abs_", "pos", "sqrt", "sum_squares", "norm1", "norm2", "norm_inf", "norm",
    "max_entries", "min_entries", "maximum", "minimum", "sum_entries", "trace", "reshape",
    "vectorize", "hstack", "vstack", "broadcast",
    "Square", "Abs", "Pos", "Sqrt", "SumSquares", "Norm1", "Norm2", "NormInf",
    "MaxEntries", "MinEntries", "Maximum", "Minimum",
]
