"""Expression trees with DCP curvature and sign inference.

Every node has a 2-D shape (scalars are 1x1, vectors are n x 1). Values are
dense float arrays; Jacobians are taken with respect to the column-major
(Fortran order) flattening of both the expression and the variable.
"""

from __future__ import annotations

import enum
import itertools
from functools import cached_property
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .errors import NotDifferentiable, ShapeError


class Curvature(enum.Enum):
    CONSTANT = "constant"
    AFFINE = "affine"
    CONVEX = "convex"
    CONCAVE = "concave"
    UNKNOWN = "unknown"

    @property
    def is_constant(self) -> bool:
        return self is Curvature.CONSTANT

    @property
    def is_affine(self) -> bool:
        return self in (Curvature.CONSTANT, Curvature.AFFINE)

    @property
    def is_convex(self) -> bool:
        return self in (Curvature.CONSTANT, Curvature.AFFINE, Curvature.CONVEX)

    @property
    def is_concave(self) -> bool:
        return self in (Curvature.CONSTANT, Curvature.AFFINE, Curvature.CONCAVE)


class Sign(enum.Enum):
    POSITIVE = "positive"  # elementwise >= 0
    NEGATIVE = "negative"  # elementwise <= 0
    ZERO = "zero"
    UNKNOWN = "unknown"

    @property
    def is_nonneg(self) -> bool:
        return self in (Sign.POSITIVE, Sign.ZERO)

    @property
    def is_nonpos(self) -> bool:
        return self in (Sign.NEGATIVE, Sign.ZERO)

    def __neg__(self) -> Sign:
        return {Sign.POSITIVE: Sign.NEGATIVE, Sign.NEGATIVE: Sign.POSITIVE}.get(self, self)

    @classmethod
    def of_value(cls, value: np.ndarray) -> Sign:
        if np.all(value == 0):
            return cls.ZERO
        if np.all(value >= 0):
            return cls.POSITIVE
        if np.all(value <= 0):
            return cls.NEGATIVE
        return cls.UNKNOWN


def sign_sum(signs) -> Sign:
    signs = list(signs)
    if all(s is Sign.ZERO for s in signs):
        return Sign.ZERO
    if all(s.is_nonneg for s in signs):
        return Sign.POSITIVE
    if all(s.is_nonpos for s in signs):
        return Sign.NEGATIVE
    return Sign.UNKNOWN


def sign_product(a: Sign, b: Sign) -> Sign:
    if a is Sign.ZERO or b is Sign.ZERO:
        return Sign.ZERO
    if Sign.UNKNOWN in (a, b):
        return Sign.UNKNOWN
    return Sign.POSITIVE if a is b else Sign.NEGATIVE


INCREASING = "increasing"
DECREASING = "decreasing"

_ids = itertools.count()


def vec(value: np.ndarray) -> np.ndarray:
    """Column-major flattening."""
    return np.asarray(value, dtype=float).reshape(-1, order="F")


def _as_shape(shape) -> tuple[int, int]:
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape), 1)
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        shape = (1, 1)
    elif len(shape) == 1:
        shape = (shape[0], 1)
    if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
        raise ShapeError(f"invalid shape {shape}")
    return shape


def as_matrix(value) -> np.ndarray:
    """Coerce a number or array to a 2-D float array (1-D becomes a column)."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got {arr.ndim}")
    return arr


def as_expr(obj) -> Expression:
    if isinstance(obj, Expression):
        return obj
    if sp.issparse(obj):
        obj = obj.toarray()
    return Constant(obj)


class Expression:
    """Immutable expression node.

    Subclasses define the numeric value, the local Jacobians with respect to
    each argument, and the DCP metadata (atom curvature, per-argument
    monotonicity, sign rule).
    """

    __array_priority__ = 100
    __hash__ = object.__hash__

    # Curvature of the atom as a function of its arguments.
    atom_curvature = Curvature.AFFINE

    def __init__(self, *args: Expression, shape):
        self.args = tuple(args)
        self.shape = _as_shape(shape)

    # -- shape ---------------------------------------------------------------

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def is_scalar(self) -> bool:
        return self.shape == (1, 1)

    def vjp(self, values, adj: np.ndarray) -> list:
        """Row-vector products ``adj @ J_i`` with each local Jacobian (dense)."""
        return [np.asarray(adj @ d) for d in self.local_jacobians(values)]

    # -- DCP analysis --------------------------------------------------------

    def monotonicity(self, i: int):
        """INCREASING, DECREASING or None for argument ``i``."""
        return INCREASING

    def sign_rule(self) -> Sign:
        return Sign.UNKNOWN

    def domain_rule(self) -> list:
        """Constraints on this node's arguments required by the atom itself."""
        return []

    @cached_property
    def curvature(self) -> Curvature:
        if self.args and all(a.curvature.is_constant for a in self.args):
            return Curvature.CONSTANT
        f = self.atom_curvature
        convex = f.is_convex and f is not Curvature.UNKNOWN
        concave = f.is_concave and f is not Curvature.UNKNOWN
        for i, arg in enumerate(self.args):
            c = arg.curvature
            if c.is_affine:
                continue
            mono = self.monotonicity(i)
            convex = convex and (
                (mono == INCREASING and c.is_convex) or (mono == DECREASING and c.is_concave)
            )
            concave = concave and (
                (mono == INCREASING and c.is_concave) or (mono == DECREASING and c.is_convex)
            )
        if convex and concave:
            return Curvature.AFFINE
        if convex:
            return Curvature.CONVEX
        if concave:
            return Curvature.CONCAVE
        return Curvature.UNKNOWN

    @cached_property
    def sign(self) -> Sign:
        return self.sign_rule()

    @property
    def is_dcp(self) -> bool:
        return self.curvature is not Curvature.UNKNOWN

    # -- numerics ------------------------------------------------------------

    def numeric(self, values: list[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def local_jacobians(self, values: list[np.ndarray]) -> list:
        """Sparse Jacobians (self.size x arg.size) of the atom w.r.t. each argument."""
        raise NotImplementedError

    def variables(self) -> list[Variable]:
        found: dict[int, Variable] = {}
        for node in _postorder(self):
            if isinstance(node, Variable):
                found[node.id] = node
        return [found[k] for k in sorted(found)]

    def parameters(self) -> list[Parameter]:
        found: dict[int, Parameter] = {}
        for node in _postorder(self):
            if isinstance(node, Parameter):
                found[node.id] = node
        return [found[k] for k in sorted(found)]

    @property
    def value(self):
        """Value at the variables' current ``.value`` (None if any is unset)."""
        try:
            return evaluate(self)
        except KeyError:
            return None

    # -- structural identity -------------------------------------------------

    def _key_data(self):
        return ()

    @cached_property
    def key(self) -> tuple:
        return (type(self).__name__, self.shape, self._key_data(), tuple(a.key for a in self.args))

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Add(self, -as_expr(other))

    def __rsub__(self, other):
        return Add(as_expr(other), -self)

    def __neg__(self):
        return Negate(self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        other = as_expr(other)
        if not (other.curvature.is_constant and other.is_scalar):
            raise ShapeError("can only divide by a scalar constant")
        if isinstance(other, Constant):
            return multiply(1.0 / other.data, self)
        raise ShapeError("division by a parameter is not supported")

    def __matmul__(self, other):
        return MatMul(self, as_expr(other))

    def __rmatmul__(self, other):
        return MatMul(as_expr(other), self)

    def __getitem__(self, key):
        return Index(self, key)

    def __abs__(self):
        from .atoms import abs_
        return abs_(self)

    @property
    def T(self):
        return Transpose(self)

    def __le__(self, other):
        return Constraint(self, "<=", other)

    def __ge__(self, other):
        return Constraint(self, ">=", other)

    def __eq__(self, other):
        return Constraint(self, "==", other)

    def __repr__(self):
        return self.name()

    def name(self) -> str:
        inner = ", ".join(a.name() for a in self.args)
        return f"{type(self).__name__.lower()}({inner})"


# -- leaves ------------------------------------------------------------------


class Leaf(Expression):
    def __init__(self, shape):
        super().__init__(shape=shape)


class Variable(Leaf):
    """Optimization variable. ``value`` optionally holds a user-supplied initial point."""

    def __init__(self, *shape, name: str | None = None, value=None):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        super().__init__(shape if shape else (1, 1))
        self.id = next(_ids)
        self._name = name or f"var{self.id}"
        self._value = None
        if value is not None:
            self.value = value

    @property
    def curvature(self):
        return Curvature.AFFINE

    @property
    def sign(self):
        return Sign.UNKNOWN

    @property
    def value(self):
        return self._value

    @value.setter
    def value(self, val):
        if val is None:
            self._value = None
            return
        arr = np.asarray(val, dtype=float)
        if arr.size != self.size:
            raise ShapeError(f"value of size {arr.size} for variable of shape {self.shape}")
        self._value = arr.reshape(self.shape, order="F") if arr.ndim < 2 else arr.reshape(self.shape)

    def _key_data(self):
        return ("var", self.id)

    def name(self):
        return self._name


class Parameter(Leaf):
    """A constant whose value may change after the expression is built.

    The sign used for DCP analysis is declared (``nonneg``/``nonpos``), never
    read from the current value.
    """

    def __init__(self, shape=None, value=None, name=None, nonneg=False, nonpos=False):
        if shape is None:
            shape = as_matrix(value).shape
        super().__init__(shape)
        self.id = next(_ids)
        self._name = name or f"param{self.id}"
        self.nonneg = nonneg
        self.nonpos = nonpos
        self._value = None
        if value is not None:
            self.value = value

    @property
    def curvature(self):
        return Curvature.CONSTANT

    @property
    def sign(self):
        if self.nonneg and self.nonpos:
            return Sign.ZERO
        if self.nonneg:
            return Sign.POSITIVE
        if self.nonpos:
            return Sign.NEGATIVE
        return Sign.UNKNOWN

    @property
    def value(self):
        return self._value

    @value.setter
    def value(self, val):
        arr = as_matrix(val)
        if arr.size != self.size:
            raise ShapeError(f"value of size {arr.size} for parameter of shape {self.shape}")
        arr = arr.reshape(self.shape, order="F")
        if self.nonneg and np.any(arr < 0):
            raise ValueError("negative value for nonnegative parameter")
        if self.nonpos and np.any(arr > 0):
            raise ValueError("positive value for nonpositive parameter")
        self._value = arr

    def _key_data(self):
        return ("param", self.id)

    def name(self):
        return self._name


class Constant(Leaf):
    def __init__(self, value):
        data = as_matrix(value)
        super().__init__(data.shape)
        data.setflags(write=False)
        self.data = data

    @property
    def curvature(self):
        return Curvature.CONSTANT

    @cached_property
    def sign(self):
        return Sign.of_value(self.data)

    @property
    def value(self):
        return self.data

    def _key_data(self):
        return ("const", self.data.tobytes())

    def name(self):
        if self.is_scalar:
            return f"{self.data[0, 0]:g}"
        return f"const{self.shape}"


# -- affine atoms --------------------------------------------------------------


def _promote_pair(a: Expression, b: Expression) -> tuple[Expression, Expression]:
    if a.shape == b.shape:
        return a, b
    if a.is_scalar:
        return Promote(a, b.shape), b
    if b.is_scalar:
        return a, Promote(b, a.shape)
    raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")


def promote_all(args) -> list[Expression]:
    args = [as_expr(a) for a in args]
    shapes = {a.shape for a in args if not a.is_scalar}
    if len(shapes) > 1:
        raise ShapeError(f"incompatible shapes {sorted(shapes)}")
    if not shapes:
        return args
    shape = shapes.pop()
    return [Promote(a, shape) if a.shape != shape else a for a in args]


class Add(Expression):
    def __init__(self, *args):
        flat = []
        for a in args:
            flat.extend(a.args if isinstance(a, Add) else [a])
        flat = promote_all(flat)
        super().__init__(*flat, shape=flat[0].shape)

    def sign_rule(self):
        return sign_sum(a.sign for a in self.args)

    def numeric(self, values):
        return sum(values[1:], values[0].copy())

    def local_jacobians(self, values):
        eye = sp.identity(self.size, format="csr")
        return [eye] * len(self.args)

    def vjp(self, values, adj):
        return [adj] * len(self.args)

    def name(self):
        return "(" + " + ".join(a.name() for a in self.args) + ")"


class Negate(Expression):
    def __init__(self, arg):
        super().__init__(arg, shape=arg.shape)

    def monotonicity(self, i):
        return DECREASING

    def sign_rule(self):
        return -self.args[0].sign

    def numeric(self, values):
        return -values[0]

    def local_jacobians(self, values):
        return [-sp.identity(self.size, format="csr")]

    def vjp(self, values, adj):
        return [-adj]

    def name(self):
        return f"-{self.args[0].name()}"


class Promote(Expression):
    """Broadcast a scalar to a matrix shape."""

    def __init__(self, arg, shape):
        if not arg.is_scalar:
            raise ShapeError("only scalars can be broadcast")
        super().__init__(arg, shape=shape)

    def sign_rule(self):
        return self.args[0].sign

    def numeric(self, values):
        return np.full(self.shape, values[0][0, 0])

    def local_jacobians(self, values):
        return [sp.csr_matrix(np.ones((self.size, 1)))]

    def vjp(self, values, adj):
        return [adj.sum(axis=1, keepdims=True)]

    def name(self):
        return self.args[0].name()


def _constant_mono(other: Expression):
    if not other.curvature.is_constant:
        return None
    if other.sign.is_nonneg:
        return INCREASING
    if other.sign.is_nonpos:
        return DECREASING
    return None


class Multiply(Expression):
    """Elementwise product; either factor may be a scalar."""

    def __init__(self, a, b):
        if a.shape != b.shape and not (a.is_scalar or b.is_scalar):
            raise ShapeError(f"elementwise product of shapes {a.shape} and {b.shape}")
        shape = b.shape if a.is_scalar else a.shape
        super().__init__(a, b, shape=shape)

    @property
    def atom_curvature(self):
        if any(a.curvature.is_constant for a in self.args):
            return Curvature.AFFINE
        return Curvature.UNKNOWN

    def monotonicity(self, i):
        return _constant_mono(self.args[1 - i])

    def sign_rule(self):
        return sign_product(self.args[0].sign, self.args[1].sign)

    def numeric(self, values):
        return values[0] * values[1]

    def local_jacobians(self, values):
        jacs = []
        for i in range(2):
            mine, other = values[i], values[1 - i]
            if mine.size == 1 and self.size > 1:
                jacs.append(sp.csr_matrix(vec(other).reshape(-1, 1)))
            elif other.size == 1:
                jacs.append(other[0, 0] * sp.identity(self.size, format="csr"))
            else:
                jacs.append(sp.diags(vec(other), format="csr"))
        return jacs

    def name(self):
        return f"{self.args[0].name()} * {self.args[1].name()}"


def multiply(a, b) -> Expression:
    a, b = as_expr(a), as_expr(b)
    return Multiply(a, b)


class MatMul(Expression):
    def __init__(self, a, b):
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul of shapes {a.shape} and {b.shape}")
        super().__init__(a, b, shape=(a.shape[0], b.shape[1]))

    @property
    def atom_curvature(self):
        if any(a.curvature.is_constant for a in self.args):
            return Curvature.AFFINE
        return Curvature.UNKNOWN

    def monotonicity(self, i):
        return _constant_mono(self.args[1 - i])

    def sign_rule(self):
        return sign_product(self.args[0].sign, self.args[1].sign)

    def numeric(self, values):
        return values[0] @ values[1]

    def local_jacobians(self, values):
        a, b = values
        m, n = self.shape
        ja = sp.kron(sp.csr_matrix(b.T), sp.identity(m), format="csr")
        jb = sp.kron(sp.identity(n), sp.csr_matrix(a), format="csr")
        return [ja, jb]

    def name(self):
        return f"{self.args[0].name()} @ {self.args[1].name()}"


class Gather(Expression):
    """Affine atom whose output entries are copies of input entries.

    ``index`` maps each output entry (column-major) to a position in the
    concatenation of the arguments' column-major flattenings.
    """

    def __init__(self, *args, index: np.ndarray, shape):
        super().__init__(*args, shape=shape)
        self.index = np.asarray(index, dtype=np.int64)
        if self.index.size != self.size:
            raise ShapeError("gather index does not match output shape")

    def sign_rule(self):
        return sign_sum(a.sign for a in self.args)

    def numeric(self, values):
        flat = np.concatenate([vec(v) for v in values])
        return flat[self.index].reshape(self.shape, order="F")

    @cached_property
    def _selectors(self):
        total = sum(a.size for a in self.args)
        full = sp.csr_matrix(
            (np.ones(self.size), (np.arange(self.size), self.index)), shape=(self.size, total)
        )
        out, offset = [], 0
        for a in self.args:
            out.append(full[:, offset:offset + a.size].tocsr())
            offset += a.size
        return out

    def local_jacobians(self, values):
        return self._selectors

    def vjp(self, values, adj):
        total = sum(a.size for a in self.args)
        flat = np.zeros((adj.shape[0], total))
        np.add.at(flat.T, self.index, adj.T)
        out, offset = [], 0
        for a in self.args:
            out.append(flat[:, offset:offset + a.size])
            offset += a.size
        return out

    def _key_data(self):
        return ("gather", self.index.tobytes())


def _grid(shape, offset=0):
    return offset + np.arange(shape[0] * shape[1]).reshape(shape, order="F")


class Index(Gather):
    def __init__(self, arg, key):
        sel = np.asarray(_grid(arg.shape)[key])
        if sel.ndim == 0:
            sel = sel.reshape(1, 1)
        elif sel.ndim == 1:
            sel = sel.reshape(-1, 1)
        if sel.size == 0:
            raise ShapeError("empty selection")
        self._key_repr = repr(key)
        super().__init__(arg, index=vec(sel).astype(np.int64), shape=sel.shape)

    def name(self):
        return f"{self.args[0].name()}[{self._key_repr}]"


class Transpose(Gather):
    def __init__(self, arg):
        sel = _grid(arg.shape).T
        super().__init__(arg, index=vec(sel).astype(np.int64), shape=sel.shape)

    def name(self):
        return f"{self.args[0].name()}.T"


class Reshape(Gather):
    def __init__(self, arg, shape):
        shape = _as_shape(shape)
        if shape[0] * shape[1] != arg.size:
            raise ShapeError(f"cannot reshape {arg.shape} to {shape}")
        super().__init__(arg, index=np.arange(arg.size), shape=shape)


class HStack(Gather):
    def __init__(self, *args):
        args = [as_expr(a) for a in args]
        if len({a.shape[0] for a in args}) != 1:
            raise ShapeError("hstack arguments must have equal row counts")
        grids, offset = [], 0
        for a in args:
            grids.append(_grid(a.shape, offset))
            offset += a.size
        sel = np.hstack(grids)
        super().__init__(*args, index=vec(sel).astype(np.int64), shape=sel.shape)


class VStack(Gather):
    def __init__(self, *args):
        args = [as_expr(a) for a in args]
        if len({a.shape[1] for a in args}) != 1:
            raise ShapeError("vstack arguments must have equal column counts")
        grids, offset = [], 0
        for a in args:
            grids.append(_grid(a.shape, offset))
            offset += a.size
        sel = np.vstack(grids)
        super().__init__(*args, index=vec(sel).astype(np.int64), shape=sel.shape)


class Sum(Expression):
    def __init__(self, arg, axis=None):
        if axis not in (None, 0, 1):
            raise ValueError("axis must be None, 0 or 1")
        self.axis = axis
        shape = {None: (1, 1), 0: (1, arg.shape[1]), 1: (arg.shape[0], 1)}[axis]
        super().__init__(arg, shape=shape)

    def sign_rule(self):
        return self.args[0].sign

    def numeric(self, values):
        if self.axis is None:
            return np.array([[values[0].sum()]])
        return values[0].sum(axis=self.axis, keepdims=True)

    @cached_property
    def _jac(self):
        m, n = self.args[0].shape
        if self.axis is None:
            return sp.csr_matrix(np.ones((1, m * n)))
        if self.axis == 0:
            return sp.kron(sp.identity(n), np.ones((1, m)), format="csr")
        return sp.kron(np.ones((1, n)), sp.identity(m), format="csr")

    def local_jacobians(self, values):
        return [self._jac]

    def _key_data(self):
        return (self.axis,)


class Trace(Expression):
    def __init__(self, arg):
        if arg.shape[0] != arg.shape[1]:
            raise ShapeError("trace of a non-square matrix")
        super().__init__(arg, shape=(1, 1))

    def sign_rule(self):
        return self.args[0].sign

    def numeric(self, values):
        return np.array([[np.trace(values[0])]])

    def local_jacobians(self, values):
        m = self.args[0].shape[0]
        cols = np.arange(m) * (m + 1)
        return [sp.csr_matrix((np.ones(m), (np.zeros(m, dtype=int), cols)), shape=(1, m * m))]


# -- constraints ---------------------------------------------------------------


class AffineMap(Expression):
    """``offset + sum_i coeffs[i] @ (vec(args[i]) - points[i])`` reshaped to ``shape``.

    ``offset``, ``coeffs`` and ``points`` are parameters, so the map can be
    moved without rebuilding the expression. ``points`` defaults to zero.
    """

    def __init__(self, args, coeffs, offset, shape, points=None):
        args = [as_expr(a) for a in args]
        shape = _as_shape(shape)
        for a, m in zip(args, coeffs):
            if m.shape != (shape[0] * shape[1], a.size):
                raise ShapeError(f"coefficient shape {m.shape} does not fit {a.shape} -> {shape}")
        if offset.size != shape[0] * shape[1]:
            raise ShapeError("offset size does not match the output shape")
        super().__init__(*args, shape=shape)
        self.coeffs = list(coeffs)
        self.offset = offset
        self.points = list(points) if points is not None else None

    def centered(self, i, value):
        if self.points is None:
            return vec(value)
        return vec(value) - vec(self.points[i].value)

    def monotonicity(self, i):
        return None

    def numeric(self, values):
        out = vec(self.offset.value).copy()
        for i, (m, v) in enumerate(zip(self.coeffs, values)):
            out += m.value @ self.centered(i, v)
        return out.reshape(self.shape, order="F")

    def local_jacobians(self, values):
        return [sp.csr_matrix(m.value) for m in self.coeffs]

    def _key_data(self):
        pts = tuple(p.id for p in self.points) if self.points is not None else ()
        return ("affine_map", self.offset.id, tuple(m.id for m in self.coeffs), pts)

    def name(self):
        inner = ", ".join(a.name() for a in self.args)
        return f"affine({inner})"


class Constraint:
    """Relational constraint ``lhs relop rhs`` with relop in {'<=', '>=', '=='}."""

    __hash__ = object.__hash__

    def __init__(self, lhs, relop: str, rhs):
        if relop not in ("<=", ">=", "=="):
            raise ValueError(f"unknown relational operator {relop!r}")
        self.lhs, self.rhs = _promote_pair(as_expr(lhs), as_expr(rhs))
        self.relop = relop

    @property
    def shape(self):
        return self.lhs.shape

    @property
    def size(self):
        return self.lhs.size

    @property
    def key(self):
        return (self.relop, self.lhs.key, self.rhs.key)

    def variables(self) -> list[Variable]:
        found = {v.id: v for v in self.lhs.variables() + self.rhs.variables()}
        return [found[k] for k in sorted(found)]

    def is_dcp(self) -> bool:
        lc, rc = self.lhs.curvature, self.rhs.curvature
        if self.relop == "==":
            return lc.is_affine and rc.is_affine
        if self.relop == "<=":
            return lc.is_convex and rc.is_concave
        return lc.is_concave and rc.is_convex

    def is_dccp(self) -> bool:
        return Curvature.UNKNOWN not in (self.lhs.curvature, self.rhs.curvature)

    def violation(self, assignment=None) -> float:
        """Largest elementwise violation (0 when satisfied)."""
        diff = evaluate(self.lhs, assignment) - evaluate(self.rhs, assignment)
        if self.relop == "<=":
            return float(max(np.max(diff), 0.0))
        if self.relop == ">=":
            return float(max(np.max(-diff), 0.0))
        return float(np.max(np.abs(diff)))

    def __bool__(self):
        raise TypeError("a Constraint has no truth value")

    def __repr__(self):
        return f"{self.lhs.name()} {self.relop} {self.rhs.name()}"


# -- traversal, evaluation, gradients -----------------------------------------------


def _postorder(root: Expression):
    seen: set[int] = set()
    order: list[Expression] = []
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for arg in reversed(node.args):
            if id(arg) not in seen:
                stack.append((arg, False))
    return order


def _leaf_value(node: Expression, assignment) -> np.ndarray:
    if isinstance(node, Variable):
        val = assignment.get(node) if assignment is not None else None
        if val is None:
            val = node.value
        if val is None:
            raise KeyError(f"no value for variable {node.name()}")
        arr = np.asarray(val, dtype=float)
        return arr.reshape(node.shape, order="F") if arr.ndim < 2 else arr.reshape(node.shape)
    if isinstance(node, Parameter):
        if node.value is None:
            raise KeyError(f"parameter {node.name()} has no value")
        return node.value
    return node.data


def _values(root: Expression, assignment) -> dict[int, np.ndarray]:
    vals: dict[int, np.ndarray] = {}
    for node in _postorder(root):
        if isinstance(node, Leaf):
            vals[id(node)] = _leaf_value(node, assignment)
        else:
            vals[id(node)] = node.numeric([vals[id(a)] for a in node.args])
    return vals


def evaluate(e, assignment: Mapping | None = None) -> np.ndarray:
    """Numeric value of ``e``; raises DomainViolation outside the domain."""
    e = as_expr(e)
    return _values(e, assignment)[id(e)]


def _forward(e: Expression, vals) -> dict:
    jac: dict[int, dict] = {}
    for node in _postorder(e):
        if isinstance(node, Variable):
            jac[id(node)] = {node: sp.identity(node.size, format="csr")}
            continue
        if isinstance(node, Leaf) or node.curvature.is_constant:
            jac[id(node)] = {}
            continue
        local = node.local_jacobians([vals[id(a)] for a in node.args])
        acc: dict = {}
        for arg, d in zip(node.args, local):
            for var, j in jac[id(arg)].items():
                term = d @ j
                acc[var] = acc[var] + term if var in acc else term
        jac[id(node)] = acc
    return {v: sp.csr_matrix(j) for v, j in jac[id(e)].items()}


def _reverse(e: Expression, vals) -> dict:
    # dense adjoints: cheap when e has few entries
    order = _postorder(e)
    adj: dict[int, np.ndarray] = {id(e): np.eye(e.size)}
    out: dict = {}
    for node in reversed(order):
        a = adj.pop(id(node), None)
        if a is None:
            continue
        if isinstance(node, Variable):
            out[node] = sp.csr_matrix(a)
            continue
        if isinstance(node, Leaf) or node.curvature.is_constant:
            continue
        terms = node.vjp([vals[id(x)] for x in node.args], a)
        for arg, term in zip(node.args, terms):
            if isinstance(arg, Leaf) and not isinstance(arg, Variable):
                continue
            prev = adj.get(id(arg))
            adj[id(arg)] = term if prev is None else prev + term
    for v in e.variables():
        out.setdefault(v, sp.csr_matrix((e.size, v.size)))
    return out


def jacobians(e: Expression, assignment: Mapping | None = None) -> dict:
    """Sparse Jacobians of vec(e) w.r.t. vec(v) for every variable v in e."""
    e = as_expr(e)
    vals = _values(e, assignment)
    if e.size <= 16:
        return _reverse(e, vals)
    return _forward(e, vals)


def gradient(e, assignment: Mapping | None = None) -> dict:
    """Dense Jacobians (e.size x v.size) keyed by variable.

    At kinks a minimum-norm subgradient (convex) or supergradient (concave)
    is returned; NotDifferentiable is raised on the boundary of the domain.
    """
    return {v: j.toarray() for v, j in jacobians(as_expr(e), assignment).items()}


def curvature(e) -> Curvature:
    return as_expr(e).curvature


def sign(e) -> Sign:
    return as_expr(e).sign


__all__ = [
    "Curvature", "Sign", "Expression", "Variable", "Parameter", "Constant", "Constraint",
    "Add", "Negate", "Promote", "Multiply", "MatMul", "Gather", "Index", "Transpose",
    "Reshape", "HStack", "VStack", "Sum", "Trace", "AffineMap", "evaluate", "gradient", "jacobians",
    "curvature", "sign", "as_expr", "vec", "multiply", "NotDifferentiable",
]
