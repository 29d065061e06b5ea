"""Canonicalization of DCP problems into cone programs.

The target form is ``minimize c'v + offset  s.t.  b - A v in K`` where K is a
product of zero, nonnegative and second-order cones. Every atom is replaced
by its graph implementation; auxiliary columns are appended after the
original variables in post-order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from . import atoms as at
from .errors import NotDcp, ShapeError
from .expr import (
    AffineMap,
    Expression,
    Leaf,
    MatMul,
    Multiply,
    Variable,
    _postorder,
    evaluate,
    vec,
)
from .transform import Problem, is_dcp

ZERO, NONNEG, SOC = "zero", "nonneg", "soc"
_ORDER = {ZERO: 0, NONNEG: 1, SOC: 2}


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int


@dataclass
class ConeProgram:
    """``minimize c'v + offset  s.t.  b - A v in cones`` (cones in row order)."""

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list[Cone]
    var_map: dict = field(default_factory=dict)
    offset: float = 0.0
    objective_sign: float = 1.0  # -1 when the source problem maximizes

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def __post_init__(self):
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,):
            raise ShapeError("inconsistent cone program dimensions")
        if sum(k.dim for k in self.cones) != m:
            raise ShapeError("cone dimensions do not cover the rows of A")
        if any(k.dim < 1 for k in self.cones):
            raise ShapeError("cone dimensions must be positive")

    def problem_value(self, cone_objective: float) -> float:
        """Map a cone objective c'v back to the source problem's objective."""
        return self.objective_sign * (cone_objective + self.offset)


class Recovery:
    """Maps a cone-program primal vector to values of the original variables."""

    def __init__(self, var_map: dict, n: int):
        self.var_map = var_map
        self.n = n

    def __call__(self, v: np.ndarray) -> dict:
        return recover(self, v)


def recover(r: Recovery, v: np.ndarray) -> dict:
    v = np.asarray(v, dtype=float).ravel()
    if v.size != r.n:
        raise ShapeError(f"primal vector has length {v.size}, expected {r.n}")
    return {
        var: v[start:start + var.size].reshape(var.shape, order="F")
        for var, start in r.var_map.items()
    }


class _Affine:
    """Affine function of the columns: sum_k coeffs[k] @ col_block_k + const."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict, const: np.ndarray):
        self.coeffs = coeffs
        self.const = const

    @property
    def size(self):
        return self.const.size

    @classmethod
    def constant(cls, value):
        return cls({}, vec(value).copy())

    def apply(self, lin) -> _Affine:
        lin = sp.csr_matrix(lin)
        return _Affine({k: lin @ m for k, m in self.coeffs.items()}, lin @ self.const)

    def __add__(self, other: _Affine) -> _Affine:
        coeffs = dict(self.coeffs)
        for k, m in other.coeffs.items():
            coeffs[k] = coeffs[k] + m if k in coeffs else m
        return _Affine(coeffs, self.const + other.const)

    def __neg__(self):
        return _Affine({k: -m for k, m in self.coeffs.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, alpha: float) -> _Affine:
        return _Affine({k: alpha * m for k, m in self.coeffs.items()}, alpha * self.const)

    def rows(self, idx) -> _Affine:
        idx = np.asarray(idx, dtype=np.int64)
        return _Affine({k: m[idx] for k, m in self.coeffs.items()}, self.const[idx])

    def promote(self, size: int) -> _Affine:
        return self.rows(np.zeros(size, dtype=np.int64)) if self.size == 1 else self


def _concat(forms: list[_Affine]) -> _Affine:
    sizes = [f.size for f in forms]
    keys: dict = {}
    for f in forms:
        for k, m in f.coeffs.items():
            keys.setdefault(k, m.shape[1])
    coeffs = {}
    for k, ncol in keys.items():
        blocks = [f.coeffs.get(k, sp.csr_matrix((s, ncol))) for f, s in zip(forms, sizes)]
        coeffs[k] = sp.vstack(blocks, format="csr")
    return _Affine(coeffs, np.concatenate([f.const for f in forms]))


def _interleave(forms: list[_Affine]) -> _Affine:
    """Stack equal-size forms so that row i of each form lands in group i."""
    k = forms[0].size
    p = len(forms)
    stacked = _concat(forms)
    idx = (np.arange(p)[None, :] * k + np.arange(k)[:, None]).ravel()
    return stacked.rows(idx)


class _Canonicalizer:
    def __init__(self, variables: list[Variable]):
        self.block_sizes: list[int] = []
        self.var_blocks: dict = {}
        for v in variables:
            self.var_blocks[v] = self._new_block(v.size)
        self.emitted: list[tuple[str, _Affine]] = []
        self.memo: dict[int, _Affine] = {}

    def _new_block(self, size: int) -> int:
        self.block_sizes.append(size)
        return len(self.block_sizes) - 1

    def new_var(self, size: int) -> _Affine:
        k = self._new_block(size)
        return _Affine({k: sp.identity(size, format="csr")}, np.zeros(size))

    def emit(self, kind: str, form: _Affine) -> None:
        self.emitted.append((kind, form))

    def form(self, root: Expression) -> _Affine:
        for node in _postorder(root):
            if id(node) in self.memo:
                continue
            self.memo[id(node)] = self._canon_node(node)
        return self.memo[id(root)]

    def _canon_node(self, node: Expression) -> _Affine:
        if isinstance(node, Variable):
            return _Affine({self.var_blocks[node]: sp.identity(node.size, format="csr")},
                           np.zeros(node.size))
        if isinstance(node, Leaf) or node.curvature.is_constant:
            return _Affine.constant(evaluate(node))
        args = [self.memo[id(a)] for a in node.args]
        if isinstance(node, AffineMap):
            out = _Affine.constant(node.offset.value)
            for i, (m, f) in enumerate(zip(node.coeffs, args)):
                if node.points is not None:
                    f = f - _Affine.constant(node.points[i].value)
                out = out + f.apply(m.value)
            return out
        if isinstance(node, (Multiply, MatMul)):
            return self._product(node, args)
        handler = _GRAPH.get(type(node))
        if handler is not None:
            return handler(self, node, args)
        dummy = [np.zeros(a.shape) for a in node.args]
        jacs = node.local_jacobians(dummy)
        out = None
        for j, f in zip(jacs, args):
            term = f.apply(j)
            out = term if out is None else out + term
        return out

    def _product(self, node, args):
        a, b = node.args
        if a.curvature.is_constant:
            const_i, var_i = 0, 1
        elif b.curvature.is_constant:
            const_i, var_i = 1, 0
        else:
            raise NotDcp(f"product of two non-constant expressions: {node!r}")
        values = [np.zeros(x.shape) for x in node.args]
        values[const_i] = evaluate(node.args[const_i])
        lin = node.local_jacobians(values)[var_i]
        return args[var_i].apply(lin)

    def assemble(self, objective: _Affine, sign: float):
        offsets = np.concatenate([[0], np.cumsum(self.block_sizes)]).astype(np.int64)
        n = int(offsets[-1])

        def dense_row_coeffs(form: _Affine):
            rows, cols, vals = [], [], []
            for k, m in form.coeffs.items():
                coo = m.tocoo()
                rows.append(coo.row)
                cols.append(coo.col + offsets[k])
                vals.append(coo.data)
            if rows:
                return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
            e = np.zeros(0, dtype=np.int64)
            return e, e, np.zeros(0)

        order = sorted(range(len(self.emitted)), key=lambda i: _ORDER[self.emitted[i][0]])
        A_rows, A_cols, A_vals, b_parts, cones = [], [], [], [], []
        row0 = 0
        for i in order:
            kind, form = self.emitted[i]
            r, cidx, vals = dense_row_coeffs(form)
            keep = np.ones(form.size, dtype=bool)
            if kind != SOC:
                used = np.zeros(form.size, dtype=bool)
                used[r[vals != 0]] = True
                trivial = ~used & ((form.const == 0) if kind == ZERO else (form.const >= 0))
                keep = ~trivial
                if not keep.any():
                    continue
            remap = np.cumsum(keep) - 1
            mask = keep[r]
            A_rows.append(remap[r[mask]] + row0)
            A_cols.append(cidx[mask])
            A_vals.append(-vals[mask])
            b_parts.append(form.const[keep])
            dim = int(keep.sum())
            if kind != SOC and cones and cones[-1].kind == kind:
                cones[-1] = Cone(kind, cones[-1].dim + dim)
            else:
                cones.append(Cone(kind, dim))
            row0 += dim
        m = row0
        if A_rows:
            A = sp.csc_matrix(
                (np.concatenate(A_vals), (np.concatenate(A_rows), np.concatenate(A_cols))),
                shape=(m, n),
            )
        else:
            A = sp.csc_matrix((m, n))
        b = np.concatenate(b_parts) if b_parts else np.zeros(0)
        c = np.zeros(n)
        r, cidx, vals = dense_row_coeffs(objective)
        np.add.at(c, cidx, vals)
        var_map = {v: int(offsets[k]) for v, k in self.var_blocks.items()}
        cp = ConeProgram(
            c=sign * c, A=A, b=b, cones=cones, var_map=var_map,
            offset=float(sign * objective.const[0]), objective_sign=sign,
        )
        return cp, Recovery(var_map, n)


# -- graph implementations ---------------------------------------------------------------


def _g_square(cv: _Canonicalizer, node, args):
    x = args[0]
    t = cv.new_var(x.size)
    one = _Affine.constant(np.ones(x.size))
    cv_soc_triples(cv, one + t, x.scale(2.0), one - t)
    return t


def _g_sqrt(cv: _Canonicalizer, node, args):
    x = args[0]
    t = cv.new_var(x.size)
    one = _Affine.constant(np.ones(x.size))
    cv_soc_triples(cv, one + x, t.scale(2.0), one - x)
    return t


def cv_soc_triples(cv: _Canonicalizer, head: _Affine, mid: _Affine, tail: _Affine):
    """Elementwise 3-dimensional cones ||(mid_i, tail_i)|| <= head_i."""
    block = _interleave([head, mid, tail])
    for i in range(head.size):
        cv.emit(SOC, block.rows(np.arange(3 * i, 3 * i + 3)))


def _g_sum_squares(cv, node, args):
    x = args[0]
    t = cv.new_var(1)
    one = _Affine.constant(np.ones(1))
    cv.emit(SOC, _concat([one + t, x.scale(2.0), one - t]))
    return t


def _g_abs(cv, node, args):
    x = args[0]
    t = cv.new_var(x.size)
    cv.emit(NONNEG, _concat([t - x, t + x]))
    return t


def _g_pos(cv, node, args):
    x = args[0]
    t = cv.new_var(x.size)
    cv.emit(NONNEG, _concat([t - x, t]))
    return t


def _g_norm1(cv, node, args):
    t = _g_abs(cv, node, args)
    return t.apply(np.ones((1, t.size)))


def _g_norm2(cv, node, args):
    t = cv.new_var(1)
    cv.emit(SOC, _concat([t, args[0]]))
    return t


def _g_norm_inf(cv, node, args):
    x = args[0]
    t = cv.new_var(1).promote(x.size)
    cv.emit(NONNEG, _concat([t - x, t + x]))
    return t.rows([0])


def _g_max_entries(cv, node, args):
    x = args[0]
    t = cv.new_var(1)
    cv.emit(NONNEG, t.promote(x.size) - x)
    return t


def _g_min_entries(cv, node, args):
    x = args[0]
    t = cv.new_var(1)
    cv.emit(NONNEG, x - t.promote(x.size))
    return t


def _g_maximum(cv, node, args):
    t = cv.new_var(node.size)
    cv.emit(NONNEG, _concat([t - a for a in args]))
    return t


def _g_minimum(cv, node, args):
    t = cv.new_var(node.size)
    cv.emit(NONNEG, _concat([a - t for a in args]))
    return t


_GRAPH = {
    at.Square: _g_square,
    at.Sqrt: _g_sqrt,
    at.SumSquares: _g_sum_squares,
    at.Abs: _g_abs,
    at.Pos: _g_pos,
    at.Norm1: _g_norm1,
    at.Norm2: _g_norm2,
    at.NormInf: _g_norm_inf,
    at.MaxEntries: _g_max_entries,
    at.MinEntries: _g_min_entries,
    at.Maximum: _g_maximum,
    at.Minimum: _g_minimum,
}


def canonicalize(p: Problem) -> tuple[ConeProgram, Recovery]:
    """Cone program equivalent to the DCP problem ``p``."""
    if not is_dcp(p):
        raise NotDcp("problem is not DCP")
    cv = _Canonicalizer(p.variables())
    sign = 1.0 if p.minimize else -1.0
    for con in p.constraints:
        lhs, rhs = cv.form(con.lhs), cv.form(con.rhs)
        if con.relop == "==":
            cv.emit(ZERO, lhs - rhs)
        elif con.relop == "<=":
            cv.emit(NONNEG, rhs - lhs)
        else:
            cv.emit(NONNEG, lhs - rhs)
    objective = cv.form(p.objective)
    return cv.assemble(objective, sign)


def dump(cp: ConeProgram, out: TextIO) -> None:
    """Write ``cp`` as plain-text sparse triplets (see README for the format)."""
    m, n = cp.A.shape
    out.write("# dcprog cone program: minimize c'v + offset s.t. b - A v in K\n")
    out.write(f"n {n}\nm {m}\n")
    out.write("cones " + " ".join(f"{k.kind}:{k.dim}" for k in cp.cones) + "\n")
    out.write(f"offset {cp.offset:.17g}\nsign {cp.objective_sign:g}\n")
    out.write("c\n")
    for j in np.flatnonzero(cp.c):
        out.write(f"{j} {cp.c[j]:.17g}\n")
    out.write("b\n")
    for i in np.flatnonzero(cp.b):
        out.write(f"{i} {cp.b[i]:.17g}\n")
    out.write("A\n")
    coo = cp.A.tocoo()
    order = np.lexsort((coo.row, coo.col))
    for k in order:
        out.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n")


def load(text: TextIO) -> ConeProgram:
    """Inverse of :func:`dump` (variable map is not stored)."""
    lines = [ln.strip() for ln in text if ln.strip() and not ln.startswith("#")]
    it = iter(lines)
    n = int(next(it).split()[1])
    m = int(next(it).split()[1])
    cones = []
    for tok in next(it).split()[1:]:
        kind, dim = tok.split(":")
        cones.append(Cone(kind, int(dim)))
    offset = float(next(it).split()[1])
    sign = float(next(it).split()[1])
    c, b = np.zeros(n), np.zeros(m)
    rows, cols, vals = [], [], []
    section = None
    for ln in it:
        if ln in ("c", "b", "A"):
            section = ln
            continue
        parts = ln.split()
        if section == "c":
            c[int(parts[0])] = float(parts[1])
        elif section == "b":
            b[int(parts[0])] = float(parts[1])
        else:
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
    A = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
    return ConeProgram(c, A, b, cones, {}, offset, sign)


__all__ = ["Cone", "ConeProgram", "Recovery", "canonicalize", "recover", "dump", "load",
           "ZERO", "NONNEG", "SOC"]
