import numpy as np
import pytest
from exprgen import Sampler
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import central_difference

import dcprog as dc
from dcprog import Curvature, Sign
from dcprog.errors import DomainViolation, NotDifferentiable, ShapeError


@pytest.fixture
def x():
    return dc.Variable(1, name="x")


# -- curvature --------------------------------------------------------------------------


def test_square_is_convex(x):
    assert dc.curvature(dc.square(x)) is Curvature.CONVEX


def test_affine_combination(x):
    assert dc.curvature(3 * x + 2) is Curvature.AFFINE


def test_sqrt_of_square_is_unknown(x):
    assert dc.curvature(dc.sqrt(dc.square(x))) is Curvature.UNKNOWN


def test_norm_of_affine_is_convex():
    v = dc.Variable(3)
    A = np.arange(6.0).reshape(2, 3)
    assert dc.curvature(dc.norm2(A @ v - np.ones((2, 1)))) is Curvature.CONVEX


def test_constants_are_constant():
    assert dc.curvature(dc.Constant(2.0)) is Curvature.CONSTANT
    assert dc.Constant(2.0).curvature.is_affine and dc.Constant(2.0).curvature.is_convex


def test_negative_scaling_flips_curvature(x):
    assert dc.curvature(-2 * dc.square(x)) is Curvature.CONCAVE
    assert dc.curvature(-1 * dc.sqrt(x)) is Curvature.CONVEX


def test_product_of_variables_is_unknown(x):
    y = dc.Variable(1)
    assert dc.curvature(dc.multiply(x, y)) is Curvature.UNKNOWN


def test_sign_enables_composition(x):
    # square is increasing on nonnegative arguments
    assert dc.curvature(dc.square(dc.pos(x))) is Curvature.CONVEX
    assert dc.curvature(dc.square(dc.sqrt(x))) is Curvature.UNKNOWN
    assert dc.curvature(dc.sqrt(dc.minimum(x, 1.0))) is Curvature.CONCAVE


def test_convex_minus_convex_is_unknown(x):
    assert dc.curvature(dc.square(x) - dc.abs_(x)) is Curvature.UNKNOWN


# -- sign --------------------------------------------------------------------------------


def test_signs(x):
    assert dc.sign(dc.square(x)) is Sign.POSITIVE
    assert dc.sign(dc.Constant(-2.0)) is Sign.NEGATIVE
    assert dc.sign(x) is Sign.UNKNOWN
    assert dc.sign(dc.Constant(0.0)) is Sign.ZERO
    assert dc.sign(-dc.norm2(x)) is Sign.NEGATIVE


# -- evaluation --------------------------------------------------------------------------


def test_evaluate_examples(x):
    assert dc.evaluate(dc.sqrt(x), {x: 4.0}).item() == 2.0
    v = dc.Variable(2)
    assert dc.evaluate(dc.norm2(v), {v: [3.0, 4.0]}).item() == pytest.approx(5.0)
    with pytest.raises(DomainViolation):
        dc.evaluate(dc.sqrt(x), {x: -1.0})


def test_evaluate_matrix_ops():
    X = dc.Variable((2, 3))
    val = np.arange(6.0).reshape(2, 3)
    assert np.allclose(dc.evaluate(X.T, {X: val}), val.T)
    # integer indexing yields an n x 1 column, the vector convention
    assert np.allclose(dc.evaluate(X[1, :], {X: val}), val[1:2, :].T)
    assert np.allclose(dc.evaluate(X[1:, :], {X: val}), val[1:, :])
    assert dc.evaluate(dc.sum_entries(X), {X: val}).item() == 15.0
    assert np.allclose(dc.evaluate(dc.sum_entries(X, axis=0), {X: val}), val.sum(axis=0, keepdims=True))
    assert np.allclose(dc.evaluate(dc.reshape(X, (3, 2)), {X: val}), val.reshape(3, 2, order="F"))
    assert np.allclose(dc.evaluate(dc.vstack([X, X]), {X: val}), np.vstack([val, val]))
    assert np.allclose(dc.evaluate(dc.hstack([X, X]), {X: val}), np.hstack([val, val]))
    assert dc.evaluate(dc.max_entries(X), {X: val}).item() == 5.0
    assert dc.evaluate(dc.min_entries(X), {X: val}).item() == 0.0
    assert dc.evaluate(dc.norm1(X - 2), {X: val}).item() == 2 + 1 + 0 + 1 + 2 + 3


def test_shape_errors():
    a, b = dc.Variable(2), dc.Variable(3)
    with pytest.raises(ShapeError):
        a + b
    with pytest.raises(ShapeError):
        np.ones((2, 2)) @ b


def test_missing_value_raises():
    v = dc.Variable(2)
    with pytest.raises(KeyError):
        dc.evaluate(v + 1)


# -- gradients ----------------------------------------------------------------------------


def test_gradient_examples(x):
    assert dc.gradient(dc.sqrt(x), {x: 4.0})[x].item() == pytest.approx(0.25)
    assert dc.gradient(dc.square(x), {x: 3.0})[x].item() == pytest.approx(6.0)
    with pytest.raises(NotDifferentiable):
        dc.gradient(dc.sqrt(x), {x: 0.0})
    v = dc.Variable(2)
    assert np.array_equal(dc.gradient(dc.norm2(v), {v: [0.0, 0.0]})[v], np.zeros((1, 2)))


def test_minimum_norm_subgradients(x):
    assert dc.gradient(dc.abs_(x), {x: 0.0})[x].item() == 0.0
    assert dc.gradient(dc.pos(x), {x: 0.0})[x].item() == 0.0
    v = dc.Variable(3)
    g = dc.gradient(dc.max_entries(v), {v: [1.0, 1.0, 0.0]})[v]
    assert np.allclose(g, [[0.5, 0.5, 0.0]])
    g = dc.gradient(dc.norm_inf(v), {v: [0.0, 0.0, 0.0]})[v]
    assert np.allclose(g, 0.0)


def test_jacobian_is_column_major():
    X = dc.Variable((2, 2))
    val = np.array([[1.0, 2.0], [3.0, 4.0]])
    J = dc.gradient(dc.square(X), {X: val})[X]
    assert np.allclose(np.diag(J), 2 * val.ravel(order="F"))
    J = dc.gradient(X.T, {X: val})[X]
    fd = central_difference(lambda p: dc.evaluate(X.T, {X: p}), val)
    assert np.allclose(J, fd)


def test_large_and_small_outputs_agree():
    # reverse mode serves small outputs, forward mode large ones
    rng = np.random.default_rng(0)
    v = dc.Variable(5)
    A = rng.standard_normal((40, 5))
    point = rng.standard_normal((5, 1))
    big = dc.square(A @ v)
    J = dc.gradient(big, {v: point})[v]
    assert J.shape == (40, 5)
    rows = [dc.gradient(dc.square(A[i:i + 1] @ v), {v: point})[v] for i in range(40)]
    assert np.allclose(J, np.vstack(rows))


def test_gradient_includes_variables_with_zero_sensitivity():
    a, b = dc.Variable(1), dc.Variable(1)
    g = dc.gradient(dc.square(a) + 0 * b, {a: 1.0, b: 2.0})
    assert set(g) == {a, b} and g[b].item() == 0.0


# -- sampled properties --------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_midpoint_curvature(seed):
    s = Sampler(np.random.default_rng(seed))
    e = s.expression()
    pts = s.points_in_domain(e, 6)
    for a, b in zip(pts[::2], pts[1::2]):
        mid = dc.evaluate(e, {s.x: (a + b) / 2})
        avg = (dc.evaluate(e, {s.x: a}) + dc.evaluate(e, {s.x: b})) / 2
        if e.curvature.is_convex:
            assert np.all(mid <= avg + 1e-9)
        else:
            assert np.all(mid >= avg - 1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_sign_soundness(seed):
    s = Sampler(np.random.default_rng(seed))
    e = s.expression()
    for p in s.points_in_domain(e, 5):
        val = dc.evaluate(e, {s.x: p})
        if e.sign.is_nonneg:
            assert np.all(val >= -1e-12)
        if e.sign.is_nonpos:
            assert np.all(val <= 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_subgradient_inequality(seed):
    s = Sampler(np.random.default_rng(seed))
    e = dc.sum_entries(s.convex())
    pts = s.points_in_domain(e, 6)
    for a, b in zip(pts[::2], pts[1::2]):
        g = dc.gradient(e, {s.x: a})[s.x]
        lhs = dc.evaluate(e, {s.x: b}).item()
        rhs = dc.evaluate(e, {s.x: a}).item() + (g @ (b - a)).item()
        assert lhs >= rhs - 1e-9


def test_inference_is_deterministic():
    s = Sampler(np.random.default_rng(5))
    e = s.expression()
    assert e.curvature == e.curvature and e.sign == e.sign
    g1 = dc.gradient(e, {s.x: s.z})[s.x]
    g2 = dc.gradient(e, {s.x: s.z})[s.x]
    assert np.array_equal(g1, g2)
