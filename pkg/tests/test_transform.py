import numpy as np
import pytest
from exprgen import Sampler
from hypothesis import given, settings
from hypothesis import strategies as st

import dcprog as dc
from dcprog.errors import NotDccp


@pytest.fixture
def x():
    return dc.Variable(1, name="x")


def test_is_dcp_examples(x):
    assert dc.is_dcp(dc.Problem(dc.Minimize(dc.square(x)), [x >= 1]))
    assert not dc.is_dcp(dc.Problem(dc.Minimize(dc.sqrt(x)), [x >= -1]))
    c1, c2 = dc.Variable(2), dc.Variable(2)
    sep = dc.norm2(c1 - c2) >= 2.0
    assert not sep.is_dcp() and sep.is_dccp()


def test_is_dccp_examples(x):
    assert dc.is_dccp(dc.Problem(dc.Minimize(dc.sqrt(x)), [x >= -1]))
    assert dc.is_dccp(dc.Problem(dc.Minimize(dc.square(x)), [x >= 1]))
    assert not dc.is_dccp(dc.Problem(dc.Minimize(x), [dc.sqrt(dc.square(x)) <= 1]))
    assert dc.is_dccp(dc.Problem(dc.Maximize(dc.square(x)), [dc.abs_(x) <= 1]))


def test_split_equalities(x):
    A = np.ones((1, 1))
    p = dc.Problem(dc.Minimize(x), [dc.square(x) == 1, A @ x == 1])
    q = dc.split_equalities(p)
    assert [c.relop for c in q.constraints] == ["<=", ">=", "=="]
    for v in (1.0, -1.0, 0.5):
        before = p.max_violation({x: v})
        after = q.max_violation({x: v})
        assert (before == 0) == (after == 0)


def test_split_phase_magnitude():
    z = dc.Variable(2)
    p = dc.Problem(dc.Minimize(dc.Constant(0.0)), [dc.norm2(z) == 3.0])
    assert [c.relop for c in dc.split_equalities(p).constraints] == ["<=", ">="]


def test_linearize_sqrt(x):
    lin = dc.linearize(dc.sqrt(x), {x: 4.0})
    assert lin.affine.curvature.is_affine
    for v in (0.0, 1.0, 4.0, 9.0):
        assert dc.evaluate(lin.affine, {x: v}).item() == pytest.approx(2 + 0.25 * (v - 4))
    assert len(lin.domain) == 1


def test_linearize_affine_is_identity(x):
    e = 3 * x + 2
    lin = dc.linearize(e, {x: 7.0})
    assert lin.affine is e and len(lin.domain) == 0


def test_linearize_square_underestimates(x):
    lin = dc.linearize(dc.square(x), {x: 1.0})
    for v in np.linspace(-5, 5, 101):
        assert dc.evaluate(lin.affine, {x: v}).item() == pytest.approx(2 * v - 1)
        assert 2 * v - 1 <= v * v + 1e-12


def test_linearize_errors(x):
    with pytest.raises(dc.NotDifferentiable):
        dc.linearize(dc.sqrt(x), {x: 0.0})
    with pytest.raises(dc.DomainViolation):
        dc.linearize(dc.sqrt(x), {x: -1.0})
    with pytest.raises(NotDccp):
        dc.linearize(dc.square(x) - dc.abs_(x), {x: 1.0})


def test_update_failure_keeps_previous_point(x):
    lin = dc.linearize(dc.sqrt(x), {x: 4.0})
    with pytest.raises(dc.NotDifferentiable):
        lin.update({x: 0.0})
    assert dc.evaluate(lin.affine, {x: 4.0}).item() == pytest.approx(2.0)


def test_convexify_separation():
    c1, c2 = dc.Variable(2), dc.Variable(2)
    z = {c1: np.array([[0.0], [0.0]]), c2: np.array([[3.0], [4.0]])}
    (con,), dom = dc.convexify_constraint(dc.norm2(c1 - c2) >= 2.0, z)
    assert con.is_dcp() and len(dom) == 0
    # the linearization is tangent at z
    assert dc.evaluate(con.lhs, z).item() == pytest.approx(5.0)


def test_convexify_boolean_branch(x):
    (con,), _ = dc.convexify_constraint(dc.square(x) >= 1, {x: 3.0})
    for v in (-1.0, 0.0, 2.0):
        assert dc.evaluate(con.lhs, {x: v}).item() == pytest.approx(6 * v - 9)


def test_convexify_dcp_constraint_unchanged():
    v = dc.Variable(3)
    c = dc.norm2(np.ones((2, 3)) @ v - 1) <= 1
    (out,), dom = dc.convexify_constraint(c, None)
    assert out is c and len(dom) == 0


def test_sqrt_penalty_subproblem(x):
    p = dc.Problem(dc.Minimize(dc.sqrt(x)), [x >= -1])
    sub = dc.build_penalty_subproblem(p, {x: 1.0}, 1.0)
    assert dc.is_dcp(sub.base) and not sub.slacks
    assert len(sub.base.constraints) == 2
    for v in (0.0, 3.0):
        assert dc.evaluate(sub.base.objective, {x: v}).item() == pytest.approx(1 + 0.5 * (v - 1))


def test_dcp_problem_has_no_slacks(x):
    p = dc.Problem(dc.Minimize(dc.square(x)), [x >= 1])
    sub = dc.build_penalty_subproblem(p, None, 1.0)
    assert sub.is_trivial and not sub.slacks and dc.is_dcp(sub.base)


def test_boolean_subproblem_restriction():
    n = 4
    x = dc.Variable(n)
    p = dc.split_equalities(dc.Problem(dc.Minimize(dc.norm2(x - 0.3)), [dc.square(x) == 1]))
    z = {x: np.array([[0.5], [-2.0], [1.0], [-0.7]])}
    sub = dc.build_penalty_subproblem(p, z, 1.0)
    assert dc.is_dcp(sub.base)
    assert len(sub.slacks) == 1 and sub.slacks[0].shape == (n, 1)
    x_sub, _ = dc.solve_convex(sub.base)
    assert sub.max_slack(x_sub) >= 0
    # with zero slack, a feasible point of the restriction is feasible for the original
    s = sub.slacks[0]
    for signs in ([1, 1, 1, 1], [-1, 1, -1, 1]):
        a = {x: np.array(signs, float).reshape(-1, 1), s: np.zeros((n, 1))}
        if max(c.violation(a) for c in sub.base.constraints) <= 1e-12:
            assert p.max_violation(a) <= 1e-9


def test_maximize_penalty_sign():
    x = dc.Variable(1)
    p = dc.Problem(dc.Maximize(dc.square(x)), [dc.square(x) >= 1, x <= 3])
    sub = dc.build_penalty_subproblem(p, {x: 2.0}, 2.0)
    assert dc.is_dcp(sub.base) and sub.base.sense == "maximize"
    s = sub.slacks[0]
    hi = dc.evaluate(sub.base.objective, {x: 2.0, s: 0.0}).item()
    lo = dc.evaluate(sub.base.objective, {x: 2.0, s: 1.0}).item()
    assert hi - lo == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_restriction_property(seed):
    s = Sampler(np.random.default_rng(seed))
    # convex >= 0 and concave <= 0 both need linearizing
    e = s.expression()
    c = (e >= -1.0) if e.curvature.is_convex else (e <= 1.0)
    p = dc.Problem(dc.Minimize(dc.Constant(0.0)), [c])
    sub = dc.build_penalty_subproblem(p, {s.x: s.z}, 1.0)
    assert dc.is_dcp(sub.base)
    for pt in s.points_in_domain(e, 10):
        a = {s.x: pt, **{sl: np.zeros(sl.shape) for sl in sub.slacks}}
        if max(k.violation(a) for k in sub.base.constraints) <= 0:
            assert p.max_violation(a) <= 1e-9
