import numpy as np
from exprgen import Sampler
from hypothesis import given, settings
from hypothesis import strategies as st

import dcprog as dc
from dcprog.domain import contains, domain


def test_sqrt_domain():
    x = dc.Variable(1, name="x")
    d = domain(dc.sqrt(x))
    assert len(d) == 1
    assert contains(d, {x: 2.0}, 1e-9)
    assert not contains(d, {x: -1e-3}, 1e-9)
    assert contains(d, {x: 0.0}, 1e-9)


def test_affine_has_full_domain():
    x = dc.Variable(3)
    assert len(domain(np.ones((2, 3)) @ x + 1)) == 0


def test_nested_domain():
    x = dc.Variable(1, name="x")
    e = dc.sqrt(1 - dc.square(x))
    d = domain(e)
    assert len(d) == 1
    assert contains(d, {x: 1.0}, 1e-9)
    assert not contains(d, {x: 1.1}, 1e-9)
    # agrees with evaluation inside and outside
    for v in np.linspace(-1.5, 1.5, 31):
        inside = contains(d, {x: v}, 0.0)
        try:
            dc.evaluate(e, {x: v})
            ok = True
        except dc.DomainViolation:
            ok = False
        assert inside == ok


def test_domains_are_deduplicated():
    x = dc.Variable(1)
    e = dc.sqrt(x) + dc.sqrt(x) + dc.sqrt(2 * x)
    assert len(domain(e)) == 2


def test_domain_constraints_are_dcp():
    x = dc.Variable(2)
    e = dc.sqrt(dc.min_entries(1 - dc.square(x))) + dc.sqrt(x[0])
    d = domain(e)
    assert len(d) == 2
    assert all(c.is_dcp() for c in d)
    assert dc.is_dcp(dc.Problem(dc.Minimize(dc.Constant(0.0)), d.constraints))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_domain_is_convex_and_consistent(seed):
    s = Sampler(np.random.default_rng(seed))
    e = s.concave()
    d = domain(e)
    pts = s.points_in_domain(e, 6)
    for a, b in zip(pts[::2], pts[1::2]):
        assert contains(d, {s.x: (a + b) / 2}, 1e-9)
        dc.evaluate(e, {s.x: a})
