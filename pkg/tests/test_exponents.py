import math

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from sardlab.exponents import (
    ExponentParams,
    ParameterError,
    cube_exponent,
    is_borderline,
    mu_q,
    nu,
    q_circle,
    tau_star,
)


@st.composite
def params(draw, integer_alpha=False):
    n = draw(st.integers(1, 8))
    d = draw(st.integers(1, 8))
    m = draw(st.integers(1, min(n, d)))
    k = draw(st.integers(1, 6))
    alpha = 0.0 if integer_alpha else draw(st.floats(0.0, 1.0))
    return ExponentParams(n=n, m=m, d=d, k=k, alpha=alpha)


def test_mu_q_examples():
    assert mu_q(ExponentParams(n=2, m=1, d=1, k=1, alpha=0.0, q=2.0)) == 0.0
    p = ExponentParams(n=5, m=3, d=4, k=2, alpha=0.3, q=2.0)
    assert mu_q(p) == 5 - 3 + 1


def test_q_circle_examples():
    assert q_circle(ExponentParams(n=2, m=2, d=2, k=1)) == 2.0
    assert q_circle(ExponentParams(n=3, m=1, d=1, k=3)) == 1.0
    p = ExponentParams(n=2, m=1, d=1, k=1, alpha=0.5)
    assert q_circle(p) == pytest.approx(4 / 3, abs=1e-15)
    root = brentq(lambda q: mu_q(p.with_q(q)), 0.0, 10.0, xtol=1e-14)
    assert root == pytest.approx(4 / 3, abs=1e-12)


def test_nu_examples():
    assert nu(ExponentParams(n=3, m=1, d=1, k=3)) == 0
    assert nu(ExponentParams(n=5, m=2, d=2, k=1)) == 3
    assert nu(ExponentParams(n=2, m=2, d=2, k=2)) == -1


def test_tau_star_examples():
    assert tau_star(ExponentParams(n=4, m=1, d=1, k=2, p=2.0)) == 2.0
    assert tau_star(ExponentParams(n=2, m=1, d=1, k=2, p=1.0)) == 1.0
    p = ExponentParams(n=3, m=1, d=1, k=1, alpha=0.5, p=6.0)
    assert tau_star(p) == 0.0
    # (k + alpha) p = n + p exactly at the zero of tau_star
    assert (p.k + p.alpha) * p.p == p.n + p.p


@pytest.mark.parametrize(
    "kw",
    [
        dict(n=0, m=1, d=1, k=1),
        dict(n=2, m=3, d=3, k=1),
        dict(n=2, m=1, d=1, k=0),
        dict(n=2, m=1, d=1, k=1, alpha=1.5),
        dict(n=2, m=1, d=1, k=1, p=0.5),
        dict(n=2, m=2, d=2, k=1, q=0.5),
    ],
)
def test_parameter_domain_errors(kw):
    with pytest.raises(ParameterError):
        ExponentParams(**kw)


def test_missing_q_or_p():
    p = ExponentParams(n=2, m=1, d=1, k=1)
    with pytest.raises(ParameterError):
        mu_q(p)
    with pytest.raises(ParameterError):
        tau_star(p)


def test_borderline_flag():
    p = ExponentParams(n=2, m=2, d=2, k=1, q=1.0)
    assert is_borderline(p)
    assert mu_q(p) == 1
    assert not is_borderline(p.with_q(1.5))


@given(params())
def test_mu_vanishes_at_q_circle(p):
    assert abs(mu_q(p.with_q(q_circle(p)))) <= 1e-12


@given(params(integer_alpha=True))
def test_mu_at_q_equal_m_is_nu(p):
    assert mu_q(p.with_q(float(p.m))) == nu(p)


@given(params(), st.floats(0.0, 5.0), st.floats(0.01, 5.0))
def test_mu_affine_and_decreasing(p, t, dt):
    q0 = p.m - 1 + t
    a, b = mu_q(p.with_q(q0)), mu_q(p.with_q(q0 + dt))
    assert b < a
    assert (a - b) / dt == pytest.approx(p.k + p.alpha, rel=1e-9, abs=1e-9)


@given(params(), st.floats(0.0, 5.0))
def test_cube_exponent_at_mu_q_is_n(p, t):
    pq = p.with_q(p.m - 1 + t)
    assert math.isclose(cube_exponent(pq), p.n, rel_tol=1e-12, abs_tol=1e-12)
