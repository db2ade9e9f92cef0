import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import similarity_dimension
from sardlab.funczoo import (
    BUILTINS,
    GateError,
    MapSpec,
    ParseError,
    Smoothness,
    builtin,
    derivative_gate,
    differentiate,
    holder_gate,
    parse_expr,
    parse_exprs,
    parse_map,
    resolve_map,
    simplify,
)
from sardlab.funczoo.dsl import evaluate, polynomial_degree
from sardlab.funczoo.mapspec import finite_difference_partial, multi_indices, normalization_gate
from sardlab.geometry import Cube
from sardlab.measures import CellSet, box_dimension, critical_cells, image_cellset
from sardlab.smallmat import jm, spectra

# ------------------------------------------------------------------ DSL


def test_parse_map_polynomial():
    v = parse_map("(x0^2 - x1^2, 2*x0*x1)")
    assert (v.n, v.d) == (2, 2)
    assert [polynomial_degree(e) for e in v.exprs] == [2, 2]
    np.testing.assert_allclose(v(np.array([1.0, 1.0])), [0.0, 2.0])


def test_parse_map_analytic():
    v = parse_map("(sin(x0 + x1))")
    assert (v.n, v.d) == (2, 1)
    assert polynomial_degree(v.exprs[0]) is None


@pytest.mark.parametrize(
    "text, column",
    [("(x0 +", 5), ("(x0 + )", 7), ("(x0 / 2)", 5), ("x0", 1), ("(x0^-1)", 5), ("(foo(x0))", 2)],
)
def test_parse_errors_carry_column(text, column):
    with pytest.raises(ParseError) as exc:
        parse_exprs(text)
    assert exc.value.column == column
    assert exc.value.line == 1


def test_precedence_and_associativity():
    x = np.array([[2.0, 3.0]])
    assert evaluate(parse_expr("-x0^2"), x)[0] == -4.0
    assert evaluate(parse_expr("x0 - x1 - x0"), x)[0] == -3.0
    assert evaluate(parse_expr("x0^2^2"), x)[0] == 16.0
    assert evaluate(parse_expr("1 + 2*x0*x1"), x)[0] == 13.0


def test_differentiate_examples():
    assert str(differentiate(parse_expr("x0^2*x1"), 0)) == "2*x0*x1"
    assert str(differentiate(parse_expr("sin(x0)"), 1)) == "0"


def test_printing_round_trips():
    for text in ["x0 - (x1 - x2)", "-(x0 + x1)^2", "(x0*x1)^3 - 2*cos(x2)", "x0^2^3"]:
        e = parse_expr(text)
        again = parse_expr(str(e))
        x = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_allclose(evaluate(again, x), evaluate(e, x))


def test_simplify_folds_identities():
    assert str(simplify(parse_expr("0*x0 + 1*x1 + x2^1"))) == "x1 + x2"
    assert str(simplify(parse_expr("sin(0*x0) + cos(0)"))) == "1"


monomials = st.tuples(st.integers(-3, 3), st.integers(0, 3), st.integers(0, 3))


@settings(max_examples=40, deadline=None)
@given(st.lists(monomials, min_size=1, max_size=5), st.integers(0, 2**20))
def test_symbolic_gradient_matches_central_differences(terms, seed):
    text = " + ".join(f"{c}*x0^{a}*x1^{b}" for c, a, b in terms)
    e = simplify(parse_expr(text))
    x = np.random.default_rng(seed).uniform(-1, 1, size=(100, 2))
    h = 1e-5
    for var in (0, 1):
        step = np.zeros(2)
        step[var] = h
        fd = (evaluate(e, x + step) - evaluate(e, x - step)) / (2 * h)
        np.testing.assert_allclose(evaluate(differentiate(e, var), x), fd, atol=1e-6)


def test_declared_dimension_must_cover_variables():
    with pytest.raises(ParseError):
        parse_map("(x0 + x2)", n=2)


# ------------------------------------------------------------ built-ins


ZOO = [
    "linear_rank(2, 2, 1)",
    "linear_rank(3, 2, 2)",
    "conformal_square",
    "paraboloid",
    "cantor_staircase(1/3)",
    "cantor_bump(1, 0.5, 1/4)",
    "cantor_bump(2, 0.5, 1/3)",
]


def test_zoo_covers_every_builtin():
    assert {text.split("(")[0] for text in ZOO} == set(BUILTINS)


@pytest.mark.parametrize("text", ZOO)
def test_builtins_pass_the_gates(text):
    vmap = resolve_map(text)
    assert derivative_gate(vmap) < 1e-4
    assert holder_gate(vmap) <= vmap.holder_constant * (1 + 1e-3)


def test_resolve_map_forms():
    assert resolve_map("linear_rank(2, 2, 1)").name == "linear_rank(2,2,1)"
    assert resolve_map("cantor_bump(1, 0.5, 1/4)").critical_value_dimension == pytest.approx(1 / 3)
    assert resolve_map("(x0*x1)").n == 2
    with pytest.raises(KeyError):
        resolve_map("nonexistent(1)")
    with pytest.raises(ValueError):
        builtin("linear_rank", 2, 2, 3)


def test_linear_rank_deficient():
    v = builtin("linear_rank", 2, 2, 1)
    x = np.random.default_rng(0).random((50, 2))
    assert np.all(jm(spectra(v.jacobian(x)), 2) == 0.0)
    img = v(x)
    assert np.all(img[:, 1] == 0.0)


def test_cantor_staircase_dimensions():
    v = builtin("cantor_staircase", 1 / 3)
    level = 14
    lo = np.arange(2**level) / 2**level
    bad = CellSet(Cube.unit(1), level, np.argwhere(v.bad_set_test(lo, lo + 2.0**-level)))
    assert box_dimension(bad, range(4, 11)) == pytest.approx(similarity_dimension(2, 1 / 3), abs=0.05)
    crit = critical_cells(v, v.domain, 1, 12)
    values = image_cellset(v, crit, Cube.unit(1), 12)
    assert box_dimension(values, range(4, 11)) == pytest.approx(1.0, abs=0.05)
    assert v.critical_value_dimension == 1.0


def test_cantor_bump_value_dimension():
    v = builtin("cantor_bump", 1, 0.5, 0.25)
    expected = similarity_dimension(2, 0.25**1.5)
    assert v.critical_value_dimension == pytest.approx(expected)
    crit = critical_cells(v, v.domain, 1, 16)
    values = image_cellset(v, crit, Cube.unit(1), 16)
    assert box_dimension(values, range(6, 13)) == pytest.approx(expected, abs=0.07)


def test_cantor_bump_is_constant_outside_and_monotone():
    v = builtin("cantor_bump", 1, 0.5, 0.25)
    x = np.linspace(-0.5, 1.5, 4001)[:, None]
    y = v(x)[:, 0]
    assert np.all(np.diff(y) >= -1e-15)
    assert y[0] == 0.0 and y[-1] == pytest.approx(1.0)


# ----------------------------------------------------------------- gates


def _bad_jacobian_map():
    v = parse_map("(x0^2)", domain=Cube.unit(1))
    return MapSpec(v.name, 1, 1, v.evaluator, lambda x: 3.0 * x[:, :, None], v.smoothness, v.domain)


def test_derivative_gate_rejects_wrong_jacobian():
    with pytest.raises(GateError):
        derivative_gate(_bad_jacobian_map())


def test_holder_gate_rejects_understated_constant():
    v = parse_map("(x0^3)", domain=Cube.unit(1), check=False)
    v.smoothness = Smoothness(1, 1.0, 1.0)  # true Lipschitz constant of 3x^2 on [0,1] is 6
    with pytest.raises(GateError):
        holder_gate(v)


def test_normalization_gate():
    v = parse_map("(0.5*x0 + 0.5*x1)", domain=Cube.unit(2))
    assert normalization_gate(v) <= 1.0
    with pytest.raises(GateError):
        normalization_gate(parse_map("(2*x0)", domain=Cube.unit(1)))


def test_finite_difference_partials_match_symbolic():
    v = parse_map("(sin(x0)*x1^2)")
    x = np.random.default_rng(5).uniform(-1, 1, size=(20, 2))
    for gamma in multi_indices(2, 2):
        np.testing.assert_allclose(finite_difference_partial(v, x, gamma), v.partial(x, gamma), atol=1e-5)


def test_derivative_tensor_weights_count_permutations():
    v = parse_map("(x0*x1*x2)")
    vals, w = v.derivative_tensor(np.zeros((1, 3)), 3)
    # only the (1,1,1) index is nonzero, and it appears 3! times in the full tensor
    assert float(np.sum(w * vals**2)) == pytest.approx(math.factorial(3))
