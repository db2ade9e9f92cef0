import math

import numpy as np
import pytest

from sardlab.coarea import (
    UnsupportedDimensions,
    coarea_lhs,
    coarea_report,
    coarea_rhs,
    contour_lengths,
    residual,
)
from sardlab.funczoo import builtin, parse_map, resolve_map
from sardlab.geometry import Cube
from sardlab.measures import CellSet


def disk_cells(vmap, level):
    return CellSet.from_predicate(vmap.domain, level, lambda p: np.sum(p**2, axis=1) <= 1.0)


def test_paraboloid_on_disk():
    # polar oracle: int_0^1 2r * 2 pi r dr = 4 pi / 3
    v = parse_map("(x0^2 + x1^2)")
    rep = coarea_report(v, disk_cells(v, 9), 1)
    exact = 4 * math.pi / 3
    assert rep.lhs == pytest.approx(exact, rel=0.02)
    assert rep.rhs == pytest.approx(exact, rel=0.02)
    assert rep.residual <= 0.03


def test_projection_on_unit_square():
    v = parse_map("(x0 + 0*x1)", domain=Cube.unit(2))
    cells = CellSet.full(v.domain, 6)
    assert coarea_lhs(v, cells, 1)[0] == pytest.approx(1.0)
    assert coarea_rhs(v, cells, 1) == pytest.approx(1.0)


def test_rank_deficient_both_sides_vanish():
    v = builtin("linear_rank", 2, 2, 1)
    rep = coarea_report(v, CellSet.full(v.domain, 7), 2)
    assert rep.lhs <= 1e-3 and rep.rhs <= 1e-3


@pytest.mark.parametrize(
    "text, n, exact",
    [
        ("(x0, x1)", 2, 1.0),
        ("(x0 + x1, x1)", 2, 1.0),
        ("(x0, x1, x2)", 3, 1.0),
        ("(x0 + x1, x1, x2 + x0^2)", 3, 1.0),
        ("(x0, x1 + x2)", 3, math.sqrt(2)),
        ("(2*x0, x1)", 3, 2.0),
        ("(x1, x2)", 3, 1.0),
    ],
)
def test_affine_and_triangular_maps_are_exact(text, n, exact):
    # piecewise-linear interpolation reproduces these maps on every simplex and
    # each fiber measure is constant in y, so the y-grid sum is exact too
    v = parse_map(text, domain=Cube.unit(n), n=n)
    rep = coarea_report(v, CellSet.full(v.domain, 4), v.d)
    assert rep.lhs == pytest.approx(exact, rel=1e-12)
    assert rep.rhs == pytest.approx(exact, rel=1e-9)


@pytest.mark.parametrize("text, m", [("(x0^2 + x1^2 + x2^2)", 1), ("(x0 + 2*x1 + 0*x2)", 1), ("(x0*x1, x1 + x2^2)", 2)])
def test_three_dimensional_cases_converge(text, m):
    v = parse_map(text, domain=Cube.unit(3))
    res = [coarea_report(v, CellSet.full(v.domain, level), m).residual for level in (3, 4, 5)]
    assert res[-1] <= 0.03
    assert res[-1] < res[0]


def test_full_rank_planar_zoo_map():
    v = resolve_map("conformal_square")
    rep = coarea_report(v, CellSet.full(v.domain, 8), 2)
    # int over [-1, 1]^2 of 4|x|^2
    assert rep.lhs == pytest.approx(32 / 3, rel=1e-3)
    assert rep.residual <= 0.03


def test_relabeling_invariance():
    v = parse_map("(x0^2 + x1^2)")
    cells = disk_cells(v, 6)
    perm = np.random.default_rng(0).permutation(len(cells))
    shuffled = CellSet(cells.root, cells.level, cells.cells[perm])
    a, b = coarea_report(v, cells, 1), coarea_report(v, shuffled, 1)
    assert b.lhs == pytest.approx(a.lhs, rel=1e-12)
    assert b.rhs == pytest.approx(a.rhs, rel=1e-12)


def test_rank_violation_is_reported_not_raised():
    v = resolve_map("conformal_square")
    lhs, warnings = coarea_lhs(v, CellSet.full(v.domain, 4), 1)
    assert lhs > 0 and warnings


def test_unsupported_dimensions():
    v = resolve_map("conformal_square")
    cells = CellSet.full(v.domain, 3)
    with pytest.raises(UnsupportedDimensions):
        coarea_rhs(v, cells, 1)  # d = 2 but m = 1
    with pytest.raises(UnsupportedDimensions):
        coarea_rhs(v, cells, 3)
    w = parse_map("(x0 + x1 + x2 + x3)", domain=Cube.unit(4))
    with pytest.raises(UnsupportedDimensions):
        coarea_rhs(w, CellSet.full(w.domain, 1), 1)


def test_empty_set_and_residual():
    v = resolve_map("paraboloid")
    assert coarea_rhs(v, CellSet.empty(v.domain, 4), 1) == 0.0
    assert coarea_lhs(v, CellSet.empty(v.domain, 4), 1)[0] == 0.0
    assert residual(2.0, 1.0) == 0.5
    assert residual(0.0, 0.0) == 0.0


def test_contour_lengths_simple_cells():
    corners = np.array(
        [
            [0.0, 1.0, 1.0, 0.0],  # f = x, level 0.5: vertical unit segment
            [0.0, 1.0, 2.0, 1.0],  # f = x + y, level 0.5: corner cut
            [1.0, 0.0, 1.0, 0.0],  # saddle, centre value 0.5 above the level
            [1.0, 1.0, 1.0, 1.0],  # flat cell, no crossing
        ]
    )
    y = np.array([0.5, 0.5, 0.4, 0.5])
    got = contour_lengths(corners, y)
    # asymptotic decider joins the high corners 0 and 2, so corners 1 and 3 are cut off
    np.testing.assert_allclose(got, [1.0, math.sqrt(2) / 2, 0.8 * math.sqrt(2), 0.0])
