import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import antichain_cover_values, occupied_tiers, similarity_dimension
from sardlab.funczoo import builtin, meets_cantor, parse_map
from sardlab.geometry import Cube
from sardlab.measures import (
    CellSet,
    box_dimension,
    critical_cells,
    critical_exponent,
    dyadic_dp,
    fubini_check,
    hausdorff_content,
    image_cellset,
    image_diameters,
    level_set_cells,
    level_set_content,
    phi_functional,
)

SQUARE = Cube((-1.0, -1.0), 2.0)
CANTOR_DIM = similarity_dimension(2, 1 / 3)


def random_cells(seed, n, level, fill=0.3):
    rng = np.random.default_rng(seed)
    mask = rng.random((2**level,) * n) < fill
    if not mask.any():
        mask.flat[rng.integers(mask.size)] = True
    return CellSet.from_mask(Cube.unit(n), mask)


def cantor_cells(level=14, generations=10) -> CellSet:
    lo = np.arange(2**level) / 2**level
    return CellSet(Cube.unit(1), level, np.argwhere(meets_cantor(lo, lo + 2.0**-level, 1 / 3, generations)))


# ------------------------------------------------------------- CellSet


def test_cellset_round_trips():
    s = random_cells(0, 2, 4)
    assert CellSet.from_mask(s.root, s.to_mask()).to_mask().tolist() == s.to_mask().tolist()
    fine = s.refine(6)
    assert len(fine) == 16 * len(s)
    assert fine.coarsen(4).to_mask().tolist() == s.to_mask().tolist()
    assert len(s.union(s)) == len(s)
    assert len(s.intersect(CellSet.empty(s.root, 4))) == 0


def test_cellset_points_and_predicate():
    root = Cube.unit(2)
    s = CellSet.from_points(root, 3, np.array([[0.01, 0.01], [0.99, 0.99], [0.01, 0.02]]))
    assert len(s) == 2
    assert s.contains_points(np.array([[0.05, 0.05], [0.5, 0.5]])).tolist() == [True, False]
    disk = CellSet.from_predicate(SQUARE, 4, lambda p: np.sum(p**2, axis=1) <= 1)
    assert len(disk) == np.sum(np.sum(disk.centers**2, axis=1) <= 1)


# ------------------------------------------------------- critical cells


def test_critical_cells_paraboloid_near_origin():
    v = builtin("paraboloid")
    s = critical_cells(v, SQUARE, 1, 6)
    assert 1 <= len(s) <= 16
    # every selected cell lies within two cells of the origin
    assert np.max(np.abs(s.centers)) <= 2.5 * s.side
    assert s.contains_points(np.zeros((1, 2)))[0]


def test_critical_cells_full_rank_and_constant():
    assert len(critical_cells(builtin("linear_rank", 2, 2, 2), Cube.unit(2), 2, 5)) == 0
    const = parse_map("(0*x0 + 1, 0*x1 + 2)", domain=Cube.unit(2))
    assert len(critical_cells(const, Cube.unit(2), 1, 4)) == 4**4


def test_critical_cells_gradient_bound():
    v = builtin("linear_rank", 2, 2, 1)
    assert len(critical_cells(v, Cube.unit(2), 2, 3, grad_tol=1.0)) == 64
    assert len(critical_cells(v, Cube.unit(2), 2, 3, grad_tol=0.5)) == 0


# --------------------------------------------------------- content DP


@pytest.mark.parametrize("depth", [0, 3, 7, 10])
def test_segment_content_is_one(depth):
    s = CellSet.full(Cube.unit(1), depth)
    assert hausdorff_content(s, 1.0).value == pytest.approx(1.0)


@pytest.mark.parametrize("depth", [2, 6, 10, 14])
def test_point_content_vanishes(depth):
    s = CellSet.from_points(Cube.unit(1), depth, np.array([[1 / 3]]))
    assert hausdorff_content(s, 0.5).value == pytest.approx(2 ** (-0.5 * depth))


def test_counting_convention():
    s = CellSet.from_points(Cube.unit(2), 4, np.array([[0.1, 0.1], [0.8, 0.8], [0.82, 0.8]]))
    assert hausdorff_content(s, 0.0).value == 2.0
    assert hausdorff_content(CellSet.empty(Cube.unit(2), 3), 0.5).value == 0.0


def test_cover_is_certified():
    s = random_cells(1, 2, 5)
    est = hausdorff_content(s, 1.3)
    assert est.cover.covers(s.centers)
    assert est.value == pytest.approx(sum(d**1.3 for d in est.cover.diameters))


def test_size_restricted_content():
    s = CellSet.full(Cube.unit(1), 6)
    assert hausdorff_content(s, 0.5, t=0.25).value == pytest.approx(4 * 0.25**0.5)
    with pytest.raises(ValueError):
        hausdorff_content(s, 0.5, t=1e-3)


def test_box_dimension_examples():
    assert box_dimension(CellSet.full(Cube.unit(2), 8)) == pytest.approx(2.0, abs=0.05)
    seg = CellSet.from_predicate(Cube.unit(2), 9, lambda p: np.abs(p[:, 0] - p[:, 1]) < 2**-9)
    assert box_dimension(seg) == pytest.approx(1.0, abs=0.05)
    assert box_dimension(cantor_cells(), range(4, 11)) == pytest.approx(CANTOR_DIM, abs=0.05)


def test_cantor_critical_exponent():
    beta = critical_exponent(cantor_cells(), np.linspace(0.3, 1.0, 15), range(4, 11))
    assert beta == pytest.approx(CANTOR_DIM, abs=0.05)


def integer_weight(level, idx):
    idx = np.atleast_2d(idx)
    primes = np.array([7919, 104729, 1299709])[: idx.shape[1]]
    return ((idx @ primes + 31 * level) % 23 + 1).astype(float) * 2.0 ** (-level)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**20), st.sampled_from([1, 2]), st.integers(0, 3), st.floats(0.05, 1.0))
def test_dp_matches_exhaustive_enumeration(seed, n, depth, fill):
    cells = random_cells(seed, n, depth, fill)
    value, chosen = dyadic_dp(cells, integer_weight)
    brute = antichain_cover_values(cells, lambda j, idx: float(integer_weight(j, np.array(idx))[0]))
    assert value == min(brute)
    # the reconstructed cover is an antichain covering every cell
    covered = np.zeros(len(cells), dtype=bool)
    for j, idx in chosen:
        anc = cells.cells >> (depth - j)
        covered |= (anc[:, None, :] == idx[None]).all(-1).any(1)
    assert covered.all()


def test_content_dp_matches_enumeration_on_the_full_tree():
    cells = CellSet.full(Cube.unit(2), 3)
    for beta in (0.5, 1.0, 2.0, 2.5):
        brute = antichain_cover_values(cells, lambda j, idx: (math.sqrt(2) * 2.0**-j) ** beta)
        assert len(brute) == 83522
        assert hausdorff_content(cells, beta).value == pytest.approx(min(brute), rel=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**20), st.integers(1, 3))
def test_phi_dp_matches_enumeration(seed, depth):
    v = builtin("conformal_square")
    cells = random_cells(seed, 2, depth, 0.5)
    cells = CellSet(SQUARE, depth, cells.cells)
    tiers = occupied_tiers(cells)
    diams = {}
    for j, tier in enumerate(tiers):
        idx = np.array(sorted(tier))
        for row, dm in zip(map(tuple, idx), image_diameters(v, cells, j, idx)):
            diams[(j, row)] = dm
    mu, q = 0.7, 1.5
    brute = antichain_cover_values(cells, lambda j, idx: (2.0 * math.sqrt(2) * 2.0**-j) ** mu * diams[(j, idx)] ** q)
    assert phi_functional(v, cells, mu, q).value == pytest.approx(min(brute), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**20), st.integers(0, 2**20), st.floats(0.2, 2.0))
def test_content_subadditive(s1, s2, beta):
    a, b = random_cells(s1, 2, 5, 0.1), random_cells(s2, 2, 5, 0.1)
    joint = hausdorff_content(a.union(b), beta).value
    assert joint <= hausdorff_content(a, beta).value + hausdorff_content(b, beta).value + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**20), st.floats(0.2, 2.0))
def test_deeper_covers_never_cost_more(seed, beta):
    s = random_cells(seed, 2, 6, 0.05)
    vals = [hausdorff_content(s, beta, max_depth=d).value for d in range(7)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_phi_monotone_in_depth_and_delta():
    v = builtin("conformal_square")
    cells = critical_cells(v, SQUARE, 2, 6)
    vals = [phi_functional(v, cells, 0.5, 1.5, max_depth=d).value for d in range(2, 7)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))
    diam0 = SQUARE.side * math.sqrt(2)
    psis = [phi_functional(v, cells, 0.5, 1.5, delta=diam0 * 2.0**-j).value for j in range(0, 7)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(psis, psis[1:]))


# ---------------------------------------------------- bridge functional


def test_phi_constant_map_vanishes():
    const = parse_map("(0*x0 + 3)", domain=Cube.unit(2))
    assert phi_functional(const, CellSet.full(Cube.unit(2), 4), 0.5, 1.0).value == 0.0


def test_phi_identity_is_an_image_content():
    ident = parse_map("(x0, x1)", domain=Cube.unit(2))
    vals = [phi_functional(ident, CellSet.full(Cube.unit(2), L), 0.0, 2.0).value for L in range(4, 9)]
    assert min(vals) > 1.0 and max(vals) < 3.0


def test_phi_borderline_linear_bounded_below():
    v = builtin("linear_rank", 2, 2, 1)
    vals = [phi_functional(v, CellSet.full(Cube.unit(2), L), 1.0, 1.0).value for L in range(4, 9)]
    assert min(vals) >= 1.0
    assert max(vals) / min(vals) < 1.5


def test_phi_argument_checks():
    v = builtin("paraboloid")
    s = CellSet.full(SQUARE, 3)
    with pytest.raises(ValueError):
        phi_functional(v, s, -0.1, 1.0)
    with pytest.raises(ValueError):
        phi_functional(v, s, 0.1, 0.0)
    with pytest.raises(ValueError):
        phi_functional(v, s, 0.1, 1.0, delta=1e-3)


# ------------------------------------------------------- level sets


def test_fold_level_set_content_vanishes():
    v = parse_map("(x0^2, x1)")
    vals = [level_set_content(v, [0.0, 0.3], SQUARE, 0.5, L, m=2).value for L in range(4, 10)]
    assert vals[-1] < vals[0]
    assert vals[-1] < 0.25
    sel = level_set_cells(v, [0.0, 0.3], SQUARE, 9, m=2)
    assert np.all(np.abs(sel.centers[:, 1] - 0.3) < 0.02)


def test_level_set_outside_image_is_empty():
    v = parse_map("(x0^2, x1)")
    assert level_set_content(v, [-0.5, 0.3], SQUARE, 0.5, 6, m=2).value == 0.0


def test_linear_level_set_bounded_below():
    v = builtin("linear_rank", 2, 2, 1)
    vals = [level_set_content(v, [0.4, 0.0], Cube.unit(2), 1.0, L, m=2).value for L in range(4, 9)]
    # the preimage is the segment {0.4} x [0, 1]
    assert min(vals) >= 1.0 - 1e-9


def test_level_set_needs_cells_or_rank():
    with pytest.raises(ValueError):
        level_set_cells(builtin("paraboloid"), [0.0], SQUARE, 4)


# ------------------------------------------------------ Fubini check


def test_fubini_constant_map_vacuous():
    const = parse_map("(0*x0 + 0*x1 + 1)", domain=Cube.unit(2))
    cells = CellSet.full(Cube.unit(2), 4)
    rep = fubini_check(const, cells, 0.5, 1.0, [0.1, 0.5, 1.0], image_cellset(const, cells, Cube((0.0,), 2.0), 4))
    assert rep.psi == 0.0
    assert rep.max_ratio == 0.0
    assert rep.passed()


@pytest.mark.parametrize("level", [5, 6])
def test_fubini_fold(level):
    v = parse_map("(x0^2, x1)")
    cells = critical_cells(v, SQUARE, 2, level)
    ys = image_cellset(v, cells, SQUARE, level)
    rep = fubini_check(v, cells, 0.5, 1.0, [0.1, 0.5, 1.0], ys)
    assert rep.max_ratio <= 1.2
    # more demanding thresholds select fewer values
    assert np.all(np.diff(rep.left) <= 0)


def test_fubini_identity():
    ident = parse_map("(x0, x1)", domain=Cube.unit(2))
    cells = CellSet.full(Cube.unit(2), 4)
    rep = fubini_check(ident, cells, 0.0, 2.0, [0.1, 0.5, 1.0], cells)
    np.testing.assert_allclose(rep.left, hausdorff_content(cells, 2.0).value)
    np.testing.assert_allclose(rep.right, 5 * rep.psi / np.array([0.1, 0.5, 1.0]))
    assert rep.max_ratio <= 1.2
