"""Two-sided numerical check of the coarea formula with the m-Jacobian.

Left side: midpoint quadrature of J_m v over the cells of E. Right side:
integral over a y-grid of the (n - m)-dimensional measure of
E ∩ v^-1(y), with the level sets extracted from lattice samples of v.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import lattice
from .measures import CellSet
from .smallmat import jm, spectra

SUPPORTED = {(2, 1), (2, 2), (3, 1), (3, 2), (3, 3)}

# irrational y-grid shifts, distinct per axis: a common shift would put
# nodes on the diagonal faces y_i = y_j of Kuhn simplices under maps that
# permute coordinates
_Y_SHIFT = np.array([(math.sqrt(5) - 1) / 2, math.sqrt(2) - 1, math.sqrt(3) - 1])


class UnsupportedDimensions(ValueError):
    pass


@dataclass
class CoareaReport:
    lhs: float
    rhs: float
    residual: float
    resolution: int
    m: int
    y_resolution: int
    warnings: list[str] = field(default_factory=list)


def residual(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / max(lhs, 1e-12)


def _check(vmap, cells: CellSet, m: int):
    n, d = cells.n, vmap.d
    if vmap.n != n:
        raise ValueError("map and cell set live in different dimensions")
    if not 1 <= m <= min(n, d):
        raise UnsupportedDimensions(f"need 1 <= m <= min(n, d), got m={m}")
    if d != m or (n, m) not in SUPPORTED:
        raise UnsupportedDimensions(f"coarea right side supports d = m with (n, m) in {sorted(SUPPORTED)}; got n={n}, d={d}, m={m}")


def coarea_lhs(vmap, cells: CellSet, m: int, rank_tol: float = 1e-6) -> tuple[float, list[str]]:
    """Midpoint rule for int_E J_m v over the cells of E.

    Reports (not raises) centers where rank grad v exceeds m.
    """
    warnings = []
    if len(cells) == 0:
        return 0.0, warnings
    jac = vmap.jacobian(cells.centers)
    s = spectra(jac)
    if m < s.shape[-1]:
        bad = int(np.sum(s[:, m] > rank_tol * (1 + s[:, 0])))
        if bad:
            warnings.append(f"rank exceeds m={m} at {bad} of {len(cells)} cell centers")
    return float(np.sum(jm(s, m)) * cells.side**cells.n), warnings


# --------------------------------------------------------------- sampling


def _node_values(vmap, cells: CellSet) -> np.ndarray:
    res = 2**cells.level
    pts = lattice(cells.root, res + 1)
    return vmap(pts.reshape(-1, cells.n)).reshape((res + 1,) * cells.n + (vmap.d,))


def _corner_values(values: np.ndarray, cells: CellSet, offsets) -> np.ndarray:
    """Values at the given corner offsets of every cell, shape (K, len(offsets), d)."""
    idx = cells.cells
    out = [values[tuple((idx + np.asarray(o)).T)] for o in offsets]
    return np.stack(out, axis=1)


def _y_grid(samples: np.ndarray, y_resolution: int):
    """Origin and step of a y-grid over the padded bounding box of the samples."""
    lo, hi = samples.min(axis=0), samples.max(axis=0)
    width = float(np.max(hi - lo))
    if width <= 0:
        width = 1.0
    dy = width / y_resolution
    origin = lo - dy * (1 + _Y_SHIFT[: samples.shape[1]])
    return origin, dy


# ---------------------------------------------------------- (2, 1) contours

_SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]
_EDGES = [(0, 1), (1, 2), (2, 3), (3, 0)]
_PAIRS = {3: (0, 1), 5: (0, 2), 9: (0, 3), 6: (1, 2), 10: (1, 3), 12: (2, 3)}


def contour_lengths(corners: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Length of {f = y} in unit squares by marching squares.

    ``corners`` (K, 4) holds values at (0,0), (1,0), (1,1), (0,1). Edge
    crossings are linear interpolants; the two-crossing ambiguity of
    saddle cells is resolved by the asymptotic decider, which compares y
    with the bilinear interpolant's saddle value.
    """
    geo = np.asarray(_SQUARE, dtype=float)
    above = corners >= y[:, None]
    pts = np.zeros((len(y), 4, 2))
    hit = np.zeros((len(y), 4), dtype=bool)
    for e, (a, b) in enumerate(_EDGES):
        fa, fb = corners[:, a], corners[:, b]
        cross = above[:, a] != above[:, b]
        t = np.where(cross, (y - fa) / np.where(cross, fb - fa, 1.0), 0.0)
        pts[:, e] = geo[a] + t[:, None] * (geo[b] - geo[a])
        hit[:, e] = cross
    code = hit @ (1 << np.arange(4))
    dist = np.linalg.norm(pts[:, :, None, :] - pts[:, None, :, :], axis=-1)
    rows = np.arange(len(y))
    length = np.zeros(len(y))
    for c, (a, b) in _PAIRS.items():
        sel = code == c
        length[sel] = dist[rows[sel], a, b]
    saddle = code == 15
    if saddle.any():
        f = corners[saddle]
        denom = f[:, 0] + f[:, 2] - f[:, 1] - f[:, 3]
        centre = np.where(denom != 0, (f[:, 0] * f[:, 2] - f[:, 1] * f[:, 3]) / np.where(denom != 0, denom, 1.0), f.mean(axis=1))
        same = (centre >= y[saddle]) == above[saddle, 0]
        r = rows[saddle]
        cut_odd = dist[r, 0, 1] + dist[r, 2, 3]  # separates corners 1 and 3
        cut_even = dist[r, 3, 0] + dist[r, 1, 2]  # separates corners 0 and 2
        length[saddle] = np.where(same, cut_odd, cut_even)
    return length


def _rhs_planar_contours(values, cells: CellSet, y_resolution: int) -> float:
    corners = _corner_values(values, cells, _SQUARE)[..., 0]
    origin, dy = _y_grid(corners.reshape(-1, 1), y_resolution)
    origin = float(origin[0])
    first = np.ceil((corners.min(axis=1) - origin) / dy).astype(np.int64)
    last = np.floor((corners.max(axis=1) - origin) / dy).astype(np.int64)
    total = 0.0
    for o in range(int(np.max(last - first, initial=-1)) + 1):
        sel = last - first >= o
        y = origin + (first[sel] + o) * dy
        total += float(np.sum(contour_lengths(corners[sel], y)))
    return total * cells.side * dy


# -------------------------------------------------------- simplex methods


def _simplices(n: int) -> list[list[tuple[int, ...]]]:
    """Kuhn triangulation of the unit cube: one simplex per axis permutation."""
    out = []
    for perm in itertools.permutations(range(n)):
        v = [0] * n
        verts = [tuple(v)]
        for ax in perm:
            v[ax] = 1
            verts.append(tuple(v))
        out.append(verts)
    return out


def _simplex_data(values, cells: CellSet):
    """Vertex values (S, n+1, d) and coordinates (S, n+1, n) of all simplices."""
    vals, coords = [], []
    for verts in _simplices(cells.n):
        vals.append(_corner_values(values, cells, verts))
        coords.append(cells.lo[:, None, :] + cells.side * np.asarray(verts, dtype=float)[None])
    return np.concatenate(vals), np.concatenate(coords)


def _offset_loop(lo_idx: np.ndarray, hi_idx: np.ndarray):
    """Yield (selection, y-node index) pairs covering each row's index box."""
    span = hi_idx - lo_idx
    if len(span) == 0:
        return
    top = np.max(span, axis=0)
    for off in itertools.product(*[range(int(t) + 1) for t in top]):
        off = np.asarray(off)
        sel = np.all(span >= off, axis=1)
        if sel.any():
            yield sel, lo_idx[sel] + off


def _rhs_counting(values, cells: CellSet, y_resolution: int) -> float:
    """n = m: integrate the preimage count by counting y-nodes in simplex images."""
    simp, _ = _simplex_data(values, cells)
    m = simp.shape[-1]
    base = simp[:, 0, :]
    mat = np.swapaxes(simp[:, 1:, :] - base[:, None, :], 1, 2)  # (S, m, m), columns are edges
    det = np.linalg.det(mat)
    scale = np.max(np.abs(mat), axis=(1, 2)) ** m
    good = np.abs(det) > 1e-12 * np.maximum(scale, 1e-300)
    if not good.any():
        return 0.0
    simp, base, mat = simp[good], base[good], mat[good]
    inv = np.linalg.inv(mat)
    origin, dy = _y_grid(simp.reshape(-1, m), y_resolution)
    lo_idx = np.ceil((simp.min(axis=1) - origin) / dy).astype(np.int64)
    hi_idx = np.floor((simp.max(axis=1) - origin) / dy).astype(np.int64)
    count = 0
    for sel, node in _offset_loop(lo_idx, hi_idx):
        y = origin + node * dy
        lam = np.einsum("kij,kj->ki", inv[sel], y - base[sel])
        inside = np.all(lam >= 0, axis=1) & (lam.sum(axis=1) <= 1)
        count += int(inside.sum())
    return count * dy**m


def _rhs_surfaces(values, cells: CellSet, y_resolution: int) -> float:
    """n = 3, m = 1: marching-tetrahedra area of each level set."""
    simp, coords = _simplex_data(values, cells)
    f = simp[..., 0]
    origin, dy = _y_grid(f.reshape(-1, 1), y_resolution)
    origin = float(origin[0])
    lo_idx = np.ceil((f.min(axis=1) - origin) / dy).astype(np.int64)[:, None]
    hi_idx = np.floor((f.max(axis=1) - origin) / dy).astype(np.int64)[:, None]
    total = 0.0
    for sel, node in _offset_loop(lo_idx, hi_idx):
        y = origin + node[:, 0] * dy
        total += float(np.sum(_tet_level_area(f[sel], coords[sel], y)))
    return total * dy


def _tet_level_area(f: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    above = f >= y[:, None]
    na = above.sum(axis=1)
    area = np.zeros(len(y))

    def cross_point(rows, a, b):
        fa, fb = f[rows, a], f[rows, b]
        t = (y[rows] - fa) / (fb - fa)
        return x[rows, a] + t[:, None] * (x[rows, b] - x[rows, a])

    # one vertex separated: triangle
    for lone_state in (True, False):
        count = 1 if lone_state else 3
        rows = np.nonzero(na == count)[0]
        if len(rows) == 0:
            continue
        lone = np.argmax(above[rows] == lone_state, axis=1)
        others = np.array([[j for j in range(4) if j != i] for i in range(4)])[lone]
        p = [cross_point(rows, lone, others[:, j]) for j in range(3)]
        area[rows] = 0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0]), axis=1)
    # two and two: planar quadrilateral
    rows = np.nonzero(na == 2)[0]
    if len(rows):
        order = np.argsort(~above[rows], axis=1, kind="stable")
        a, b, c, d = (order[:, j] for j in range(4))
        p0, p1 = cross_point(rows, a, c), cross_point(rows, a, d)
        p2, p3 = cross_point(rows, b, d), cross_point(rows, b, c)
        area[rows] = 0.5 * np.linalg.norm(np.cross(p2 - p0, p3 - p1), axis=1)
    return area


def _rhs_curves(values, cells: CellSet, y_resolution: int) -> float:
    """n = 3, m = 2: length of the segment {PL v = y} in every tetrahedron."""
    simp, coords = _simplex_data(values, cells)
    # barycentric system [F^T; 1] lambda = [y; 1]
    mats = np.concatenate([np.swapaxes(simp, 1, 2), np.ones((len(simp), 1, 4))], axis=1)  # (S, 3, 4)
    minors = np.stack([np.linalg.det(np.delete(mats, i, axis=2)) for i in range(4)], axis=1)
    kern = minors * np.array([1, -1, 1, -1])
    knorm = np.linalg.norm(kern, axis=1)
    # the cofactor vector vanishes exactly when the system has rank < 3, and
    # such simplices have level sets of measure zero in y
    good = knorm > 1e-14 * np.max(knorm, initial=0.0)
    if not good.any():
        return 0.0
    simp, coords, mats, kern = simp[good], coords[good], mats[good], kern[good]
    pinv = np.linalg.pinv(mats)  # (S, 4, 3)
    direction = np.einsum("kji,kj->ki", coords, kern)  # x-space direction of the kernel line
    dlen = np.linalg.norm(direction, axis=1)
    origin, dy = _y_grid(simp.reshape(-1, 2), y_resolution)
    lo_idx = np.ceil((simp.min(axis=1) - origin) / dy).astype(np.int64)
    hi_idx = np.floor((simp.max(axis=1) - origin) / dy).astype(np.int64)
    total = 0.0
    for sel, node in _offset_loop(lo_idx, hi_idx):
        y = origin + node * dy
        rhs = np.concatenate([y, np.ones((len(y), 1))], axis=1)
        lam0 = np.einsum("kij,kj->ki", pinv[sel], rhs)
        k = kern[sel]
        # lambda_i(t) = lam0_i + t k_i >= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = -lam0 / k
        lower = np.where(k > 0, bound, -np.inf).max(axis=1)
        upper = np.where(k < 0, bound, np.inf).min(axis=1)
        # coordinates with k_i = 0 must already be feasible
        feasible = np.all((k != 0) | (lam0 >= -1e-12), axis=1)
        seg = np.where(feasible & (upper > lower), upper - lower, 0.0)
        total += float(np.sum(seg * dlen[sel]))
    return total * dy**2


def coarea_rhs(vmap, cells: CellSet, m: int, y_resolution: int | None = None) -> float:
    """int over y of H^(n-m)(E ∩ v^-1(y)) on a padded y-grid."""
    _check(vmap, cells, m)
    if len(cells) == 0:
        return 0.0
    y_resolution = y_resolution or 2**cells.level
    values = _node_values(vmap, cells)
    n = cells.n
    if n - m == 1 and n == 2:
        return _rhs_planar_contours(values, cells, y_resolution)
    if n == m:
        return _rhs_counting(values, cells, y_resolution)
    if (n, m) == (3, 1):
        return _rhs_surfaces(values, cells, y_resolution)
    return _rhs_curves(values, cells, y_resolution)


def coarea_report(vmap, cells: CellSet, m: int, y_resolution: int | None = None) -> CoareaReport:
    _check(vmap, cells, m)
    lhs, warnings = coarea_lhs(vmap, cells, m)
    y_resolution = y_resolution or 2**cells.level
    rhs = coarea_rhs(vmap, cells, m, y_resolution)
    return CoareaReport(lhs, rhs, residual(lhs, rhs), 2**cells.level, m, y_resolution, warnings)
