"""Covering functionals on dyadic cell sets.

Every estimator here minimises a cell weight over dyadic-antichain covers
by a bottom-up dynamic program: an occupied cell either pays its own
weight or the sum of its occupied children's optima.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import Cube, FiniteCover, certified_image_diameters, certified_image_radius, lattice
from .smallmat import rank_eps, spectra

# ---------------------------------------------------------------- cell sets


def _keys(idx: np.ndarray, level: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape[1] * level > 62:
        raise ValueError("level too deep for 64-bit cell keys")
    key = np.zeros(len(idx), dtype=np.int64)
    for i in range(idx.shape[1]):
        key = (key << level) | idx[:, i]
    return key


def _unique_rows(idx: np.ndarray, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Unique rows (sorted by key) and the inverse map."""
    keys = _keys(idx, level)
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return idx[first], inverse.reshape(-1)


@dataclass
class CellSet:
    """Distinct dyadic cells of one level below a root cube."""

    root: Cube
    level: int
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, self.root.n)
        if len(cells):
            if cells.min() < 0 or cells.max() >= 2**self.level:
                raise ValueError("cell index outside the root cube")
            cells, _ = _unique_rows(cells, self.level)
        self.cells = cells

    @property
    def n(self) -> int:
        return self.root.n

    @property
    def side(self) -> float:
        return self.root.side / 2**self.level

    @property
    def cell_diam(self) -> float:
        return self.side * math.sqrt(self.n)

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def lo(self) -> np.ndarray:
        return self.root.lo + self.side * self.cells

    @property
    def centers(self) -> np.ndarray:
        return self.lo + self.side / 2

    @classmethod
    def full(cls, root: Cube, level: int) -> "CellSet":
        axes = [np.arange(2**level)] * root.n
        idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, root.n)
        return cls(root, level, idx)

    @classmethod
    def empty(cls, root: Cube, level: int) -> "CellSet":
        return cls(root, level, np.zeros((0, root.n), dtype=np.int64))

    @classmethod
    def from_mask(cls, root: Cube, mask: np.ndarray) -> "CellSet":
        mask = np.asarray(mask, dtype=bool)
        level = int(round(math.log2(mask.shape[0])))
        if mask.shape != (2**level,) * root.n:
            raise ValueError(f"mask shape {mask.shape} is not a dyadic grid in R^{root.n}")
        return cls(root, level, np.argwhere(mask))

    @classmethod
    def from_points(cls, root: Cube, level: int, points: np.ndarray) -> "CellSet":
        """Cells containing the given points (points outside the root are dropped)."""
        points = np.atleast_2d(points)
        rel = (points - root.lo) / root.side
        inside = np.all((rel >= 0) & (rel <= 1), axis=1)
        idx = np.minimum(np.floor(rel[inside] * 2**level), 2**level - 1).astype(np.int64)
        return cls(root, level, idx)

    @classmethod
    def from_predicate(cls, root: Cube, level: int, predicate) -> "CellSet":
        """Cells whose center satisfies ``predicate(points) -> bool array``."""
        full = cls.full(root, level)
        return full.select(np.asarray(predicate(full.centers), dtype=bool))

    def to_mask(self) -> np.ndarray:
        mask = np.zeros((2**self.level,) * self.n, dtype=bool)
        if len(self.cells):
            mask[tuple(self.cells.T)] = True
        return mask

    def coarsen(self, level: int) -> "CellSet":
        if level > self.level:
            raise ValueError("cannot coarsen to a finer level")
        return CellSet(self.root, level, self.cells >> (self.level - level))

    def refine(self, level: int) -> "CellSet":
        if level < self.level:
            raise ValueError("cannot refine to a coarser level")
        shift = level - self.level
        offs = np.stack(np.meshgrid(*[np.arange(2**shift)] * self.n, indexing="ij"), axis=-1).reshape(-1, self.n)
        idx = ((self.cells << shift)[:, None, :] + offs[None]).reshape(-1, self.n)
        return CellSet(self.root, level, idx)

    def union(self, other: "CellSet") -> "CellSet":
        level = max(self.level, other.level)
        a, b = self.refine(level), other.refine(level)
        return CellSet(self.root, level, np.vstack([a.cells, b.cells]))

    def intersect(self, other: "CellSet") -> "CellSet":
        level = max(self.level, other.level)
        a, b = self.refine(level), other.refine(level)
        keep = np.isin(_keys(a.cells, level), _keys(b.cells, level))
        return CellSet(self.root, level, a.cells[keep])

    def select(self, mask: np.ndarray) -> "CellSet":
        return CellSet(self.root, self.level, self.cells[np.asarray(mask, dtype=bool)])

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Whether each point lies in a (closed) cell of the set."""
        points = np.atleast_2d(points)
        rel = (points - self.root.lo) / self.side
        out = np.zeros(len(points), dtype=bool)
        keys = set(_keys(self.cells, self.level).tolist())
        # a point on a cell face belongs to every adjacent cell
        base = np.floor(rel).astype(np.int64)
        for offs in np.ndindex(*(2,) * self.n):
            cand = base - np.asarray(offs)
            on_face = np.all((cand == base) | np.isclose(rel, base), axis=1)
            ok = on_face & np.all((cand >= 0) & (cand < 2**self.level), axis=1)
            if ok.any():
                k = _keys(np.clip(cand, 0, 2**self.level - 1), self.level)
                out |= ok & np.fromiter((int(x) in keys for x in k), bool, len(k))
        return out


# ----------------------------------------------------------- the covering DP


@dataclass
class CoverEstimate:
    """Upper bound certified by an explicit dyadic cover.

    ``levels`` and ``indices`` list the chosen cells; ``value`` is the
    sum of their weights. ``exponents`` holds (beta,) for plain content
    and (mu, q) for the bridge functionals.
    """

    value: float
    exponents: tuple[float, ...]
    cover: FiniteCover
    max_depth: int
    delta: float | None = None
    levels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int), repr=False)
    indices: list = field(default_factory=list, repr=False)
    note: str = ""


def dyadic_dp(cells: CellSet, weight, forced=None):
    """Minimise the total weight over antichain covers of ``cells``.

    ``weight(level, idx)`` returns one weight per cell row; ``forced(level)``
    says whether cells at that level must refine. Returns (value, chosen)
    where chosen is a list of (level, idx) arrays.
    """
    depth = cells.level
    if len(cells) == 0:
        return 0.0, []
    tiers = [cells.cells]
    parents = []
    for _ in range(depth):
        up, inv = _unique_rows(tiers[-1] >> 1, depth)
        tiers.append(up)
        parents.append(inv)
    tiers = tiers[::-1]  # tiers[j] = occupied cells at level j
    parents = parents[::-1]  # parents[j] maps tier j+1 rows to tier j rows
    best = weight(depth, tiers[depth]).astype(float)
    take = [None] * (depth + 1)
    take[depth] = np.ones(len(best), dtype=bool)
    for j in range(depth - 1, -1, -1):
        child_sum = np.bincount(parents[j], weights=best, minlength=len(tiers[j]))
        if forced is not None and forced(j):
            own = np.full(len(tiers[j]), np.inf)
        else:
            own = weight(j, tiers[j]).astype(float)
        take[j] = own <= child_sum
        best = np.where(take[j], own, child_sum)
    value = float(best.sum())
    # top-down reconstruction
    chosen = []
    active = np.ones(len(tiers[0]), dtype=bool)
    for j in range(depth + 1):
        pick = active & take[j]
        if pick.any():
            chosen.append((j, tiers[j][pick]))
        if j < depth:
            active = (active & ~take[j])[parents[j]]
    return value, chosen


def _cover_from_choice(root: Cube, chosen, diam_fn=None) -> tuple[FiniteCover, np.ndarray, list]:
    elements, diams, levels, indices = [], [], [], []
    for j, idx in chosen:
        side = root.side / 2**j
        lo = root.lo + side * idx
        dm = diam_fn(j, idx) if diam_fn else np.full(len(idx), side * math.sqrt(root.n))
        for row, dd in zip(lo, dm):
            elements.append((tuple(row), side))
            diams.append(float(dd))
        levels.append(np.full(len(idx), j))
        indices.append(idx)
    lv = np.concatenate(levels) if levels else np.zeros(0, dtype=int)
    return FiniteCover(elements, diams), lv, indices


def _clip_depth(cells: CellSet, max_depth: int | None) -> CellSet:
    if max_depth is None or max_depth >= cells.level:
        return cells
    if max_depth < 0:
        raise ValueError("max_depth must be nonnegative")
    return cells.coarsen(max_depth)


def hausdorff_content(cells: CellSet, beta: float, max_depth: int | None = None, t: float | None = None) -> CoverEstimate:
    """Dyadic upper bound on the beta-dimensional Hausdorff content.

    Depth is capped by the cell set's own level. With ``t`` set, only
    cover elements of diameter <= t are allowed (the size-restricted
    content). For beta <= 0 the counting convention applies: the value is
    the number of connected components of the occupied cells (face or
    corner adjacency).
    """
    s = _clip_depth(cells, max_depth)
    depth = s.level
    if beta <= 0:
        cover, lv, idx = _cover_from_choice(s.root, [(depth, s.cells)] if len(s) else [])
        if len(s) == 0:
            return CoverEstimate(0.0, (beta,), cover, depth, levels=lv, indices=idx, note="counting")
        _, count = ndimage.label(s.to_mask(), structure=np.ones((3,) * s.n))
        return CoverEstimate(float(count), (beta,), cover, depth, levels=lv, indices=idx, note="counting")

    def weight(j, idx):
        return np.full(len(idx), (s.root.side / 2**j * math.sqrt(s.n)) ** beta)

    forced = None
    if t is not None:
        if s.cell_diam > t * (1 + 1e-12):
            raise ValueError(f"t={t} is finer than the cells (diameter {s.cell_diam})")

        def forced(j):
            return s.root.side / 2**j * math.sqrt(s.n) > t * (1 + 1e-12)

    value, chosen = dyadic_dp(s, weight, forced)
    cover, lv, idx = _cover_from_choice(s.root, chosen)
    return CoverEstimate(value, (beta,), cover, depth, t, lv, idx)


def box_dimension(cells, levels=None) -> float:
    """Least-squares slope of log2(occupied count) against level.

    ``cells`` is either a fine CellSet (coarsened to each of ``levels``) or
    a sequence of CellSets at distinct levels.
    """
    if isinstance(cells, CellSet):
        if levels is None:
            levels = list(range(max(1, cells.level - 5), cells.level + 1))
        sets = [cells.coarsen(j) for j in levels]
    else:
        sets = list(cells)
    if len(sets) < 4:
        raise ValueError("box_dimension needs at least 4 levels")
    lv = np.array([s.level for s in sets], dtype=float)
    counts = np.array([len(s) for s in sets], dtype=float)
    if np.any(counts == 0):
        raise ValueError("empty cell set at some level")
    if np.ptp(lv) == 0 or np.ptp(counts) == 0:
        raise ValueError("degenerate regression: counts do not change with level")
    slope, _ = np.polyfit(lv, np.log2(counts), 1)
    return float(slope)


def content_growth_slope(cells: CellSet, beta: float, levels) -> float:
    """Slope of log2 H^beta_t against j for t = diameter of level-j cells.

    The size-restricted content grows like 2^(j (dim - beta)) below the
    dimension and stays bounded above it.
    """
    diam0 = cells.root.side * math.sqrt(cells.n)
    vals = np.array([hausdorff_content(cells, beta, t=diam0 / 2**j).value for j in levels])
    slope, _ = np.polyfit(np.asarray(levels, dtype=float), np.log2(vals), 1)
    return float(slope)


def critical_exponent(cells: CellSet, betas, levels) -> float:
    """Exponent at which size-restricted content stops growing as t shrinks.

    Fits ``slope(beta) = a * max(0, beta_c - beta)`` to the measured growth
    slopes by a grid search over beta_c with least-squares ``a``.
    """
    betas = np.asarray(betas, dtype=float)
    slopes = np.array([content_growth_slope(cells, b, levels) for b in betas])
    best = (np.inf, float("nan"))
    for bc in np.linspace(betas.min(), betas.max(), 2001):
        x = np.maximum(0.0, bc - betas)
        denom = float(x @ x)
        a = float(x @ slopes) / denom if denom > 0 else 0.0
        err = float(np.sum((slopes - a * x) ** 2))
        if err < best[0]:
            best = (err, bc)
    return best[1]


# ------------------------------------------------------- critical cells


def _node_qualifies(vmap, pts: np.ndarray, m: int, grad_tol: float) -> np.ndarray:
    jac = vmap.jacobian(pts)
    s = spectra(jac)
    low_rank = rank_eps(s) < m
    small = np.sqrt(np.sum(jac**2, axis=(1, 2))) <= grad_tol
    return np.atleast_1d(low_rank & small)


def critical_cells(vmap, cube: Cube, m: int, level: int, grad_tol: float = 1.0, use_descriptor: bool = True) -> CellSet:
    """Cells of level ``level`` over ``cube`` meeting {rank grad v < m, |grad v| <= grad_tol}.

    A cell is kept when any of its corners or its center qualifies. When
    the map carries an exact critical-set descriptor, cells it reports are
    added as long as the gradient bound can hold somewhere in the cell.
    """
    n = cube.n
    res = 2**level
    nodes = lattice(cube, res + 1)
    node_ok = _node_qualifies(vmap, nodes.reshape(-1, n), m, grad_tol).reshape((res + 1,) * n)
    cell_ok = np.zeros((res,) * n, dtype=bool)
    for offs in np.ndindex(*(2,) * n):
        cell_ok |= node_ok[tuple(slice(o, o + res) for o in offs)]
    side = cube.side / res
    grid = np.stack(np.meshgrid(*[np.arange(res)] * n, indexing="ij"), axis=-1).reshape(-1, n)
    centers = cube.lo + side * (grid + 0.5)
    cell_ok |= _node_qualifies(vmap, centers, m, grad_tol).reshape((res,) * n)
    if use_descriptor and getattr(vmap, "critical_test", None) is not None:
        lo = cube.lo + side * grid
        exact = np.asarray(vmap.critical_test(lo, lo + side, m), dtype=bool)
        if exact.any() and vmap.smoothness.k >= 1:
            jac = vmap.jacobian(centers[exact])
            g = np.sqrt(np.sum(jac**2, axis=(1, 2)))
            slack = vmap.grad_modulus(side * math.sqrt(n) / 2)
            exact[exact] = g <= grad_tol + slack
        cell_ok |= exact.reshape((res,) * n)
    return CellSet(cube, level, np.argwhere(cell_ok))


# ----------------------------------------------------- bridge functionals


def image_diameters(vmap, cells: CellSet, level: int, idx: np.ndarray) -> np.ndarray:
    """Certified diam v(D) for cells ``idx`` at ``level`` of the cell set's root.

    Coarse levels have few cells, so they get denser sub-lattices (and
    tighter bounds) under a fixed work budget: sample count for scalar maps,
    pair count for vector maps.
    """
    side = cells.root.side / 2**level
    lo = cells.root.lo + side * idx
    k = max(len(idx), 1)
    if vmap.d == 1:
        per = (200_000 / k) ** (1.0 / cells.n)
    else:
        per = (2_000_000 / k) ** (1.0 / (2 * cells.n))
    per = int(np.clip(np.floor(per), 3, 33))
    return certified_image_diameters(vmap, lo, side, per_axis=per)


def phi_functional(vmap, cells: CellSet, mu: float, q: float, max_depth: int | None = None, delta: float | None = None) -> CoverEstimate:
    """Dyadic upper bound on the bridge functional sum (diam D)^mu (diam v(D))^q.

    With ``delta`` set, cells of diameter above delta must refine, giving
    the diameter-constrained variant.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if q <= 0:
        raise ValueError("q must be positive")
    s = _clip_depth(cells, max_depth)
    cache: dict[int, np.ndarray] = {}

    def img(j, idx):
        if j not in cache:
            cache[j] = image_diameters(vmap, s, j, idx)
        return cache[j]

    def weight(j, idx):
        dm = s.root.side / 2**j * math.sqrt(s.n)
        return dm**mu * img(j, idx) ** q

    forced = None
    if delta is not None:
        if delta <= 0:
            raise ValueError("delta must be positive")
        if s.cell_diam > delta * (1 + 1e-12):
            raise ValueError(f"delta={delta} is finer than the cells (diameter {s.cell_diam})")

        def forced(j):
            return s.root.side / 2**j * math.sqrt(s.n) > delta * (1 + 1e-12)

    value, chosen = dyadic_dp(s, weight, forced)
    # weights were evaluated on full tiers; recompute diameters of the chosen cells
    cover, lv, idx = _cover_from_choice(s.root, chosen, lambda j, ix: image_diameters(vmap, s, j, ix))
    return CoverEstimate(value, (mu, q), cover, s.level, delta, lv, idx)


def level_set_cells(vmap, y, cube: Cube, level: int, modulus=None, critical: CellSet | None = None, m: int | None = None, grad_tol: float = 1.0) -> CellSet:
    """Critical cells D with |y - v(center D)| <= modulus(diam D)."""
    if critical is None:
        if m is None:
            raise ValueError("pass the critical CellSet or m")
        critical = critical_cells(vmap, cube, m, level, grad_tol)
    if critical.level != level:
        critical = critical.refine(level) if critical.level < level else critical.coarsen(level)
    if len(critical) == 0:
        return critical
    y = np.atleast_1d(np.asarray(y, dtype=float))
    centers = critical.centers
    if modulus is None:
        vals, radius = certified_image_radius(vmap, centers, critical.side)
    else:
        vals = vmap(centers)
        radius = np.full(len(centers), float(modulus(critical.cell_diam)))
    dist = np.linalg.norm(vals - y[None, :], axis=1)
    return critical.select(dist <= radius)


def level_set_content(vmap, y, cube: Cube, mu: float, level: int, modulus=None, critical: CellSet | None = None, m: int | None = None, grad_tol: float = 1.0) -> CoverEstimate:
    """Content at exponent mu of the critical cells whose image may contain y."""
    sel = level_set_cells(vmap, y, cube, level, modulus, critical, m, grad_tol)
    return hausdorff_content(sel, mu)


def image_cellset(vmap, cells: CellSet, y_root: Cube, y_level: int, per_axis: int = 5) -> CellSet:
    """Value-space cells hit by v on a per_axis^n sub-lattice of every cell."""
    n = cells.n
    t = np.linspace(0.0, 1.0, per_axis)
    offs = np.stack(np.meshgrid(*[t] * n, indexing="ij"), axis=-1).reshape(-1, n) * cells.side
    pts = (cells.lo[:, None, :] + offs[None]).reshape(-1, n)
    return CellSet.from_points(y_root, y_level, vmap(pts))


@dataclass
class FubiniReport:
    lambdas: np.ndarray
    left: np.ndarray
    right: np.ndarray
    ratios: np.ndarray
    psi: float
    level: int
    delta: float
    vacuous: np.ndarray
    seed: int | None = None

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0

    def passed(self, tol: float = 0.2) -> bool:
        return bool(np.all(self.ratios <= 1.0 + tol))


def fubini_check(vmap, cells: CellSet, mu: float, q: float, lambdas, y_samples: CellSet, grad_tol: float = 1.0, seed: int | None = None) -> FubiniReport:
    """Compare H^q{y : H^mu(E ∩ v^-1(y)) >= lambda} with 5 Psi(E) / lambda.

    ``y_samples`` is a cell set in value space; each cell stands for the
    values it contains and is probed at its center. The left side is the
    q-content of the cells whose probe passes the threshold; Psi uses
    delta = four times the cell diameter of ``cells``.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    contents = np.array([
        level_set_content(vmap, y, cells.root, mu, cells.level, critical=cells).value for y in y_samples.centers
    ])
    delta = 4 * cells.cell_diam
    psi = phi_functional(vmap, cells, mu, q, delta=delta).value if len(cells) else 0.0
    left = np.array([hausdorff_content(y_samples.select(contents >= lam), q).value for lam in lambdas])
    right = 5.0 * psi / lambdas
    vacuous = left == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(vacuous, 0.0, left / right)
    return FubiniReport(lambdas, left, right, ratios, psi, cells.level, delta, vacuous, seed)
