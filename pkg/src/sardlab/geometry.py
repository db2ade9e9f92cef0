"""Cubes, dyadic cells, lattice samples and finite covers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Cube:
    """Closed axis-aligned cube ``corner + [0, side]^n``."""

    corner: tuple[float, ...]
    side: float

    def __post_init__(self):
        object.__setattr__(self, "corner", tuple(float(c) for c in np.atleast_1d(self.corner)))
        if not self.side > 0:
            raise ValueError(f"cube side must be positive, got {self.side}")

    @classmethod
    def unit(cls, n: int) -> "Cube":
        return cls((0.0,) * n, 1.0)

    @classmethod
    def centered(cls, center, side: float) -> "Cube":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return cls(tuple(center - side / 2), side)

    @property
    def n(self) -> int:
        return len(self.corner)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.corner)

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.side

    @property
    def center(self) -> np.ndarray:
        return self.lo + self.side / 2

    @property
    def volume(self) -> float:
        return self.side**self.n

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)


def diam(c: Cube) -> float:
    return c.side * math.sqrt(c.n)


@dataclass(frozen=True)
class DyadicCell:
    """Cell ``index`` at ``level`` of the dyadic tree over a root cube."""

    level: int
    index: tuple[int, ...]

    def cube(self, root: Cube) -> Cube:
        side = root.side / 2**self.level
        return Cube(tuple(root.lo + side * np.asarray(self.index)), side)

    def parent(self) -> "DyadicCell":
        if self.level == 0:
            raise ValueError("root cell has no parent")
        return DyadicCell(self.level - 1, tuple(i >> 1 for i in self.index))


def children(cell: DyadicCell) -> list[DyadicCell]:
    n = len(cell.index)
    base = [2 * i for i in cell.index]
    return [
        DyadicCell(cell.level + 1, tuple(b + o for b, o in zip(base, offs)))
        for offs in itertools.product((0, 1), repeat=n)
    ]


def cell_bounds(root: Cube, level: int, idx: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower corners (K, n) and common side for integer cell indices (K, n)."""
    side = root.side / 2**level
    return root.lo + side * np.asarray(idx, dtype=float), side


def lattice(cube: Cube, resolution: int) -> np.ndarray:
    """Closed-cube lattice points, shape ``(resolution,)*n + (n,)``, C order."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axes = [np.linspace(lo, lo + cube.side, resolution) for lo in cube.lo]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def trapezoid_weights(cube: Cube, resolution: int) -> np.ndarray:
    h = cube.side / (resolution - 1)
    w1 = np.full(resolution, h)
    w1[[0, -1]] = h / 2
    w = w1
    for _ in range(cube.n - 1):
        w = np.multiply.outer(w, w1)
    return w


@dataclass
class GridField:
    """Values of a map on the closed lattice of ``cube``.

    ``values`` has shape ``(resolution,)*n + (d,)``.
    """

    cube: Cube
    resolution: int
    values: np.ndarray
    weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.cube.n
        if self.values.ndim == n:
            self.values = self.values[..., None]
        expected = (self.resolution,) * n
        if self.values.shape[:n] != expected:
            raise ValueError(f"values shape {self.values.shape} does not match lattice {expected}")
        if self.weights is None:
            self.weights = trapezoid_weights(self.cube, self.resolution)

    @property
    def n(self) -> int:
        return self.cube.n

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    @property
    def spacing(self) -> float:
        return self.cube.side / (self.resolution - 1)

    @property
    def points(self) -> np.ndarray:
        return lattice(self.cube, self.resolution)

    @property
    def scalar(self) -> np.ndarray:
        if self.d != 1:
            raise ValueError("field is vector valued")
        return self.values[..., 0]

    def replace_values(self, values) -> "GridField":
        return GridField(self.cube, self.resolution, values, self.weights)

    @classmethod
    def from_function(cls, f, cube: Cube, resolution: int) -> "GridField":
        pts = lattice(cube, resolution)
        vals = np.asarray(f(pts.reshape(-1, cube.n)), dtype=float)
        return cls(cube, resolution, vals.reshape((resolution,) * cube.n + (-1,)))


class SampleError(RuntimeError):
    def __init__(self, point, cause):
        super().__init__(f"map evaluation failed at {np.asarray(point).tolist()}: {cause}")
        self.point = point


def sample(vmap, cube: Cube, resolution: int) -> GridField:
    if vmap.n != cube.n:
        raise ValueError(f"map is defined on R^{vmap.n}, cube lives in R^{cube.n}")
    pts = lattice(cube, resolution).reshape(-1, cube.n)
    try:
        vals = vmap(pts)
    except Exception as exc:
        # locate the first offending point for the error message
        for p in pts:
            try:
                vmap(p[None])
            except Exception as inner:
                raise SampleError(p, inner) from inner
        raise
    if not np.all(np.isfinite(vals)):
        bad = pts[~np.all(np.isfinite(vals), axis=-1)][0]
        raise SampleError(bad, "non-finite value")
    return GridField(cube, resolution, vals.reshape((resolution,) * cube.n + (vmap.d,)))


@dataclass
class FiniteCover:
    """Finite family of cubes (or points, side 0) with their diameters."""

    elements: list[tuple[tuple[float, ...], float]]
    diameters: list[float]

    def __post_init__(self):
        if len(self.elements) != len(self.diameters):
            raise ValueError("one diameter per element")
        if any(dm < 0 for dm in self.diameters):
            raise ValueError("diameters must be nonnegative")

    def __len__(self):
        return len(self.elements)

    def covers(self, points, tol: float = 1e-12) -> bool:
        points = np.atleast_2d(points)
        if not self.elements:
            return len(points) == 0
        lo = np.array([e[0] for e in self.elements])
        side = np.array([e[1] for e in self.elements])
        inside = np.all(
            (points[:, None, :] >= lo[None] - tol) & (points[:, None, :] <= lo[None] + side[None, :, None] + tol),
            axis=-1,
        )
        return bool(np.all(inside.any(axis=1)))


def point_diameter(points: np.ndarray) -> float:
    """Largest pairwise Euclidean distance of a point cloud (N, d)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if len(points) < 2:
        return 0.0
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    if len(points) > 64 and points.shape[1] <= 3:
        from scipy.spatial import ConvexHull, QhullError

        try:
            points = points[ConvexHull(points).vertices]
        except (QhullError, ValueError):
            pass
    if len(points) > 4000:
        # degenerate hull fallback: the farthest pair lies on the bounding box extremes
        ext = np.unique(np.concatenate([points.argmin(0), points.argmax(0)]))
        far = np.max(np.linalg.norm(points[:, None, :] - points[None, ext, :], axis=-1))
        return float(far)
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diff, diff))))


def _sublattice_offsets(n: int, per_axis: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, per_axis)
    return np.stack(np.meshgrid(*([t] * n), indexing="ij"), axis=-1).reshape(-1, n)


def certified_image_diameters(vmap, lo: np.ndarray, side: float, per_axis: int = 3, chunk: int = 20000) -> np.ndarray:
    """Upper bounds on diam v(D) for cells ``D = lo_i + [0, side]^n``.

    Sample spread over a ``per_axis^n`` sub-lattice, padded by
    ``2 G rho`` where ``rho`` is the covering radius of the sub-lattice and
    ``G`` bounds |grad v| on the cell: the largest sampled gradient norm
    plus the map's gradient modulus at ``rho``.
    """
    lo = np.atleast_2d(lo)
    n = lo.shape[1]
    offs = _sublattice_offsets(n, per_axis) * side
    h = side / (per_axis - 1)
    rho = h * math.sqrt(n) / 2
    smooth = vmap.smoothness.k >= 1
    pad_trunc = 2.0 * getattr(vmap, "truncation_error", 0.0)
    out = np.empty(len(lo))
    chunk = max(1, min(chunk, 4_000_000 // len(offs) ** 2))
    for s in range(0, len(lo), chunk):
        block = lo[s:s + chunk]
        pts = (block[:, None, :] + offs[None]).reshape(-1, n)
        vals = vmap(pts).reshape(len(block), len(offs), -1)
        if vals.shape[-1] == 1:
            spread = vals[..., 0].max(axis=1) - vals[..., 0].min(axis=1)
        else:
            diff = vals[:, :, None, :] - vals[:, None, :, :]
            spread = np.sqrt(np.max(np.sum(diff**2, axis=-1), axis=(1, 2)))
        if smooth:
            jac = vmap.jacobian(pts).reshape(len(block), len(offs), -1)
            gmax = np.sqrt(np.max(np.sum(jac**2, axis=-1), axis=1))
            pad = 2.0 * (gmax + vmap.grad_modulus(rho)) * rho
        else:
            pad = 2.0 * vmap.value_modulus(rho)
        out[s:s + chunk] = spread + pad + pad_trunc
    return out


def certified_image_radius(vmap, centers: np.ndarray, side: float) -> tuple[np.ndarray, np.ndarray]:
    """v at cell centers and a radius R with |v(x) - v(center)| <= R on the cell."""
    centers = np.atleast_2d(centers)
    half = side * math.sqrt(centers.shape[1]) / 2
    vals = vmap(centers)
    trunc = getattr(vmap, "truncation_error", 0.0)
    if vmap.smoothness.k < 1:
        return vals, np.full(len(centers), vmap.value_modulus(half) + trunc)
    jac = vmap.jacobian(centers).reshape(len(centers), -1)
    g = np.sqrt(np.sum(jac**2, axis=-1)) + vmap.grad_modulus(half)
    return vals, g * half + trunc
