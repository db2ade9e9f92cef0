"""Polynomial maps, Taylor and moment approximants, and near-critical covers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Cube, GridField, lattice
from .smallmat import spectra


class SmoothnessMissing(ValueError):
    pass


class SingularMomentSystem(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class MultiIndex:
    exponents: tuple[int, ...]

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if any(e < 0 for e in exps):
            raise ValueError("multi-index entries must be nonnegative")
        object.__setattr__(self, "exponents", exps)

    @property
    def n(self) -> int:
        return len(self.exponents)

    @property
    def order(self) -> int:
        return sum(self.exponents)

    @property
    def factorial(self) -> int:
        return math.prod(math.factorial(e) for e in self.exponents)


def indices_up_to(n: int, degree: int) -> list[tuple[int, ...]]:
    """Multi-indices with |gamma| <= degree, graded then reverse-lexicographic."""
    out = [g for g in itertools.product(range(degree + 1), repeat=n) if sum(g) <= degree]
    return sorted(out, key=lambda g: (sum(g), tuple(-e for e in g)))


@dataclass
class MultiPoly:
    """``P(x) = sum_gamma c_gamma (x - center)^gamma`` with d-vector coefficients."""

    n: int
    d: int
    degree: int
    coeffs: dict[tuple[int, ...], np.ndarray]
    center: np.ndarray | None = None
    _dense: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.center = np.zeros(self.n) if self.center is None else np.asarray(self.center, dtype=float).reshape(self.n)
        clean = {}
        for g, c in self.coeffs.items():
            g = MultiIndex(g).exponents
            if len(g) != self.n:
                raise ValueError(f"multi-index {g} has wrong length for n={self.n}")
            if sum(g) > self.degree:
                raise ValueError(f"multi-index {g} exceeds degree {self.degree}")
            c = np.asarray(c, dtype=float).reshape(self.d)
            clean[g] = clean.get(g, 0.0) + c
        self.coeffs = clean

    @classmethod
    def zero(cls, n: int, d: int, degree: int = 0) -> "MultiPoly":
        return cls(n, d, degree, {})

    def dense(self) -> np.ndarray:
        """Coefficient tensor of shape (degree+1,)*n + (d,)."""
        if self._dense is None:
            t = np.zeros((self.degree + 1,) * self.n + (self.d,))
            for g, c in self.coeffs.items():
                t[g] += c
            self._dense = t
        return self._dense

    def _points(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n:
            raise ValueError(f"polynomial takes points in R^{self.n}, got shape {x.shape}")
        return x - self.center, single

    def __call__(self, x) -> np.ndarray:
        z, single = self._points(x)
        out = _horner(self.dense(), z)
        return out[0] if single else out

    eval = __call__

    def derivative(self, axis: int) -> "MultiPoly":
        coeffs = {}
        for g, c in self.coeffs.items():
            if g[axis] > 0:
                h = list(g)
                h[axis] -= 1
                coeffs[tuple(h)] = g[axis] * c
        return MultiPoly(self.n, self.d, max(self.degree - 1, 0), coeffs, self.center)

    def grad(self, x) -> np.ndarray:
        """Jacobian, shape (N, d, n) (or (d, n) for a single point)."""
        z, single = self._points(x)
        out = np.stack([_horner(self.derivative(i).dense(), z) for i in range(self.n)], axis=-1)
        return out[0] if single else out

    jacobian = grad

    def coefficient(self, gamma) -> np.ndarray:
        return self.coeffs.get(tuple(gamma), np.zeros(self.d))

    def coefficient_vector(self) -> np.ndarray:
        """Coefficients stacked over indices_up_to(n, degree), shape (K, d)."""
        return np.array([self.coefficient(g) for g in indices_up_to(self.n, self.degree)])

    def recentered(self, center) -> "MultiPoly":
        """Same polynomial expanded about a new center."""
        center = np.asarray(center, dtype=float).reshape(self.n)
        shift = center - self.center
        coeffs: dict[tuple[int, ...], np.ndarray] = {}
        for g, c in self.coeffs.items():
            # (z + s)^g = prod_i sum_{b_i <= g_i} C(g_i, b_i) s_i^(g_i - b_i) z_i^b_i
            for b in itertools.product(*[range(e + 1) for e in g]):
                w = math.prod(math.comb(e, bi) * shift[i] ** (e - bi) for i, (e, bi) in enumerate(zip(g, b)))
                coeffs[b] = coeffs.get(b, 0.0) + w * c
        return MultiPoly(self.n, self.d, self.degree, coeffs, center)


def _horner(t: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Evaluate a dense coefficient tensor at shifted points z (N, n)."""
    if t.ndim == 1:
        return np.broadcast_to(t, (len(z), t.shape[0])).copy()
    x0 = z[:, :1]
    rest = z[:, 1:]
    acc = _horner(t[-1], rest)
    for j in range(t.shape[0] - 2, -1, -1):
        acc = acc * x0 + _horner(t[j], rest)
    return acc


def taylor_poly(vmap, center, k: int) -> MultiPoly:
    """Degree-k Taylor polynomial of ``vmap`` about ``center``.

    Uses the map's closed-form partials when present and central
    differences with step eps^(1/(j+2)) otherwise.
    """
    center = np.asarray(center, dtype=float).reshape(vmap.n)
    coeffs = {}
    for g in indices_up_to(vmap.n, k):
        try:
            val = vmap.partial(center[None], g)[0]
        except Exception as exc:
            raise ArithmeticError(f"derivative {g} of {getattr(vmap, 'name', vmap)} failed at {center}") from exc
        coeffs[g] = val / MultiIndex(g).factorial
    return MultiPoly(vmap.n, vmap.d, k, coeffs, center)


def moment_projection(u: GridField, degree: int) -> MultiPoly:
    """Polynomial P of the given degree whose discrete moments match u.

    ``sum w x^gamma (u - P) = 0`` for all |gamma| <= degree, with w the
    field's quadrature weights. Solved in the monomial basis scaled to
    the cube so the Gram matrix stays well conditioned.
    """
    n = u.n
    center = u.cube.center
    half = u.cube.side / 2
    idx = indices_up_to(n, degree)
    z = (u.points.reshape(-1, n) - center) / half
    basis = np.stack([np.prod(z**np.asarray(g), axis=1) for g in idx], axis=1)
    w = u.weights.reshape(-1)
    vals = u.values.reshape(-1, u.d)
    gram = basis.T @ (w[:, None] * basis)
    rhs = basis.T @ (w[:, None] * vals)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMomentSystem(
            f"moment Gram matrix is singular (condition {cond:.3g}); resolution {u.resolution} is too low for degree {degree}"
        )
    sol = np.linalg.solve(gram, rhs)
    coeffs = {g: sol[i] / half ** sum(g) for i, g in enumerate(idx)}
    return MultiPoly(n, u.d, degree, coeffs, center)


def moment_residuals(u: GridField, p: MultiPoly) -> np.ndarray:
    """Discrete moments of u - P against scaled monomials up to P's degree."""
    n = u.n
    pts = u.points.reshape(-1, n)
    z = (pts - u.cube.center) / (u.cube.side / 2)
    w = u.weights.reshape(-1)
    resid = u.values.reshape(-1, u.d) - p(pts)
    return np.array([np.sum(w[:, None] * np.prod(z**np.asarray(g), axis=1)[:, None] * resid, axis=0) for g in indices_up_to(n, p.degree)])


@dataclass(frozen=True)
class RemainderBound:
    bound: float
    empirical: float
    r: float


def remainder_gradient_bound(vmap, cube: Cube, k: int, alpha: float, holder_constant: float | None = None, resolution: int | None = None) -> RemainderBound:
    """Certified A r^(k+alpha-1) versus the sampled sup of |grad(v - P)| on the cube.

    P is the degree-k Taylor polynomial at the cube center and r = sqrt(n)
    times the side. The constant A is the map's declared one when (k, alpha)
    match its declaration; for alpha = 1 it may instead be estimated as the
    sup of |grad^(k+1) v| over the cube (times 1.05).
    """
    if holder_constant is None:
        sm = getattr(vmap, "smoothness", None)
        if sm is not None and sm.k == k and sm.alpha == alpha:
            holder_constant = sm.holder_constant
        elif alpha == 1.0 and sm is not None:
            per = {1: 2001, 2: 81, 3: 21}.get(vmap.n, 7)
            pts = lattice(cube, per).reshape(-1, vmap.n)
            vals, w = vmap.derivative_tensor(pts, k + 1)
            holder_constant = 1.05 * float(np.sqrt(np.sum(w * vals**2, axis=(1, 2))).max())
        else:
            raise SmoothnessMissing(f"no Hoelder constant for (k={k}, alpha={alpha})")
    r = math.sqrt(cube.n) * cube.side
    resolution = resolution or {1: 2001, 2: 101, 3: 31}.get(cube.n, 9)
    poly = taylor_poly(vmap, cube.center, k)
    pts = lattice(cube, resolution).reshape(-1, cube.n)
    diff = vmap.jacobian(pts) - poly.grad(pts)
    emp = float(np.sqrt(np.sum(diff**2, axis=(1, 2))).max())
    return RemainderBound(holder_constant * r ** (k + alpha - 1), emp, r)


def near_critical_mask(jac: np.ndarray, eps: float, m: int) -> np.ndarray:
    """lambda_1..lambda_{m-1} <= 1 + eps and lambda_m <= eps, per Jacobian."""
    return _near_critical(spectra(jac), eps, m)


def _near_critical(s: np.ndarray, eps: float, m: int) -> np.ndarray:
    if eps <= 0:
        raise ValueError("eps must be positive")
    ok = np.ones(s.shape[:-1], dtype=bool)
    if m - 1 > 0:
        ok &= np.all(s[..., : m - 1] <= 1 + eps, axis=-1)
    if m <= s.shape[-1]:
        ok &= s[..., m - 1] <= eps
    return ok


def near_critical_set(poly, cube: Cube, eps: float, m: int, resolution: int) -> np.ndarray:
    """Lattice points of the cube where the spectrum is eps-near-critical, shape (K, n)."""
    pts = lattice(cube, resolution).reshape(-1, cube.n)
    return pts[near_critical_mask(poly.grad(pts), eps, m)]


def greedy_cover(points: np.ndarray, radius: float) -> np.ndarray:
    """Farthest-point greedy cover; returns indices of the chosen centers.

    Starts from the first point; each later center is the uncovered point
    farthest from all chosen centers (first in order among ties).
    """
    points = np.atleast_2d(points)
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    chosen = [0]
    dist = np.linalg.norm(points - points[0], axis=1)
    while True:
        far = int(np.argmax(dist))
        if dist[far] <= radius:
            return np.asarray(chosen)
        chosen.append(far)
        np.minimum(dist, np.linalg.norm(points - points[far], axis=1), out=dist)


@dataclass
class YomdinCover:
    cube: Cube
    epsilon: float
    m: int
    balls: list[tuple[np.ndarray, float]]
    nearcritical_samples: np.ndarray

    @property
    def count(self) -> int:
        return len(self.balls)

    def covers(self, images: np.ndarray, tol: float = 1e-12) -> bool:
        if len(images) == 0:
            return True
        if not self.balls:
            return False
        centers = np.array([b[0] for b in self.balls])
        radius = self.balls[0][1]
        d = np.linalg.norm(images[:, None, :] - centers[None], axis=-1)
        return bool(np.all(d.min(axis=1) <= radius + tol))


def yomdin_cover(poly, cube: Cube, eps: float, m: int, resolution: int) -> YomdinCover:
    """Greedy cover of P(near-critical lattice points) by balls of radius eps * side."""
    pts = near_critical_set(poly, cube, eps, m, resolution)
    radius = eps * cube.side
    images = poly(pts) if len(pts) else np.zeros((0, poly.d))
    idx = greedy_cover(images, radius)
    return YomdinCover(cube, eps, m, [(images[i], radius) for i in idx], pts)


def yomdin_ladder(poly, cube: Cube, epsilons, m: int, resolution: int) -> list[YomdinCover]:
    """yomdin_cover for several eps on one cube, sharing the lattice spectra."""
    pts = lattice(cube, resolution).reshape(-1, cube.n)
    spec = spectra(poly.grad(pts))
    images = poly(pts)
    out = []
    for eps in epsilons:
        ok = _near_critical(spec, eps, m)
        radius = eps * cube.side
        idx = greedy_cover(images[ok], radius)
        out.append(YomdinCover(cube, eps, m, [(images[ok][i], radius) for i in idx], pts[ok]))
    return out
