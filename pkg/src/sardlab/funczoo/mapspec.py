"""Test mappings R^n -> R^d with smoothness metadata and consistency gates."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..geometry import Cube


class GateError(RuntimeError):
    """A map's declared derivatives or smoothness do not match its values."""


@dataclass(frozen=True)
class Smoothness:
    """``grad^k v`` is ``alpha``-Hoelder with constant ``holder_constant``."""

    k: int
    alpha: float
    holder_constant: float

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.holder_constant < 0:
            raise ValueError("Hoelder constant must be nonnegative")


def multi_indices(n: int, order: int) -> list[tuple[int, ...]]:
    """All multi-indices of length ``order`` in ``n`` variables, lexicographic."""
    out = []
    for combo in itertools.combinations_with_replacement(range(n), order):
        g = [0] * n
        for i in combo:
            g[i] += 1
        out.append(tuple(g))
    return sorted(set(out), reverse=True)


def multinomial(gamma) -> int:
    out = math.factorial(sum(gamma))
    for g in gamma:
        out //= math.factorial(g)
    return out


@dataclass(eq=False)
class MapSpec:
    """A test mapping with exact evaluator and derivative evaluators.

    ``evaluator`` maps points (N, n) to (N, d) and ``jacobian_fn`` to
    (N, d, n). ``partial_fn(x, gamma)`` returns the ``gamma`` partial
    derivative, shape (N, d), when available in closed form.

    Optional descriptors:

    ``critical_test(lo, hi, m)``
        exact test whether the closed cell ``[lo, hi]`` meets the rank < m
        set, vectorised over rows of ``lo`` and ``hi``.
    ``bad_set_test(lo, hi)``
        same for a distinguished exceptional set (Cantor maps).
    ``critical_value_dimension``
        known Hausdorff dimension of the critical values.
    ``skip_test(x, h)``
        points where the central-difference stencil of half-width ``h``
        crosses a point of nondifferentiability.
    """

    name: str
    n: int
    d: int
    evaluator: Callable
    jacobian_fn: Callable
    smoothness: Smoothness
    domain: Cube
    partial_fn: Callable | None = None
    grad_modulus_fn: Callable | None = None
    value_modulus_fn: Callable | None = None
    critical_test: Callable | None = None
    bad_set_test: Callable | None = None
    critical_value_dimension: float | None = None
    skip_test: Callable | None = None
    gradient_normalized: bool = False
    truncation_error: float = 0.0
    exprs: list | None = field(default=None, repr=False)

    def _points(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n:
            raise ValueError(f"{self.name} takes points in R^{self.n}, got shape {x.shape}")
        return x, single

    def __call__(self, x) -> np.ndarray:
        x, single = self._points(x)
        out = np.asarray(self.evaluator(x), dtype=float).reshape(len(x), self.d)
        return out[0] if single else out

    def jacobian(self, x) -> np.ndarray:
        x, single = self._points(x)
        out = np.asarray(self.jacobian_fn(x), dtype=float).reshape(len(x), self.d, self.n)
        return out[0] if single else out

    @property
    def k(self) -> int:
        return self.smoothness.k

    @property
    def alpha(self) -> float:
        return self.smoothness.alpha

    @property
    def holder_constant(self) -> float:
        return self.smoothness.holder_constant

    @property
    def has_symbolic_partials(self) -> bool:
        return self.partial_fn is not None

    def partial(self, x, gamma) -> np.ndarray:
        """``d^gamma v`` at points x; finite differences if no closed form."""
        x, single = self._points(x)
        gamma = tuple(int(g) for g in gamma)
        if len(gamma) != self.n or min(gamma) < 0:
            raise ValueError(f"bad multi-index {gamma} for n={self.n}")
        if self.partial_fn is not None:
            out = np.asarray(self.partial_fn(x, gamma), dtype=float).reshape(len(x), self.d)
        else:
            out = finite_difference_partial(self, x, gamma)
        return out[0] if single else out

    def derivative_tensor(self, x, order: int) -> np.ndarray:
        """Rows of ``d^gamma v`` over all |gamma| = order, with multiplicity weights.

        Returns ``(values (N, d, K), weights (K,))`` such that the Frobenius
        norm of the full symmetric tensor is sqrt(sum w * values**2).
        """
        gammas = multi_indices(self.n, order)
        vals = np.stack([self.partial(np.atleast_2d(x), g) for g in gammas], axis=-1)
        weights = np.array([multinomial(g) for g in gammas], dtype=float)
        return vals, weights

    def grad_modulus(self, t):
        """Modulus of continuity of the Jacobian (Frobenius norm) at distance t."""
        if self.grad_modulus_fn is not None:
            return self.grad_modulus_fn(t)
        if self.k < 1:
            raise ValueError(f"{self.name} is not C^1")
        if self.k == 1:
            return self.holder_constant * np.power(t, self.alpha)
        return self._second_derivative_bound() * t

    def value_modulus(self, t):
        """Modulus of continuity of the values."""
        if self.value_modulus_fn is not None:
            return self.value_modulus_fn(t)
        if self.k == 0:
            return self.holder_constant * np.power(t, self.alpha)
        raise ValueError(f"{self.name} has no declared value modulus; use the gradient")

    _d2_bound: float | None = field(default=None, repr=False)

    def _second_derivative_bound(self) -> float:
        if self._d2_bound is None:
            pts = _domain_grid(self.domain, 4096)
            vals, w = self.derivative_tensor(pts, 2)
            frob = np.sqrt(np.sum(w * vals**2, axis=(1, 2)))
            self._d2_bound = 1.05 * float(frob.max())
        return self._d2_bound


def _domain_grid(cube: Cube, target: int) -> np.ndarray:
    per = max(3, int(round(target ** (1.0 / cube.n))))
    axes = [np.linspace(lo, lo + cube.side, per) for lo in cube.lo]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, cube.n)


def fd_step(order: int) -> float:
    """Central-difference step eps^(1/(order+2))."""
    return float(np.finfo(float).eps ** (1.0 / (order + 2)))


def finite_difference_partial(vmap: MapSpec, x: np.ndarray, gamma) -> np.ndarray:
    """Mixed partial by nested central differences of the evaluator.

    First derivatives come from the Jacobian when the requested index has
    order one; higher orders difference the Jacobian to save one level.
    """
    order = sum(gamma)
    if order == 0:
        return vmap(x)
    h = fd_step(order)
    axis = next(i for i, g in enumerate(gamma) if g > 0)
    rest = list(gamma)
    rest[axis] -= 1
    rest = tuple(rest)
    if order == 1:
        return vmap.jacobian(x)[:, :, axis]
    e = np.zeros(vmap.n)
    e[axis] = h
    return (finite_difference_partial(vmap, x + e, rest) - finite_difference_partial(vmap, x - e, rest)) / (2 * h)


# ------------------------------------------------------------------ gates


def _sample_domain(cube: Cube, count: int, rng) -> np.ndarray:
    return cube.lo + cube.side * rng.random((count, cube.n))


def gate_step(vmap: MapSpec, rtol: float = 1e-4) -> float:
    """Central-difference step for the derivative gate.

    For a C^{1,alpha} map the central quotient differs from the derivative
    by at most A h^alpha, so h is shrunk until that is rtol / 5 (but kept
    above 1e-10 so rounding stays below rtol).
    """
    h = 1e-6
    if vmap.k == 1 and vmap.alpha < 1 and vmap.holder_constant > 0:
        if vmap.alpha == 0:
            return 1e-10
        h = min(h, (0.2 * rtol / vmap.holder_constant) ** (1.0 / vmap.alpha))
    return max(h, 1e-10)


def derivative_gate(vmap: MapSpec, points: int = 100, seed: int = 0, rtol: float = 1e-4) -> float:
    """Compare the Jacobian with central differences of the evaluator.

    The error at each point is measured relative to max(|J|_F, 1). Returns
    the worst relative error; raises GateError above ``rtol``.
    """
    rng = np.random.default_rng(seed)
    x = _sample_domain(vmap.domain, points, rng)
    h = gate_step(vmap, rtol)
    if vmap.skip_test is not None:
        x = x[~vmap.skip_test(x, 2 * h)]
    jac = vmap.jacobian(x)
    fd = np.empty_like(jac)
    for i in range(vmap.n):
        e = np.zeros(vmap.n)
        e[i] = h
        fd[:, :, i] = (vmap(x + e) - vmap(x - e)) / (2 * h)
    err = np.sqrt(np.sum((fd - jac) ** 2, axis=(1, 2)))
    scale = np.maximum(np.sqrt(np.sum(jac**2, axis=(1, 2))), 1.0)
    worst = float(np.max(err / scale)) if len(x) else 0.0
    if worst >= rtol:
        raise GateError(f"{vmap.name}: Jacobian disagrees with finite differences (rel. error {worst:.3g})")
    return worst


def _kth_derivative(vmap: MapSpec, x: np.ndarray) -> np.ndarray:
    """Flattened grad^k v with sqrt-multiplicity weights so the 2-norm is Frobenius."""
    if vmap.k == 0:
        return vmap(x)
    vals, w = vmap.derivative_tensor(x, vmap.k)
    return (vals * np.sqrt(w)).reshape(len(x), -1)


def holder_gate(vmap: MapSpec, pairs: int = 10_000, seed: int = 1, slack: float = 1e-3) -> float:
    """Empirical sup of |grad^k v(x) - grad^k v(y)| / |x - y|^alpha over seeded pairs.

    Half the pairs are uniform in the domain, half are close pairs at
    log-uniform separations. Raises GateError when the sup exceeds
    ``A (1 + slack)``.
    """
    rng = np.random.default_rng(seed)
    half = pairs // 2
    x1 = _sample_domain(vmap.domain, half, rng)
    y1 = _sample_domain(vmap.domain, half, rng)
    x2 = _sample_domain(vmap.domain, pairs - half, rng)
    direction = rng.normal(size=x2.shape)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    sep = vmap.domain.side * 10.0 ** rng.uniform(-6, -1, size=(len(x2), 1))
    y2 = np.clip(x2 + sep * direction, vmap.domain.lo, vmap.domain.hi)
    x = np.vstack([x1, x2])
    y = np.vstack([y1, y2])
    dist = np.linalg.norm(x - y, axis=1)
    keep = dist > 0
    x, y, dist = x[keep], y[keep], dist[keep]
    diff = np.linalg.norm(_kth_derivative(vmap, x) - _kth_derivative(vmap, y), axis=1)
    ratio = diff / dist**vmap.alpha if vmap.alpha > 0 else diff
    worst = float(ratio.max())
    if worst > vmap.holder_constant * (1 + slack) + 1e-12:
        raise GateError(
            f"{vmap.name}: empirical Hoelder ratio {worst:.6g} exceeds declared constant {vmap.holder_constant:.6g}"
        )
    return worst


def normalization_gate(vmap: MapSpec, points: int = 10_000, seed: int = 2) -> float:
    rng = np.random.default_rng(seed)
    x = _sample_domain(vmap.domain, points, rng)
    g = float(np.sqrt(np.sum(vmap.jacobian(x) ** 2, axis=(1, 2))).max())
    if g > 1.0 + 1e-12:
        raise GateError(f"{vmap.name}: claims |grad v| <= 1 but reaches {g:.6g}")
    return g


def validate(vmap: MapSpec) -> MapSpec:
    """Run every registration gate; returns the map unchanged on success."""
    derivative_gate(vmap)
    holder_gate(vmap)
    if vmap.gradient_normalized:
        normalization_gate(vmap)
    return vmap
