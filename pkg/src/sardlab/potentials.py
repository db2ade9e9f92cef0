"""Bessel and Riesz kernels, maximal functions, Lorentz norms and Choquet integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal

from .geometry import Cube, GridField, point_diameter


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (error estimate {residual:.3g})")
        self.residual = residual


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


# ------------------------------------------------------------------ Bessel


@dataclass(frozen=True)
class KernelParams:
    alpha: float
    n: int
    nodes: int = 200
    lower: float = -40.0
    upper: float = 40.0
    rtol: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.nodes < 16:
            raise ValueError("need at least 16 quadrature subdivisions")
        if not self.lower < self.upper:
            raise ValueError("empty truncation window")
        if not 1e-12 <= self.rtol < 1:
            raise ValueError("rtol must lie in [1e-12, 1)")


def bessel_normalizer(alpha: float) -> float:
    """a_alpha = (4 pi)^(-alpha/2) / Gamma(alpha/2), giving unit total mass."""
    return (4 * math.pi) ** (-alpha / 2) / math.gamma(alpha / 2)


def bessel_envelope(alpha: float, n: int) -> float:
    """Sharp constant c with G_alpha(x) < c |x|^(alpha-n) for alpha < n.

    Dropping the factor e^(-t/(4 pi)) bounds the kernel integral by a
    Gamma integral: c = a_alpha pi^((alpha-n)/2) Gamma((n-alpha)/2).
    """
    if not alpha < n:
        raise ValueError("envelope needs alpha < n")
    return bessel_normalizer(alpha) * math.pi ** ((alpha - n) / 2) * math.gamma((n - alpha) / 2)


def _bessel_radial(kp: KernelParams, r: float) -> tuple[float, float]:
    """G_alpha at radius r > 0 and the absolute error estimate."""
    a = (kp.alpha - kp.n) / 2
    c = math.pi * r * r

    def log_f(u):
        return a * u - c * np.exp(-u) - np.exp(u) / (4 * math.pi)

    # peak of the log-integrand: a + c e^-u - e^u / (4 pi) = 0
    e_u = 2 * math.pi * (a + math.sqrt(a * a + c / math.pi))
    peak = float(np.clip(math.log(e_u), kp.lower, kp.upper))
    scale = log_f(peak)

    def f(u):
        return math.exp(log_f(u) - scale)

    total, err = 0.0, 0.0
    for lo, hi in ((kp.lower, peak), (peak, kp.upper)):
        if hi > lo:
            val, e = integrate.quad(f, lo, hi, limit=kp.nodes, epsabs=0.0, epsrel=kp.rtol / 10)
            total += val
            err += e
    factor = bessel_normalizer(kp.alpha) * math.exp(scale)
    value, abserr = factor * total, factor * err
    if not np.isfinite(value) or abserr > kp.rtol * abs(value):
        raise QuadratureError(f"Bessel kernel quadrature did not converge at r={r}", abserr)
    return value, abserr


def bessel_kernel(kp: KernelParams, x) -> np.ndarray | float:
    """G_alpha at points x (shape (..., n)) or at a scalar radius."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        r = np.abs(x)[None]
        scalar = True
    else:
        if x.shape[-1] != kp.n:
            raise ValueError(f"points must live in R^{kp.n}")
        r = np.linalg.norm(x, axis=-1).reshape(-1)
        scalar = x.ndim == 1
    if np.any(r == 0):
        raise ValueError("the Bessel kernel is evaluated away from the origin")
    out = np.array([_bessel_radial(kp, float(ri))[0] for ri in r])
    if scalar:
        return float(out[0])
    return out.reshape(x.shape[:-1])


# ------------------------------------------------------------------- Riesz


def _singular_cell(beta: float, n: int, volume: float) -> float:
    """Exact integral of |z|^(beta-n) over the ball of the given volume."""
    rho = (volume / unit_ball_volume(n)) ** (1.0 / n)
    return sphere_area(n) * rho**beta / beta


def riesz_potential(g: GridField, beta: float, x) -> float:
    """Quadrature of int g(y) |y - x|^(beta-n) dy over the grid.

    The lattice node nearest to x, when within half a cell diagonal,
    contributes its weight's equal-volume ball integral instead of a
    point value.
    """
    n = g.n
    if not 0 < beta < n:
        raise ValueError(f"need 0 < beta < n, got beta={beta}")
    x = np.asarray(x, dtype=float).reshape(n)
    if not g.cube.contains(x, tol=1e-12):
        raise ValueError(f"x={x.tolist()} lies outside the grid domain")
    pts = g.points.reshape(-1, n)
    vals = g.scalar.reshape(-1)
    w = g.weights.reshape(-1)
    dist = np.linalg.norm(pts - x, axis=1)
    near = int(np.argmin(dist))
    singular = dist[near] <= g.spacing * math.sqrt(n) / 2
    with np.errstate(divide="ignore"):
        kern = np.where(dist > 0, dist ** (beta - n), 0.0)
    terms = w * vals * kern
    if singular:
        terms[near] = vals[near] * _singular_cell(beta, n, w[near])
    return float(terms.sum())


def riesz_potential_grid(g: GridField, beta: float) -> GridField:
    """I_beta g at every lattice node by FFT convolution.

    Off-diagonal terms use the quadrature weights; the diagonal term uses
    the equal-volume ball of a full interior cell (h^n).
    """
    n = g.n
    if not 0 < beta < n:
        raise ValueError(f"need 0 < beta < n, got beta={beta}")
    res, h = g.resolution, g.spacing
    offs = np.arange(-(res - 1), res) * h
    grids = np.meshgrid(*[offs] * n, indexing="ij")
    r = np.sqrt(sum(c**2 for c in grids))
    with np.errstate(divide="ignore"):
        kern = np.where(r > 0, r ** (beta - n), 0.0)
    centre = (res - 1,) * n
    kern[centre] = _singular_cell(beta, n, h**n) / h**n
    out = signal.fftconvolve(g.scalar * g.weights, kern, mode="valid")
    return g.replace_values(out)


# ---------------------------------------------------------------- maximal


def lattice_ball_count(radius_cells: float, n: int) -> int:
    """Number of integer vectors z in Z^n with |z| <= radius_cells."""
    r = radius_cells + 1e-9
    if n == 1:
        return 2 * int(math.floor(r)) + 1
    m = int(math.floor(r))
    total = 0
    for i in range(-m, m + 1):
        total += lattice_ball_count(math.sqrt(max(r * r - i * i, 0.0)) - 1e-9, n - 1)
    return total


def radius_ladder(h: float, top: float, ratio: float = 2 ** (1 / 8)) -> np.ndarray:
    count = int(math.floor(math.log(top / h) / math.log(ratio) + 1e-9)) + 1
    radii = h * ratio ** np.arange(max(count, 1))
    return radii if radii[-1] >= top * (1 - 1e-12) else np.append(radii, top)


def maximal_function(f: GridField, region: Cube | None = None, ratio: float = 2 ** (1 / 8)) -> GridField:
    """Discrete Hardy-Littlewood maximal function on the lattice.

    At each node: the largest average of |f| over lattice balls B(x, r) for
    r on a geometric ladder from h to the domain diameter, and |f(x)|
    itself (the r -> 0 limit). The average divides by the lattice count
    of the full ball, so f is taken as 0 off the grid. With ``region`` the
    function is first multiplied by the region's indicator.
    """
    n = f.n
    vals = np.abs(f.scalar)
    if region is not None:
        vals = vals * region.contains(f.points, tol=1e-12)
    res, h = f.resolution, f.spacing
    best = vals.copy()
    diam = f.cube.side * math.sqrt(n)
    for r in radius_ladder(h, diam, ratio):
        rc = r / h
        # offsets beyond res - 1 never reach another node
        reach = min(int(math.floor(rc + 1e-9)), res - 1)
        offs = np.arange(-reach, reach + 1, dtype=float)
        r2 = sum(c**2 for c in np.meshgrid(*[offs] * n, indexing="ij"))
        kern = (r2 <= rc * rc + 1e-9).astype(float)
        sums = signal.fftconvolve(vals, kern, mode="same")
        avg = sums / lattice_ball_count(rc, n)
        np.maximum(best, avg, out=best)
    return f.replace_values(np.maximum(best, 0.0))


def gradient_field(u: GridField) -> GridField:
    """Central-difference gradient, values shape (..., d * n) (row-major d x n)."""
    comps = []
    for c in range(u.d):
        g = np.gradient(u.values[..., c], u.spacing, edge_order=2) if u.n > 1 else [np.gradient(u.values[..., c], u.spacing, edge_order=2)]
        comps.extend(g)
    return u.replace_values(np.stack(comps, axis=-1))


def norm_field(u: GridField) -> GridField:
    return u.replace_values(np.linalg.norm(u.values, axis=-1))


# ---------------------------------------------------------------- Lorentz


def _values_weights(f, weights=None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(f, GridField):
        return np.abs(f.scalar).reshape(-1), f.weights.reshape(-1)
    vals = np.abs(np.asarray(f, dtype=float)).reshape(-1)
    if weights is None:
        raise ValueError("raw values need explicit measure weights")
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape != vals.shape or np.any(w < 0):
        raise ValueError("weights must be nonnegative and match the values")
    return vals, w


def lorentz_p1_norm(f, p: float, weights=None) -> float:
    """Layer-cake integral of |{|f| > t}|^(1/p) for a piecewise-constant f.

    ``f`` is a GridField (quadrature weights as cell measures) or an array
    of values with matching ``weights``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    vals, w = _values_weights(f, weights)
    order = np.argsort(-vals, kind="stable")
    a = vals[order]
    cum = np.cumsum(w[order])
    steps = a - np.append(a[1:], 0.0)
    return float(np.sum(cum ** (1.0 / p) * steps))


def lp_norm(f, p: float, weights=None) -> float:
    vals, w = _values_weights(f, weights)
    return float(np.sum(w * vals**p) ** (1.0 / p))


# ---------------------------------------------------------------- Choquet


@dataclass(frozen=True)
class ChoquetParams:
    """Exponents of a Choquet integral of content H^tau over {F >= t^(1/s)}."""

    tau: float
    s: float
    p: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if not self.s > 0:
            raise ValueError("s must be positive")
        if self.p is not None and not self.p > 1:
            raise ValueError("p must exceed 1")

    @classmethod
    def adams(cls, n: int, p: float, s: float, beta: float) -> "ChoquetParams":
        """s > p regime: tau = (s / p)(n - beta p)."""
        if not s > p:
            raise ValueError("the Adams regime needs s > p")
        if not n - beta * p > 0:
            raise ValueError("need n - beta p > 0")
        return cls((s / p) * (n - beta * p), s, p, beta)

    @classmethod
    def lorentz(cls, n: int, p: float, beta: float) -> "ChoquetParams":
        """s = p regime: tau = n - beta p."""
        if not n - beta * p > 0:
            raise ValueError("need n - beta p > 0")
        return cls(n - beta * p, p, p, beta)

    @classmethod
    def sobolev(cls, n: int, k: int, l: int) -> "ChoquetParams":
        """Derivative regime: tau = n - k + l with s = 1."""
        if not 1 <= l < k <= n:
            raise ValueError("need 1 <= l < k <= n")
        return cls(float(n - k + l), 1.0)


def superlevel_cells(F: GridField, threshold: float):
    """Cells whose corner samples all satisfy F >= threshold."""
    from .measures import CellSet

    n = F.n
    res = F.resolution - 1
    level = int(round(math.log2(res)))
    if 2**level != res:
        raise ValueError("Choquet grids need 2^L + 1 nodes per axis")
    ok = F.scalar >= threshold
    cell = np.ones((res,) * n, dtype=bool)
    for offs in np.ndindex(*(2,) * n):
        cell &= ok[tuple(slice(o, o + res) for o in offs)]
    return CellSet.from_mask(F.cube, cell)


def choquet_nodes(vmin: float, vmax: float, ratio_log2: float = 0.25) -> np.ndarray:
    """vmin, every 2^(j * ratio_log2) strictly between, and vmax."""
    lo = math.ceil(math.log2(vmin) / ratio_log2 + 1e-12)
    hi = math.floor(math.log2(vmax) / ratio_log2 - 1e-12)
    inner = 2.0 ** (np.arange(lo, hi + 1) * ratio_log2)
    inner = inner[(inner > vmin) & (inner < vmax)]
    return np.unique(np.concatenate([[vmin], inner, [vmax]]))


@dataclass
class ChoquetResult:
    value: float
    nodes: np.ndarray = field(repr=False)
    contents: np.ndarray = field(repr=False)


def choquet_integral(F: GridField, cp: ChoquetParams, content_oracle=None) -> ChoquetResult:
    """int_0^inf H^tau({F >= t^(1/s)}) dt on a geometric t-grid.

    The content of each superlevel set comes from ``content_oracle(cells,
    tau)`` (the dyadic DP by default). Below the smallest positive value of
    F^s the superlevel set is the whole support, integrated exactly; above
    it the integrand is monotone and integrated by the trapezoid rule on
    nodes 2^(j/4) anchored at 1.
    """
    if content_oracle is None:
        from .measures import hausdorff_content

        def content_oracle(cells, tau):
            return hausdorff_content(cells, tau).value

    vals = np.clip(F.scalar, 0.0, None) ** cp.s
    pos = vals[vals > 0]
    if pos.size == 0:
        return ChoquetResult(0.0, np.zeros(0), np.zeros(0))
    nodes = choquet_nodes(float(pos.min()), float(pos.max()))
    level_field = F.replace_values(vals)
    contents = np.array([content_oracle(superlevel_cells(level_field, t), cp.tau) for t in nodes])
    value = nodes[0] * contents[0]
    if len(nodes) > 1:
        value += float(np.sum(0.5 * (contents[1:] + contents[:-1]) * np.diff(nodes)))
    return ChoquetResult(float(value), nodes, contents)


# ---------------------------------------------------------- sublevel check


@dataclass(frozen=True)
class SublevelResult:
    diam: float
    ratio: float
    count: int


def sublevel_diam_check(u: GridField, center, radius: float, eps: float, region: Cube | None = None) -> SublevelResult:
    """diam{u(x) : x in B, M|grad u|(x) <= eps} and its ratio to eps * r.

    With ``region`` the restricted maximal function of the region is used.
    """
    if eps <= 0 or radius <= 0:
        raise ValueError("eps and radius must be positive")
    grad = norm_field(gradient_field(u))
    mf = maximal_function(grad, region=region)
    pts = u.points.reshape(-1, u.n)
    inside = np.linalg.norm(pts - np.asarray(center, dtype=float), axis=1) <= radius
    if region is not None:
        inside &= region.contains(pts, tol=1e-12)
    keep = inside & (mf.scalar.reshape(-1) <= eps)
    if not keep.any():
        return SublevelResult(0.0, 0.0, 0)
    dm = point_diameter(u.values.reshape(-1, u.d)[keep])
    return SublevelResult(dm, dm / (eps * radius), int(keep.sum()))
