"""DSL-defined maps and built-in constructions with known critical structure."""

from __future__ import annotations

import functools
import math
import re

import numpy as np
from numpy.polynomial import Polynomial

from ..geometry import Cube
from . import dsl
from .mapspec import MapSpec, Smoothness, multi_indices, multinomial, validate

# ------------------------------------------------------------- DSL maps


def _dsl_partial_factory(exprs: list[dsl.Expr], n: int):
    cache: dict[tuple[int, ...], list[dsl.Expr]] = {(0,) * n: exprs}

    def derived(gamma: tuple[int, ...]) -> list[dsl.Expr]:
        if gamma not in cache:
            axis = max(i for i, g in enumerate(gamma) if g > 0)
            prev = list(gamma)
            prev[axis] -= 1
            cache[gamma] = [dsl.differentiate(e, axis) for e in derived(tuple(prev))]
        return cache[gamma]

    def partial(x, gamma):
        return np.stack([dsl.evaluate(e, x) for e in derived(tuple(gamma))], axis=-1)

    return partial


def _sup_derivative(vmap: MapSpec, order: int, per_axis: int) -> float:
    axes = [np.linspace(lo, lo + vmap.domain.side, per_axis) for lo in vmap.domain.lo]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, vmap.n)
    vals, w = vmap.derivative_tensor(pts, order)
    return float(np.sqrt(np.sum(w * vals**2, axis=(1, 2))).max())


def parse_map(
    text: str,
    n: int | None = None,
    k: int = 1,
    alpha: float = 1.0,
    holder_constant: float | None = None,
    domain: Cube | None = None,
    name: str | None = None,
    check: bool = True,
) -> MapSpec:
    """Build a MapSpec from DSL text such as ``"(x0^2 - x1^2, 2*x0*x1)"``.

    ``n`` defaults to the domain's dimension, else the highest variable
    index + 1. Without an explicit
    ``holder_constant`` the constant for ``grad^k v`` is estimated as 1.05
    times the sup of ``|grad^(k+1) v|`` on a dense grid of the domain,
    which requires ``alpha = 1``.
    """
    exprs = [dsl.simplify(e) for e in dsl.parse_exprs(text)]
    used = max(dsl.max_var(e) for e in exprs) + 1
    if n is None:
        n = domain.n if domain is not None else max(used, 1)
    if domain is not None and domain.n != n:
        raise ValueError(f"domain lives in R^{domain.n}, map declared on R^{n}")
    if used > n:
        raise dsl.ParseError(f"variable x{used - 1} exceeds declared dimension n={n}", 1, 1)
    d = len(exprs)
    domain = domain or Cube((-1.0,) * n, 2.0)
    partial = _dsl_partial_factory(exprs, n)
    units = [tuple(int(i == j) for i in range(n)) for j in range(n)]

    def evaluator(x):
        return partial(x, (0,) * n)

    def jacobian(x):
        return np.stack([partial(x, u) for u in units], axis=-1)

    vmap = MapSpec(
        name=name or text.strip(),
        n=n,
        d=d,
        evaluator=evaluator,
        jacobian_fn=jacobian,
        smoothness=Smoothness(k, alpha, 0.0),
        domain=domain,
        partial_fn=partial,
        exprs=exprs,
    )
    if holder_constant is None:
        if alpha != 1.0:
            raise ValueError("an estimated Hoelder constant needs alpha = 1; pass holder_constant")
        per_axis = {1: 4097, 2: 129, 3: 33}.get(n, 9)
        holder_constant = 1.05 * _sup_derivative(vmap, k + 1, per_axis)
    vmap.smoothness = Smoothness(k, alpha, holder_constant)
    return validate(vmap) if check else vmap


# ------------------------------------------------------------ built-ins


def _contains_origin(lo, hi, m, ranks_below):
    lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
    hit = np.all((lo <= 0.0) & (hi >= 0.0), axis=1)
    return hit if m in ranks_below else np.zeros(len(lo), dtype=bool)


def linear_rank(n: int, d: int, r: int) -> MapSpec:
    """``x -> L x`` with ``L = diag(1, ..., 1, 0, ...)`` of rank r."""
    n, d, r = int(n), int(d), int(r)
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if not 0 <= r <= min(n, d):
        raise ValueError(f"rank r must lie in [0, min(n, d)] = [0, {min(n, d)}], got {r}")
    mat = np.zeros((d, n))
    mat[np.arange(r), np.arange(r)] = 1.0

    def partial(x, gamma):
        order = sum(gamma)
        if order == 0:
            return x @ mat.T
        if order == 1:
            return np.broadcast_to(mat[:, gamma.index(1)], (len(x), d)).copy()
        return np.zeros((len(x), d))

    def critical(lo, hi, m):
        return np.full(len(np.atleast_2d(lo)), r < m)

    return validate(
        MapSpec(
            name=f"linear_rank({n},{d},{r})",
            n=n,
            d=d,
            evaluator=lambda x: x @ mat.T,
            jacobian_fn=lambda x: np.broadcast_to(mat, (len(x), d, n)).copy(),
            smoothness=Smoothness(1, 1.0, 0.0),
            domain=Cube.unit(n),
            partial_fn=partial,
            grad_modulus_fn=lambda t: 0.0 * np.asarray(t, dtype=float),
            critical_test=critical,
            critical_value_dimension=float(r),
        )
    )


def conformal_square() -> MapSpec:
    """``(x^2 - y^2, 2xy)``; rank < 2 (indeed rank 0) only at the origin."""
    a = 2.0 * math.sqrt(2.0)
    vmap = parse_map("(x0^2 - x1^2, 2*x0*x1)", holder_constant=a, name="conformal_square", check=False)
    vmap.grad_modulus_fn = lambda t: a * np.asarray(t, dtype=float)
    vmap.critical_test = lambda lo, hi, m: _contains_origin(lo, hi, m, (1, 2))
    vmap.critical_value_dimension = 0.0
    return validate(vmap)


def paraboloid() -> MapSpec:
    """``x^2 + y^2``; critical only at the origin."""
    vmap = parse_map("(x0^2 + x1^2)", holder_constant=2.0, name="paraboloid", check=False)
    vmap.grad_modulus_fn = lambda t: 2.0 * np.asarray(t, dtype=float)
    vmap.critical_test = lambda lo, hi, m: _contains_origin(lo, hi, m, (1,))
    vmap.critical_value_dimension = 0.0
    return validate(vmap)


# Cantor constructions on [0, 1]. Generation j (j >= 0) removes from each
# surviving interval of length lam^j the open middle gap of length
# (1 - 2 lam) lam^j. Values follow the same tree with ratio lam_v.


def _generations(ratio: float, tol: float) -> int:
    return max(1, math.ceil(math.log(tol) / math.log(ratio)))


def _descend(x: np.ndarray, lam: float, lam_v: float, generations: int) -> dict:
    """Locate each x in [0, 1] in the Cantor tree.

    Returns per-point gap generation (-1 if x survives every generation),
    gap left end, the value at the gap's left end, and for survivors the
    surviving interval's left end and value.
    """
    x = np.asarray(x, dtype=float)
    a = np.zeros_like(x)
    base = np.zeros_like(x)
    gen = np.full(x.shape, -1, dtype=int)
    gap_a = np.zeros_like(x)
    gap_base = np.zeros_like(x)
    active = np.ones(x.shape, dtype=bool)
    length, rise = 1.0, 1.0
    for j in range(generations):
        left_end = a + lam * length
        right_end = a + length - lam * length
        in_gap = active & (x > left_end) & (x < right_end)
        gen[in_gap] = j
        gap_a[in_gap] = left_end[in_gap]
        gap_base[in_gap] = base[in_gap] + lam_v * rise
        right = active & ~in_gap & (x >= right_end)
        base = np.where(right, base + (1 - lam_v) * rise, base)
        a = np.where(right, right_end, a)
        active &= ~in_gap
        length *= lam
        rise *= lam_v
    return {"gen": gen, "gap_a": gap_a, "gap_base": gap_base, "a": a, "base": base, "length": length, "rise": rise}


def meets_cantor(lo, hi, lam: float, generations: int) -> np.ndarray:
    """Whether each closed interval [lo_i, hi_i] meets the generation-G Cantor intervals."""
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    out = np.zeros(len(lo), dtype=bool)
    ids = np.arange(len(lo))
    starts = np.zeros(len(lo))
    length = 1.0
    for _ in range(generations + 1):
        if len(ids) == 0:
            break
        ends = starts + length
        overlap = (lo[ids] <= ends) & (hi[ids] >= starts)
        inside = overlap & (lo[ids] <= starts) & (hi[ids] >= ends)
        out[ids[inside]] = True
        split = overlap & ~inside & ~out[ids]
        ids, starts = ids[split], starts[split]
        # both children of every straddled interval
        ids = np.concatenate([ids, ids])
        starts = np.concatenate([starts, starts + length * (1 - lam)])
        length *= lam
    # survivors after the last generation overlap a generation-G interval
    if len(ids):
        ends = starts + length
        hit = (lo[ids] <= ends) & (hi[ids] >= starts)
        out[ids[hit]] = True
    return out


def _check_ratio(ratio: float) -> float:
    ratio = float(ratio)
    if not 0.0 < ratio < 0.5:
        raise ValueError(f"Cantor ratio must lie in (0, 1/2), got {ratio}")
    return ratio


def cantor_staircase(ratio: float = 1.0 / 3.0, tol: float = 1e-12) -> MapSpec:
    """Monotone Cantor function of the ratio-``lam`` Cantor set.

    Constant on every gap, Hoelder of exponent log 2 / log(1/lam) with
    constant (1 - 2 lam)^(-exponent). Truncated after G generations with
    linear interpolation on the surviving intervals (error <= 2^-G).
    """
    lam = _check_ratio(ratio)
    gens = _generations(0.5, tol)
    gamma = math.log(2.0) / math.log(1.0 / lam)
    const = (1.0 - 2.0 * lam) ** (-gamma)

    def evaluate(x):
        t = np.clip(x[:, 0], 0.0, 1.0)
        info = _descend(t, lam, 0.5, gens)
        surv = info["base"] + info["rise"] * (t - info["a"]) / info["length"]
        return np.where(info["gen"] >= 0, info["gap_base"], surv)[:, None]

    def jacobian(x):
        t = x[:, 0]
        info = _descend(np.clip(t, 0.0, 1.0), lam, 0.5, gens)
        slope = info["rise"] / info["length"]
        inside = (t > 0) & (t < 1) & (info["gen"] < 0)
        return np.where(inside, slope, 0.0)[:, None, None]

    def critical(lo, hi, m):
        # v' = 0 away from the surviving generation-G intervals; a cell
        # misses the flat set only when it sits inside one of them
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        a_lo = _descend(np.clip(lo, 0, 1), lam, 0.5, gens)
        a_hi = _descend(np.clip(hi, 0, 1), lam, 0.5, gens)
        same = (a_lo["gen"] < 0) & (a_hi["gen"] < 0) & (a_lo["a"] == a_hi["a"]) & (lo > 0) & (hi < 1)
        return ~same if m == 1 else np.zeros(len(lo), dtype=bool)

    return validate(
        MapSpec(
            name=f"cantor_staircase({ratio!r})",
            n=1,
            d=1,
            evaluator=evaluate,
            jacobian_fn=jacobian,
            smoothness=Smoothness(0, gamma, const),
            domain=Cube.unit(1),
            value_modulus_fn=lambda t: const * np.power(t, gamma) + 2.0 * 0.5**gens,
            critical_test=critical,
            bad_set_test=lambda lo, hi: meets_cantor(lo, hi, lam, gens),
            critical_value_dimension=1.0,
            skip_test=lambda x, h: meets_cantor(x[:, 0] - h, x[:, 0] + h, lam, gens),
            truncation_error=0.5**gens,
        )
    )


@functools.lru_cache(maxsize=None)
def _bump_profile(k: int) -> tuple[Polynomial, ...]:
    """Normalised antiderivative S of t^(k+1)(1-t)^(k+1) and its derivatives."""
    b = Polynomial([0, 1]) ** (k + 1) * Polynomial([1, -1]) ** (k + 1)
    s = b.integ(lbnd=0)
    s = s / s(1.0)
    out = [s]
    for _ in range(k + 2):
        out.append(out[-1].deriv())
    return tuple(out)


def cantor_bump_constants(k: int, alpha: float, ratio: float) -> dict:
    """Hoelder constant, gradient Lipschitz bound and value ratio of cantor_bump."""
    lam = _check_ratio(ratio)
    lam_v = lam ** (k + alpha)
    prof = _bump_profile(k)
    t = np.linspace(0.0, 1.0, 200_001)
    sup = [float(np.abs(p(t)).max()) for p in prof]
    scale = (1 - 2 * lam_v) / (1 - 2 * lam) ** (k + alpha)
    within = (2 * sup[k]) ** (1 - alpha) * sup[k + 1] ** alpha
    edge = np.minimum(t, 1 - t)[1:-1]
    across = float(np.max(np.abs(prof[k](t[1:-1])) / edge**alpha))
    holder = 1.0001 * scale * max(within, 2 * across)
    lip2 = 1.0001 * scale * (1 - 2 * lam) ** (k + alpha - 2) * sup[2] if k >= 2 else None
    return {"value_ratio": lam_v, "holder": holder, "grad_lipschitz": lip2, "scale": scale}


def cantor_bump(k: int = 1, alpha: float = 0.5, ratio: float = 0.25, tol: float = 1e-12) -> MapSpec:
    """C^{k,alpha} function on R whose critical values form a Cantor set.

    On every gap of the ratio-``lam`` Cantor set in [0, 1] the function
    rises monotonically along a rescaled ``t^(k+1)(1-t)^(k+1)`` antiderivative.
    Rises shrink by ``lam' = lam^(k+alpha)`` per generation, which keeps
    the k-th derivative uniformly Hoelder. Constant outside [0, 1]; the
    critical set (m = 1) is the Cantor set plus the two outer rays, and the
    critical values have dimension log 2 / log(1/lam').
    """
    k = int(k)
    if k < 1:
        raise ValueError("cantor_bump needs k >= 1")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    lam = _check_ratio(ratio)
    consts = cantor_bump_constants(k, alpha, lam)
    lam_v = consts["value_ratio"]
    gens = _generations(lam_v, tol)
    prof = _bump_profile(k)

    def partial(x, gamma):
        order = gamma[0]
        t = x[:, 0]
        info = _descend(np.clip(t, 0.0, 1.0), lam, lam_v, gens)
        gen = info["gen"]
        in_gap = gen >= 0
        g = np.where(in_gap, (1 - 2 * lam) * lam ** np.maximum(gen, 0), 1.0)
        h = np.where(in_gap, (1 - 2 * lam_v) * lam_v ** np.maximum(gen, 0), 0.0)
        s = np.clip((t - info["gap_a"]) / g, 0.0, 1.0)
        if order == 0:
            return np.where(in_gap, info["gap_base"] + h * prof[0](s), info["base"])[:, None]
        if order >= len(prof):
            vals = np.zeros_like(t)
        else:
            vals = np.where(in_gap, h * prof[order](s) / g**order, 0.0)
        return np.where((t > 0) & (t < 1), vals, 0.0)[:, None]

    def critical(lo, hi, m):
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        if m != 1:
            return np.zeros(len(lo), dtype=bool)
        return (lo <= 0.0) | (hi >= 1.0) | meets_cantor(lo, hi, lam, 60)

    if k == 1:
        gmod = lambda t: consts["holder"] * np.power(t, alpha)  # noqa: E731
    else:
        gmod = lambda t: consts["grad_lipschitz"] * np.asarray(t, dtype=float)  # noqa: E731

    return validate(
        MapSpec(
            name=f"cantor_bump({k},{alpha!r},{ratio!r})",
            n=1,
            d=1,
            evaluator=lambda x: partial(x, (0,)),
            jacobian_fn=lambda x: partial(x, (1,))[:, :, None],
            smoothness=Smoothness(k, alpha, consts["holder"]),
            domain=Cube.unit(1),
            partial_fn=partial,
            grad_modulus_fn=gmod,
            critical_test=critical,
            bad_set_test=lambda lo, hi: meets_cantor(lo, hi, lam, 60),
            critical_value_dimension=math.log(2.0) / math.log(1.0 / lam_v),
            truncation_error=lam_v**gens,
        )
    )


# -------------------------------------------------------------- registry

BUILTINS = {
    "linear_rank": (linear_rank, "n, d, r"),
    "conformal_square": (conformal_square, ""),
    "paraboloid": (paraboloid, ""),
    "cantor_staircase": (cantor_staircase, "ratio"),
    "cantor_bump": (cantor_bump, "k, alpha, ratio"),
}

_CALL = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$", re.S)


def _number(text: str):
    text = text.strip()
    if re.fullmatch(r"[+-]?\d+", text):
        return int(text)
    if re.fullmatch(r"[+-]?\d+/\d+", text):
        num, den = text.split("/")
        return int(num) / int(den)
    return float(text)


@functools.lru_cache(maxsize=64)
def builtin(name: str, *params) -> MapSpec:
    if name not in BUILTINS:
        raise KeyError(f"unknown built-in map {name!r}; known: {', '.join(BUILTINS)}")
    return BUILTINS[name][0](*params)


@functools.lru_cache(maxsize=64)
def resolve_map(text: str) -> MapSpec:
    """A map from either DSL text ``"(...)"`` or a built-in call ``"name(args)"``."""
    text = text.strip()
    if text.startswith("("):
        return parse_map(text)
    m = _CALL.match(text)
    if not m:
        raise ValueError(f"cannot read map {text!r}")
    args = [] if not m.group(2) or not m.group(2).strip() else [_number(a) for a in m.group(2).split(",")]
    return builtin(m.group(1), *args)


__all__ = [
    "BUILTINS",
    "builtin",
    "cantor_bump",
    "cantor_bump_constants",
    "cantor_staircase",
    "conformal_square",
    "linear_rank",
    "meets_cantor",
    "multi_indices",
    "multinomial",
    "paraboloid",
    "parse_map",
    "resolve_map",
]
