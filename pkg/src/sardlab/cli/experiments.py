"""Named experiment runners.

Each experiment splits into work units (one parameter tuple each), an
evaluator that turns a unit into rows, and a summary step that adds fit
rows and collects check failures. Units run in any order or process;
rows are merged in unit order, so output does not depend on --jobs.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..coarea import UnsupportedDimensions, coarea_report
from ..exponents import ExponentParams, ParameterError, cube_exponent, is_borderline, mu_q
from ..funczoo import ParseError, resolve_map
from ..geometry import Cube, GridField, certified_image_diameters, lattice
from ..measures import CellSet, critical_cells, level_set_content, phi_functional
from ..polyapprox import MultiPoly, yomdin_ladder
from ..potentials import (
    choquet_integral,
    gradient_field,
    lorentz_p1_norm,
    lp_norm,
    maximal_function,
    norm_field,
    riesz_potential_grid,
)
from .config import ConfigError, ExperimentConfig
from .records import ExperimentRecord, choquet_label, choquet_params

_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass
class RunResult:
    records: list[ExperimentRecord]
    failures: list[str]
    notes: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures


# ------------------------------------------------------------ helpers


def _map(config: ExperimentConfig):
    if not config.map:
        raise ConfigError(f"{config.name}: map is required")
    try:
        return resolve_map(config.map)
    except (ParseError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{config.name}: cannot build map {config.map!r}: {exc}") from None


def _params(config: ExperimentConfig, vmap, q: float) -> ExponentParams:
    if config.m is None:
        raise ConfigError(f"{config.name}: m is required")
    k = config.k if config.k is not None else vmap.k
    alpha = config.alpha if config.alpha is not None else vmap.alpha
    try:
        return ExponentParams(n=vmap.n, m=config.m, d=vmap.d, k=k, alpha=alpha, p=config.p, q=q)
    except ParameterError as exc:
        raise ConfigError(f"{config.name}: {exc}") from None


def _row(config, vmap, params: ExponentParams | None, **kw) -> ExperimentRecord:
    base = dict(
        map=config.map,
        n=vmap.n if vmap is not None else None,
        d=vmap.d if vmap is not None else None,
        m=params.m if params else config.m,
        k=params.k if params else None,
        alpha=params.alpha if params else None,
        p=params.p if params else None,
        q=params.q if params else None,
        mu=None,
        depth=None,
        resolution=None,
        seed=config.seed,
        predicted=None,
        residual=None,
    )
    base.update(kw)
    return ExperimentRecord(**base)


def general_position_cube(domain: Cube, shrink: float = 0.9) -> Cube:
    """A sub-cube whose dyadic grid is offset from the domain's by irrational amounts.

    Critical points at dyadic vertices are covered only by cells far
    coarser than their neighbourhoods; shifting the grid avoids that bias.
    """
    shift = (1 - shrink) * domain.side * _GOLDEN ** np.arange(1, domain.n + 1)
    return Cube(tuple(domain.lo + shift), shrink * domain.side)


def _fit_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = y > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


# ------------------------------------------------------- exponent sweep


def _sweep_units(config):
    vmap = _map(config)
    if not config.q or not config.depths:
        raise ConfigError(f"{config.name}: exponent_sweep needs q and depths")
    for q in config.q:
        _params(config, vmap, q)
    return list(enumerate(config.q))


def _sweep_eval(config, unit):
    index, q = unit
    vmap = _map(config)
    params = _params(config, vmap, q)
    mu = mu_q(params)
    cube = general_position_cube(vmap.domain) if config.get("cube", "general") == "general" else vmap.domain
    levels = list(config.depths)
    crits = [critical_cells(vmap, cube, params.m, L) for L in levels]
    rows = []
    if mu <= 0:
        # at or past the threshold exponent: image content of the critical values
        vals = [phi_functional(vmap, S, 0.0, q).value if len(S) else 0.0 for S in crits]
        for L, v in zip(levels, vals):
            rows.append(_row(config, vmap, params, experiment="exponent_sweep", mu=mu, depth=L, resolution=2**L, measured=v, predicted=mu))
        frac = 1.0 if vals[-1] < vals[0] or vals[0] == 0 else 0.0
        rows.append(_row(config, vmap, params, experiment="exponent_sweep_trend", mu=mu, depth=levels[-1], resolution=2 ** levels[-1], measured=frac, predicted=mu, residual=1 - frac))
        return rows
    deep = crits[-1]
    samples = int(config.number("samples", 40))
    rng = np.random.default_rng([config.seed, index])
    if len(deep):
        pick = np.sort(rng.choice(len(deep), size=min(samples, len(deep)), replace=False))
        ys = vmap(deep.centers[pick])
        w = certified_image_diameters(vmap, deep.lo[pick], deep.side) ** q
        if not np.any(w > 0):
            w = np.ones(len(pick))
        contents = np.array([[level_set_content(vmap, y, cube, mu, L, critical=S).value for S, L in zip(crits, levels)] for y in ys])
    else:
        w = np.ones(1)
        contents = np.zeros((1, len(levels)))
    w = w / w.sum()
    mean = w @ contents
    for j, L in enumerate(levels):
        rows.append(_row(config, vmap, params, experiment="exponent_sweep", mu=mu, depth=L, resolution=2**L, measured=float(mean[j]), predicted=mu))
    if is_borderline(params):
        ratio = float(mean[-1] / mean[0]) if mean[0] > 0 else 0.0
        rows.append(_row(config, vmap, params, experiment="exponent_sweep_borderline", mu=mu, depth=levels[-1], resolution=2 ** levels[-1], measured=ratio, predicted=mu))
    else:
        vacuous = contents[:, 0] == 0
        frac = float(w @ ((contents[:, -1] < contents[:, 0]) | vacuous))
        rows.append(_row(config, vmap, params, experiment="exponent_sweep_trend", mu=mu, depth=levels[-1], resolution=2 ** levels[-1], measured=frac, predicted=mu, residual=1 - frac))
    return rows


def _sweep_summary(config, records):
    failures, notes = [], []
    tol = config.number("fraction_tol", 0.05)
    for r in records:
        if r.experiment == "exponent_sweep_trend" and r.residual > tol:
            failures.append(f"q={r.q}: content at mu={r.mu:.4g} decreases for only {r.measured:.1%} of weighted samples")
        if r.experiment == "exponent_sweep_borderline":
            notes.append(f"q={r.q}: borderline q = m - 1, excluded by the bridge theorem; see the coarea experiment")
            if r.measured < 0.5:
                failures.append(f"q={r.q}: borderline content fell to {r.measured:.3g} of its shallow value")
    return [], failures, notes


# -------------------------------------------------------- cube scaling


def _scaling_units(config):
    vmap = _map(config)
    if not config.q:
        raise ConfigError(f"{config.name}: cube_scaling needs q")
    for q in config.q:
        _params(config, vmap, q)
    scales = [int(s) for s in config.numbers("scales")]
    if len(config.numbers("center")) != vmap.n:
        raise ConfigError(f"{config.name}: center needs {vmap.n} coordinates")
    return [(q, j) for q in config.q for j in scales]


def _scaling_mu(config, params):
    return config.number("mu") if "mu" in config.extra else mu_q(params)


def _scaling_eval(config, unit):
    q, j = unit
    vmap = _map(config)
    params = _params(config, vmap, q)
    mu = _scaling_mu(config, params)
    rel = int(config.number("relative_depth"))
    cube = Cube.centered(config.numbers("center"), vmap.domain.side * 2.0**-j)
    cells = critical_cells(vmap, cube, params.m, rel)
    phi = phi_functional(vmap, cells, mu, q).value if len(cells) else 0.0
    return [_row(config, vmap, params, experiment="cube_scaling", mu=mu, depth=j, resolution=2**rel, measured=phi, predicted=cube_exponent(params, mu))]


def _scaling_summary(config, records):
    vmap = _map(config)
    extra, failures, notes = [], [], []
    tol = config.number("slope_tol", 0.3)
    for q in config.q:
        rows = [r for r in records if r.q == q]
        sides = [vmap.domain.side * 2.0**-r.depth for r in rows]
        slope = _fit_slope(sides, [r.measured for r in rows])
        pred = rows[0].predicted
        extra.append(replace(rows[0], experiment="cube_scaling_fit", depth=None, measured=slope, residual=slope - pred, wall_ms=0.0))
        if math.isnan(slope):
            notes.append(f"q={q}: fewer than two nonzero Phi values, slope undefined")
        elif slope < pred - tol:
            failures.append(f"q={q}: slope {slope:.3f} below predicted {pred:.3f} - {tol}")
    return extra, failures, notes


# ---------------------------------------------------------- Yomdin fit


def _draw_polynomial(rng, m: int, degree: int) -> MultiPoly:
    coeffs = {}
    if m == 2:
        s = rng.uniform(0.5, 0.9)
        u, v = rng.normal(size=2), rng.normal(size=2)
        a = s * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
        coeffs[(1, 0)], coeffs[(0, 1)] = a[:, 0], a[:, 1]
    elif m != 1:
        raise ValueError("m must be 1 or 2")
    scale = {2: 0.25, 3: 0.05}
    for order in range(2, degree + 1):
        for i in range(order, -1, -1):
            coeffs[(i, order - i)] = rng.normal(size=2) * scale.get(order, 0.01)
    return MultiPoly(2, 2, degree, coeffs)


def fold_transversality(poly: MultiPoly) -> float:
    """|cos| of the angle between ker grad P(0) and the normal of {det grad P = 0} at 0.

    Near 1 the origin is a clean fold; near 0 the kernel runs along the
    critical curve (a cusp-like point) and the fold image is short.
    """
    h = 1e-6
    e = np.eye(2) * h
    det = np.linalg.det(poly.grad(np.vstack([e, -e])))
    normal = (det[:2] - det[2:]) / (2 * h)
    size = np.linalg.norm(normal)
    if size == 0:
        return 0.0
    kernel = np.linalg.svd(poly.grad(np.zeros(2)))[2][-1]
    return float(abs(kernel @ normal) / size)


def random_polynomial(rng, m: int, degree: int = 3, min_transversality: float = 0.5) -> MultiPoly:
    """Seeded cubic R^2 -> R^2 with a prescribed degenerate Jacobian at 0.

    For m = 1 the Jacobian vanishes at the origin. For m = 2 it is a
    rank-one matrix s u v^T with s in [0.5, 0.9], redrawn until the origin
    is a fold (kernel transverse to the critical curve).
    """
    while True:
        poly = _draw_polynomial(rng, m, degree)
        if m == 1 or fold_transversality(poly) >= min_transversality:
            return poly


def _yomdin_units(config):
    count = int(config.number("polynomials", 10))
    ms = [int(v) for v in config.numbers("m_values", (1, 2))]
    return [(i, ms[i * len(ms) // count]) for i in range(count)]


def _yomdin_eval(config, unit):
    i, m = unit
    poly = random_polynomial(np.random.default_rng([config.seed, i]), m)
    exps = [int(e) for e in config.numbers("eps_exponents", range(1, 9))]
    radii = config.numbers("radii", (1.0, 0.5, 0.25))
    res = config.resolutions[0] if config.resolutions else 513
    rows = []
    for r in radii:
        covers = yomdin_ladder(poly, Cube.centered((0.0, 0.0), r), [2.0**-e for e in exps], m, res)
        for e, cov in zip(exps, covers):
            eps = 2.0**-e
            rows.append(
                ExperimentRecord(
                    experiment="yomdin_fit", map=f"random_poly(deg=3,m={m},id={i})@r={r!r}", n=2, d=2, m=m, k=None, alpha=None,
                    p=None, q=None, mu=None, depth=e, resolution=res, seed=config.seed, measured=float(cov.count),
                    predicted=float(1 - m), residual=cov.count / (1 + eps ** (1 - m)),
                )
            )
    return rows


def _yomdin_summary(config, records):
    extra, failures = [], []
    tol = config.number("spread_tol", 4.0)
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(r.map.split("@")[0], []).append(r)
    for name, rows in groups.items():
        norm = np.array([r.residual for r in rows])
        spread = float(norm.max() / norm.min()) if norm.min() > 0 else math.inf
        extra.append(replace(rows[0], experiment="yomdin_fit_constant", map=name, depth=None, measured=spread, residual=float(norm.max()), wall_ms=0.0))
        if not spread < tol:
            failures.append(f"{name}: normalized count varies by x{spread:.3g} (limit x{tol:g})")
    return extra, failures, []


# -------------------------------------------------------------- coarea


def _region(config, vmap):
    kind = config.get("region", "all")
    dom = vmap.domain
    if kind == "all":
        return lambda p: np.ones(len(p), dtype=bool)
    if kind == "disk":
        radius = dom.side / 2
        return lambda p: np.sum((p - dom.center) ** 2, axis=1) <= radius**2
    raise ConfigError(f"{config.name}: unknown region {kind!r}")


def _coarea_units(config):
    vmap = _map(config)
    if config.m is None or not config.depths:
        raise ConfigError(f"{config.name}: coarea needs m and depths")
    _region(config, vmap)
    if vmap.n > 3:
        raise ConfigError(f"{config.name}: coarea supports n <= 3")
    return list(config.depths)


def _coarea_eval(config, level):
    vmap = _map(config)
    cells = CellSet.from_predicate(vmap.domain, level, _region(config, vmap))
    yres = int(config.number("y_resolution", 0)) or None
    try:
        rep = coarea_report(vmap, cells, config.m, yres)
    except UnsupportedDimensions as exc:
        raise ConfigError(f"{config.name}: {exc}") from None
    return [
        ExperimentRecord(
            experiment="coarea", map=config.map, n=vmap.n, d=vmap.d, m=config.m, k=vmap.k, alpha=vmap.alpha, p=None, q=None,
            mu=None, depth=level, resolution=2**level, seed=config.seed, measured=rep.rhs, predicted=rep.lhs, residual=rep.residual,
        )
    ]


def _coarea_summary(config, records):
    extra, failures = [], []
    tol = config.number("tolerance", 0.03)
    null = config.number("degenerate_tol", 1e-3)
    exact = config.number("exact") if "exact" in config.extra else None
    degenerate = all(r.predicted <= null for r in records)
    for r in records:
        if degenerate:
            if r.measured > null:
                failures.append(f"resolution {r.resolution}: lhs vanishes but rhs = {r.measured:.3g}")
            continue
        if r.residual > tol:
            failures.append(f"resolution {r.resolution}: |lhs - rhs| / lhs = {r.residual:.3g} > {tol}")
        if exact is not None:
            for side, v in (("lhs", r.predicted), ("rhs", r.measured)):
                if abs(v - exact) > tol * abs(exact):
                    failures.append(f"resolution {r.resolution}: {side} = {v:.6g} misses {exact:.6g}")
    if not degenerate and config.get("halving", "yes") == "yes":
        for a, b in zip(records, records[1:]):
            if a.residual == 0.0:
                # both sides already agree exactly; nothing left to halve
                extra.append(replace(b, experiment="coarea_halving", measured=math.nan, predicted=0.5, residual=math.nan, wall_ms=0.0))
                continue
            ratio = b.residual / a.residual
            dev = abs(ratio - 0.5) / 0.5
            extra.append(replace(b, experiment="coarea_halving", measured=ratio, predicted=0.5, residual=dev, wall_ms=0.0))
            if not dev <= 0.3:
                failures.append(f"resolution {a.resolution} -> {b.resolution}: residual ratio {ratio:.3g}, expected 0.5 +- 30%")
    return extra, failures, []


# ------------------------------------------------------------- Choquet


def _choquet_setup(config):
    regime = config.get("regime")
    n = int(config.number("n", 2))
    if regime in ("adams", "lorentz") and config.p is None:
        raise ConfigError(f"{config.name}: the {regime} regime needs p")
    if regime == "sobolev" and config.k is None:
        raise ConfigError(f"{config.name}: the sobolev regime needs k")
    try:
        if regime == "adams":
            kw = dict(n=n, p=config.p, s=config.number("s"), beta=config.number("beta"))
        elif regime == "lorentz":
            kw = dict(n=n, p=config.p, beta=config.number("beta"))
        elif regime == "sobolev":
            kw = dict(n=n, k=config.k, l=int(config.number("l")))
        else:
            raise ConfigError(f"{config.name}: regime must be adams, lorentz or sobolev")
        label = choquet_label(regime, **kw)
        cp = choquet_params(label)
    except ValueError as exc:
        raise ConfigError(f"{config.name}: {exc}") from None
    return regime, n, label, cp


def random_density(rng, cube: Cube, resolution: int) -> GridField:
    """Nonnegative sum of one to four Gaussian bumps with random centers and widths."""
    pts = lattice(cube, resolution).reshape(-1, cube.n)
    out = np.zeros(len(pts))
    for _ in range(rng.integers(1, 5)):
        c = cube.lo + cube.side * rng.random(cube.n)
        w = cube.side * rng.uniform(0.03, 0.3)
        out += rng.uniform(0.2, 2.0) * np.exp(-np.sum((pts - c) ** 2, axis=1) / (2 * w * w))
    return GridField(cube, resolution, out.reshape((resolution,) * cube.n))


def polynomial_bump(rng, cube: Cube, resolution: int) -> GridField:
    """a (1 - |x - c|^2 / r^2)^3 on the ball, zero outside (a C^2 piecewise polynomial)."""
    pts = lattice(cube, resolution).reshape(-1, cube.n)
    c = cube.lo + cube.side * rng.uniform(0.25, 0.75, cube.n)
    r = cube.side * rng.uniform(0.1, 0.4)
    t = np.clip(1 - np.sum((pts - c) ** 2, axis=1) / r**2, 0.0, None)
    return GridField(cube, resolution, (rng.uniform(0.5, 2.0) * t**3).reshape((resolution,) * cube.n))


def hessian_l1(f: GridField) -> float:
    h = gradient_field(gradient_field(f))
    return float(np.sum(f.weights * np.linalg.norm(h.values, axis=-1)))


def _choquet_units(config):
    _choquet_setup(config)
    count = int(config.number("count", 50))
    res = config.resolutions or (33, 65)
    start = -1 if config.get("include_zero", "no") == "yes" else 0
    return [(r, i) for r in res for i in range(start, count)]


def _choquet_eval(config, unit):
    res, i = unit
    regime, n, label, cp = _choquet_setup(config)
    cube = Cube.unit(n)
    rng = np.random.default_rng([config.seed, i + 1])
    if regime == "sobolev":
        f = polynomial_bump(rng, cube, res)
        if i < 0:
            f = f.replace_values(np.zeros_like(f.values))
        F = maximal_function(norm_field(gradient_field(f)))
        norm = hessian_l1(f)
    else:
        g = random_density(rng, cube, res)
        if i < 0:
            g = g.replace_values(np.zeros_like(g.values))
        F = maximal_function(riesz_potential_grid(g, cp.beta))
        norm = lp_norm(g, cp.p) ** cp.s if regime == "adams" else lorentz_p1_norm(g, cp.p) ** cp.p
    value = choquet_integral(F, cp).value
    ratio = value / norm if norm > 0 else None
    return [
        ExperimentRecord(
            experiment="choquet", map=f"{label}#g{i}", n=n, d=1, m=None, k=None, alpha=None, p=cp.p, q=None, mu=None,
            depth=None, resolution=res, seed=config.seed, measured=value, predicted=cp.tau, residual=ratio,
        )
    ]


def _choquet_summary(config, records):
    extra, failures = [], []
    for res in sorted({r.resolution for r in records}):
        rows = [r for r in records if r.resolution == res]
        for r in rows:
            if r.residual is None and r.measured != 0.0:
                failures.append(f"{r.map}: zero normalizer but integral {r.measured:.3g}")
        ratios = np.array([r.residual for r in rows if r.residual is not None])
        if len(ratios) == 0:
            continue
        med = float(np.median(ratios))
        alarms = int(np.sum(ratios > 10 * med))
        label = rows[0].map.split("#")[0]
        extra.append(replace(rows[0], experiment="choquet_alarm", map=label, measured=float(ratios.max() / med), residual=float(alarms), wall_ms=0.0))
        if alarms:
            failures.append(f"resolution {res}: {alarms} ratios exceed 10x the median")
    return extra, failures, []


# ------------------------------------------------------------ dispatch

RUNNERS = {
    "exponent_sweep": (_sweep_units, _sweep_eval, _sweep_summary),
    "cube_scaling": (_scaling_units, _scaling_eval, _scaling_summary),
    "yomdin_fit": (_yomdin_units, _yomdin_eval, _yomdin_summary),
    "coarea": (_coarea_units, _coarea_eval, _coarea_summary),
    "choquet": (_choquet_units, _choquet_eval, _choquet_summary),
}


def _run_unit(args):
    config, unit = args
    evaluate = RUNNERS[config.experiment][1]
    t0 = time.perf_counter()
    rows = evaluate(config, unit)
    ms = round(1000 * (time.perf_counter() - t0), 3)
    return [replace(r, wall_ms=ms) for r in rows]


def validate_config(config: ExperimentConfig) -> list:
    """Raise ConfigError for invalid configs; returns the work units."""
    if config.experiment not in RUNNERS:
        raise ConfigError(f"{config.name}: unknown experiment {config.experiment!r}")
    return RUNNERS[config.experiment][0](config)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> RunResult:
    units = validate_config(config)
    tasks = [(config, u) for u in units]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_unit, tasks))
    else:
        chunks = [_run_unit(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    extra, failures, notes = RUNNERS[config.experiment][2](config, records)
    return RunResult(records + extra, failures, notes)


def _named(experiment):
    def runner(config: ExperimentConfig, jobs: int = 1) -> list[ExperimentRecord]:
        if config.experiment != experiment:
            raise ConfigError(f"{config.name}: expected a {experiment} config")
        return run_experiment(config, jobs).records

    runner.__name__ = f"run_{experiment}"
    runner.__doc__ = f"Rows of a {experiment} config (fit and check rows included)."
    return runner


run_exponent_sweep = _named("exponent_sweep")
run_cube_scaling = _named("cube_scaling")
run_yomdin_fit = _named("yomdin_fit")
run_coarea = _named("coarea")
run_choquet = _named("choquet")
