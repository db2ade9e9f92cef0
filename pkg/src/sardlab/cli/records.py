"""Experiment rows and their CSV persistence."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import astuple, dataclass, fields, replace
from pathlib import Path

from ..exponents import ExponentParams, cube_exponent, mu_q
from ..potentials import ChoquetParams

HEADER = "experiment,map,n,d,m,k,alpha,p,q,mu,depth,resolution,seed,measured,predicted,residual,wall_ms"


@dataclass(frozen=True)
class ExperimentRecord:
    experiment: str
    map: str
    n: int | None
    d: int | None
    m: int | None
    k: int | None
    alpha: float | None
    p: float | None
    q: float | None
    mu: float | None
    depth: int | None
    resolution: int | None
    seed: int
    measured: float
    predicted: float | None
    residual: float | None
    wall_ms: float = 0.0

    def without_time(self) -> "ExperimentRecord":
        return replace(self, wall_ms=0.0)


_INT = {"n", "d", "m", "k", "depth", "resolution", "seed"}
_STR = {"experiment", "map"}
assert ",".join(f.name for f in fields(ExperimentRecord)) == HEADER


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(records, path) -> Path:
    """Write rows in the given order under the fixed header (single writer)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER.split(","))
        for r in records:
            w.writerow([_fmt(v) for v in astuple(r)])
    return path


def _parse(name: str, text: str):
    if name in _STR:
        return text
    if text == "":
        return None
    if name in _INT:
        return int(text)
    return float(text)


def read_csv(path) -> list[ExperimentRecord]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or ",".join(rows[0]) != HEADER:
        raise ValueError(f"{path}: header does not match the experiment schema")
    names = HEADER.split(",")
    return [ExperimentRecord(**{k: _parse(k, v) for k, v in zip(names, row)}) for row in rows[1:]]


# ---------------------------------------------------------- predictions

_LABEL = re.compile(r"^(adams|lorentz|sobolev)\((.*)\)")


def choquet_label(regime: str, **params) -> str:
    body = ",".join(f"{k}={v!r}" for k, v in params.items())
    return f"{regime}({body})"


def choquet_params(label: str) -> ChoquetParams:
    """Inverse of choquet_label (the map column of choquet rows)."""
    match = _LABEL.match(label)
    if not match:
        raise ValueError(f"not a Choquet regime label: {label!r}")
    args = {}
    for item in match.group(2).split(","):
        key, value = item.split("=")
        args[key] = float(value) if key in ("p", "s", "beta") else int(value)
    return getattr(ChoquetParams, match.group(1))(**args)


def _params(r: ExperimentRecord) -> ExponentParams:
    return ExponentParams(n=r.n, m=r.m, d=r.d, k=r.k, alpha=r.alpha, p=r.p, q=r.q)


def expected_prediction(r: ExperimentRecord) -> float | None:
    """Recompute a row's predicted value from its parameters; None if not derived."""
    exp = r.experiment
    if exp.startswith("exponent_sweep"):
        return mu_q(_params(r))
    if exp.startswith("cube_scaling"):
        return cube_exponent(_params(r), r.mu)
    if exp.startswith("yomdin"):
        return float(1 - r.m)
    if exp.startswith("choquet"):
        return choquet_params(r.map).tau
    if exp == "coarea_halving":
        return 0.5
    return None


def verify_predictions(records) -> list[str]:
    """Rows whose stored prediction disagrees with the recomputed one."""
    bad = []
    for i, r in enumerate(records):
        want = expected_prediction(r)
        if want is None:
            continue
        if r.predicted is None or not math.isclose(r.predicted, want, rel_tol=1e-12, abs_tol=1e-12):
            bad.append(f"row {i + 1} ({r.experiment}, {r.map}): stored {r.predicted!r}, recomputed {want!r}")
    return bad
