"""Line-oriented ``key = value`` experiment configs."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

EXPERIMENTS = ("exponent_sweep", "cube_scaling", "yomdin_fit", "coarea", "choquet")


class ConfigError(ValueError):
    """Malformed or invalid experiment config (CLI exit code 2)."""


def _number(text: str) -> float:
    text = text.strip()
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"not a number: {text!r}") from None


def parse_list(text: str) -> tuple[float, ...]:
    """``1, 2, 3`` or an integer range ``4..8``."""
    text = text.strip()
    if ".." in text and "," not in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ConfigError(f"empty range {text!r}")
        return tuple(float(i) for i in range(lo, hi + 1))
    return tuple(_number(t) for t in text.split(",") if t.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    map: str | None = None
    m: int | None = None
    k: int | None = None
    alpha: float | None = None
    p: float | None = None
    q: tuple[float, ...] = ()
    depths: tuple[int, ...] = ()
    resolutions: tuple[int, ...] = ()
    output: str = "results"
    name: str = "experiment"
    extra: dict = field(default_factory=dict, compare=False)

    def get(self, key: str, default=None):
        return self.extra.get(key, default)

    def number(self, key: str, default: float | None = None) -> float:
        if key not in self.extra:
            if default is None:
                raise ConfigError(f"{self.name}: missing key {key!r}")
            return default
        return _number(self.extra[key])

    def numbers(self, key: str, default=None) -> tuple[float, ...]:
        if key not in self.extra:
            if default is None:
                raise ConfigError(f"{self.name}: missing key {key!r}")
            return tuple(default)
        return parse_list(self.extra[key])


_TYPED = {"experiment", "seed", "map", "m", "k", "alpha", "p", "q", "depths", "resolutions", "output"}


def parse_config(text: str, name: str = "experiment") -> ExperimentConfig:
    """Parse config text; ``#`` starts a comment, blank lines are ignored."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{name}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{name}:{lineno}: empty key")
        if key in raw:
            raise ConfigError(f"{name}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    if raw.get("experiment") not in EXPERIMENTS:
        raise ConfigError(f"{name}: experiment must be one of {', '.join(EXPERIMENTS)}")
    if "seed" not in raw:
        raise ConfigError(f"{name}: seed is mandatory")
    try:
        seed = int(raw["seed"])
        m = int(raw["m"]) if "m" in raw else None
        k = int(raw["k"]) if "k" in raw else None
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return ExperimentConfig(
        experiment=raw["experiment"],
        seed=seed,
        map=raw.get("map"),
        m=m,
        k=k,
        alpha=_number(raw["alpha"]) if "alpha" in raw else None,
        p=_number(raw["p"]) if "p" in raw else None,
        q=parse_list(raw["q"]) if "q" in raw else (),
        depths=tuple(int(d) for d in parse_list(raw["depths"])) if "depths" in raw else (),
        resolutions=tuple(int(r) for r in parse_list(raw["resolutions"])) if "resolutions" in raw else (),
        output=raw.get("output", "results"),
        name=name,
        extra={k: v for k, v in raw.items() if k not in _TYPED},
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, name=path.stem)
