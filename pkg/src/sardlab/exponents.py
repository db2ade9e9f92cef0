"""Exponent arithmetic for the bridge Morse-Sard relations.

All predicted exponents used by the experiment runners come from here.
Values are plain floats; a non-positive Hausdorff exponent is returned
unchanged and callers read it as the counting measure.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


class ParameterError(ValueError):
    """Raised when an exponent tuple lies outside its domain."""


@dataclass(frozen=True)
class ExponentParams:
    n: int
    m: int
    d: int
    k: int
    alpha: float = 0.0
    p: float | None = None
    q: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"n must be positive, got {self.n}")
        if not 1 <= self.m <= min(self.n, self.d):
            raise ParameterError(f"need 1 <= m <= min(n, d), got m={self.m}, n={self.n}, d={self.d}")
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.p is not None and self.p < 1:
            raise ParameterError(f"p must be >= 1, got {self.p}")
        if self.q is not None and not self.q >= self.m - 1:
            raise ParameterError(f"q must be >= m - 1 = {self.m - 1}, got {self.q}")

    @property
    def smoothness(self) -> float:
        return self.k + self.alpha

    def with_q(self, q: float) -> "ExponentParams":
        return replace(self, q=q)


def _require_q(params: ExponentParams) -> float:
    if params.q is None:
        raise ParameterError("q is not set")
    return params.q


def mu_q(params: ExponentParams) -> float:
    """Preimage exponent n - m + 1 - (k + alpha)(q - m + 1).

    ``q = m - 1`` is accepted and gives the borderline value n - m + 1.
    """
    q = _require_q(params)
    return params.n - params.m + 1 - params.smoothness * (q - params.m + 1)


def q_circle(params: ExponentParams) -> float:
    """Image exponent at which ``mu_q`` vanishes."""
    if params.smoothness <= 0:
        raise ParameterError("k + alpha must be positive")
    return params.m - 1 + (params.n - params.m + 1) / params.smoothness


def nu(params: ExponentParams) -> float:
    return params.n - params.m - params.k + 1


def tau_star(params: ExponentParams) -> float:
    """Threshold n - (k + alpha - 1) p for the bad-set dimension."""
    if params.p is None:
        raise ParameterError("p is not set")
    return params.n - (params.smoothness - 1) * params.p


def cube_exponent(params: ExponentParams, mu: float | None = None) -> float:
    """Per-cube scaling exponent q + mu + (k + alpha - 1)(q - m + 1).

    With ``mu`` left as None the preimage exponent ``mu_q`` is used, in
    which case the result collapses to n.
    """
    q = _require_q(params)
    if mu is None:
        mu = mu_q(params)
    return q + mu + (params.smoothness - 1) * (q - params.m + 1)


def is_borderline(params: ExponentParams) -> bool:
    return _require_q(params) == params.m - 1
