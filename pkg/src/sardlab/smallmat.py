"""Singular values of small Jacobians via cyclic Jacobi on the Gram matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DIM = 8
OFF_TOL = 1e-14
MAX_SWEEPS = 60


class MatrixInputError(ValueError):
    pass


@dataclass(frozen=True)
class SingularSpectrum:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if any(v < 0 for v in vals):
            raise ValueError("singular values are nonnegative")
        if any(a < b for a, b in zip(vals, vals[1:])):
            raise ValueError("singular values must be sorted in decreasing order")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values)


def _pairs(k: int):
    return [(p, q) for p in range(k - 1) for q in range(p + 1, k)]


def jacobi_eigenvalues(sym: np.ndarray, scale: np.ndarray | None = None) -> np.ndarray:
    """Eigenvalues of a batch of symmetric matrices (..., k, k), unsorted.

    Sweeps stop once every off-diagonal Frobenius norm is below
    ``OFF_TOL * scale`` (``scale`` defaults to the Frobenius norm of each
    matrix).
    """
    a = np.array(sym, dtype=float, copy=True)
    batch_shape = a.shape[:-2]
    k = a.shape[-1]
    a = a.reshape(-1, k, k)
    if scale is None:
        scale = np.sqrt(np.sum(a**2, axis=(1, 2)))
    scale = np.broadcast_to(np.asarray(scale, dtype=float).reshape(-1), (a.shape[0],))
    limit = OFF_TOL * scale
    iu = np.triu_indices(k, 1)
    for _ in range(MAX_SWEEPS):
        off = np.sqrt(2.0 * np.sum(a[:, iu[0], iu[1]] ** 2, axis=1))
        active = off > limit
        if not active.any():
            break
        sub = a[active]
        for p, q in _pairs(k):
            apq = sub[:, p, q]
            nz = apq != 0.0
            if not nz.any():
                continue
            with np.errstate(over="ignore"):
                # a huge theta means a negligible rotation; t underflows to 0 correctly
                theta = np.where(nz, (sub[:, q, q] - sub[:, p, p]) / (2.0 * np.where(nz, apq, 1.0)), 0.0)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(nz & np.isfinite(t), t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = (t * c)[:, None]
            c = c[:, None]
            col_p = sub[:, :, p].copy()
            col_q = sub[:, :, q]
            sub[:, :, p] = c * col_p - s * col_q
            sub[:, :, q] = s * col_p + c * col_q
            row_p = sub[:, p, :].copy()
            row_q = sub[:, q, :]
            sub[:, p, :] = c * row_p - s * row_q
            sub[:, q, :] = s * row_p + c * row_q
        a[active] = sub
    return np.diagonal(a, axis1=1, axis2=2).reshape(batch_shape + (k,))


def spectra(mats: np.ndarray) -> np.ndarray:
    """Singular values of a batch (..., d, n), sorted descending along the last axis."""
    mats = np.asarray(mats, dtype=float)
    if mats.ndim < 2:
        raise MatrixInputError("expected at least a 2-d array")
    if not np.all(np.isfinite(mats)):
        raise MatrixInputError("matrix has non-finite entries")
    d, n = mats.shape[-2:]
    if max(d, n) > MAX_DIM:
        raise MatrixInputError(f"matrices up to {MAX_DIM}x{MAX_DIM} only, got {d}x{n}")
    if d <= n:
        gram = mats @ np.swapaxes(mats, -1, -2)
    else:
        gram = np.swapaxes(mats, -1, -2) @ mats
    norm2 = np.sum(mats**2, axis=(-2, -1))
    if gram.shape[-1] == 1:
        eig = gram[..., 0]
    else:
        eig = jacobi_eigenvalues(gram, scale=norm2)
    sv = np.sqrt(np.clip(eig, 0.0, None))
    return -np.sort(-sv, axis=-1)


def singular_values(m) -> SingularSpectrum:
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise MatrixInputError("singular_values takes a single matrix; use spectra() for batches")
    return SingularSpectrum(tuple(spectra(m)))


def default_tol(s) -> float | np.ndarray:
    """Scale-aware rank threshold 1e-8 * (1 + lambda_1)."""
    vals = s.as_array() if isinstance(s, SingularSpectrum) else np.asarray(s)
    return 1e-8 * (1.0 + vals[..., 0])


def rank_eps(s, tol=None):
    """Number of singular values strictly above ``tol``."""
    vals = s.as_array() if isinstance(s, SingularSpectrum) else np.asarray(s, dtype=float)
    if tol is None:
        tol = default_tol(vals)
    tol = np.asarray(tol, dtype=float)
    if np.any(tol < 0):
        raise ValueError("tol must be nonnegative")
    counts = np.sum(vals > tol[..., None], axis=-1)
    return int(counts) if counts.ndim == 0 else counts


def jm(s, m: int):
    """Product of the m largest singular values."""
    vals = s.as_array() if isinstance(s, SingularSpectrum) else np.asarray(s, dtype=float)
    if not 1 <= m <= vals.shape[-1]:
        raise ValueError(f"m must lie in [1, {vals.shape[-1]}], got {m}")
    out = np.prod(vals[..., :m], axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def opnorm(mats: np.ndarray) -> np.ndarray:
    return spectra(mats)[..., 0]
