"""Ordinary least squares with adjusted R², BIC and variance inflation factors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

RANK_TOL = 1e-10
# 1 - R²_j at or below this is treated as exact collinearity.
COLLINEAR_TOL = 1e-10


class SingularDesignError(np.linalg.LinAlgError):
    """Design matrix (with intercept) is numerically rank deficient."""


class InsufficientDataError(ValueError):
    pass


@dataclass
class OlsFit:
    intercept: float
    coefficients: np.ndarray
    n: int
    p: int
    rss: float
    r2: float
    adj_r2: float
    bic: float | None  # None marks a perfect fit (rss == 0)
    residuals: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.p)
        return self.intercept + X @ self.coefficients


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def bic(rss: float, n: int, p: int) -> float | None:
    """``n ln(rss/n) + (p + 1) ln(n)``; ``p`` excludes the intercept.

    Returns None for ``rss == 0``; :func:`bic_rank` orders that ahead of
    every finite value.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if rss < 0:
        raise ValueError("rss must be non-negative")
    if rss == 0:
        return None
    return n * math.log(rss / n) + (p + 1) * math.log(n)


def bic_rank(value: float | None) -> tuple[int, float]:
    """Sort key putting perfect fits first, then ascending BIC."""
    return (0, 0.0) if value is None else (1, value)


def ols_fit(X, y) -> OlsFit:
    """Least-squares fit of ``y`` on ``X`` plus an intercept.

    Solved through an SVD of the design; a smallest-to-largest singular
    value ratio below ``1e-10`` raises :class:`SingularDesignError`.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has {y.shape[0]}")
    if n < p + 2:
        raise InsufficientDataError(f"need n >= p + 2 observations, got n={n}, p={p}")

    D = _with_intercept(X)
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    if s[0] == 0 or s[-1] / s[0] < RANK_TOL:
        raise SingularDesignError(
            f"rank-deficient design: singular value ratio {s[-1] / s[0] if s[0] else 0.0:.3g}"
        )
    beta = Vt.T @ ((U.T @ y) / s)
    fitted = D @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    yc = y - y.mean()
    tss = float(yc @ yc)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)
    return OlsFit(
        intercept=float(beta[0]),
        coefficients=beta[1:].copy(),
        n=n,
        p=p,
        rss=rss,
        r2=r2,
        adj_r2=adj,
        bic=bic(rss, n, p),
        residuals=resid,
    )


def subset_rss(X: np.ndarray, y: np.ndarray, columns: Sequence[int]) -> float:
    """Residual sum of squares of ``y`` projected on ``1`` and ``X[:, columns]``.

    Rank-deficient column sets are allowed: the projection is taken onto
    their span, so adding a column never increases the result.
    """
    yc = y - y.mean()
    if len(columns) == 0:
        return float(yc @ yc)
    Xc = X[:, list(columns)]
    Xc = Xc - Xc.mean(axis=0)
    coef, *_ = np.linalg.lstsq(Xc, yc, rcond=RANK_TOL)
    r = yc - Xc @ coef
    return float(r @ r)


def vif(X) -> np.ndarray:
    """Variance inflation factor of each column of ``X``.

    ``VIF_j = 1 / (1 - R²_j)`` with ``R²_j`` from regressing column ``j``
    on the remaining columns plus an intercept. Exactly collinear columns
    get ``inf``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    Xc = X - X.mean(axis=0)
    ss = np.einsum("ij,ij->j", Xc, Xc)
    scale = np.abs(X).max(axis=0)
    if np.any(ss <= (1e-12 * scale) ** 2 * n):
        raise ValueError("VIF undefined for constant columns")
    if p == 1:
        return np.ones(1)
    # columns scaled to unit length: VIF is scale invariant, lstsq is better conditioned
    Z = Xc / np.sqrt(ss)
    out = np.empty(p)
    for j in range(p):
        others = np.delete(Z, j, axis=1)
        coef, *_ = np.linalg.lstsq(others, Z[:, j], rcond=RANK_TOL)
        r = Z[:, j] - others @ coef
        one_minus_r2 = float(r @ r)  # total sum of squares is 1
        out[j] = math.inf if one_minus_r2 <= COLLINEAR_TOL else 1.0 / one_minus_r2
    return out


def max_vif(X) -> float:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 or X.shape[1] == 1:
        return 1.0
    return float(vif(X).max())
