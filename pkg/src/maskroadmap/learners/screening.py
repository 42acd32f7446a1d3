"""Univariate correlation screening of candidate covariates."""

from __future__ import annotations

import numpy as np
from scipy import stats


def pearson_tests(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson r and two-sided t-test p-value of every column of `X` against `y`.

    Constant columns get ``r = 0`` and ``p = 1``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 3:
        raise ValueError("correlation screening needs at least 3 observations")
    yc = y - y.mean()
    syy = float(yc @ yc)
    if syy == 0.0:
        raise ValueError("response is constant; correlation is undefined")
    Xc = X - X.mean(axis=0)
    sxx = np.einsum("ij,ij->j", Xc, Xc)
    const = sxx <= 1e-12 * np.maximum(1.0, np.einsum("ij,ij->j", X, X))
    r = np.zeros(X.shape[1])
    ok = ~const
    r[ok] = (Xc[:, ok].T @ yc) / np.sqrt(sxx[ok] * syy)
    r = np.clip(r, -1.0, 1.0)
    p = np.ones(X.shape[1])
    df = n - 2
    with np.errstate(divide="ignore"):
        t = np.abs(r[ok]) * np.sqrt(df / np.maximum(1.0 - r[ok] ** 2, 0.0))
    p[ok] = 2.0 * stats.t.sf(t, df)
    return r, p


def screen_correlation(X, y, alpha: float = 0.10, min_keep: int = 2, always_keep=None) -> np.ndarray:
    """Boolean mask of columns whose correlation with `y` is significant at `alpha`.

    If fewer than `min_keep` columns pass, the `min_keep` non-constant columns
    with largest ``|r|`` are kept instead. Columns flagged in `always_keep` are
    retained regardless of their correlation.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if min_keep < 1:
        raise ValueError(f"min_keep must be >= 1, got {min_keep}")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("screening needs a matrix with at least one column")
    r, p = pearson_tests(X, y)
    constant = np.ptp(X, axis=0) == 0
    mask = (p < alpha) & ~constant
    if mask.sum() < min_keep:
        candidates = np.flatnonzero(~constant)
        # stable sort keeps the lowest column index first among equal |r|
        order = candidates[np.argsort(-np.abs(r[candidates]), kind="stable")]
        mask = np.zeros_like(mask)
        mask[order[:min_keep]] = True
    if always_keep is not None:
        mask |= np.asarray(always_keep, dtype=bool)
    return mask
