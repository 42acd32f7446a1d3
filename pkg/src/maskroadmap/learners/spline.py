"""Additive cubic B-spline regression (a penalized-least-squares GAM)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import expit

PROB_CLIP = 1e-6


def penalized_lstsq(B: np.ndarray, y: np.ndarray, penalty, weights=None) -> np.ndarray:
    """Ridge solve. A scalar `penalty` applies to every column but the first."""
    if weights is None:
        G = B.T @ B
        rhs = B.T @ y
    else:
        Bw = B * weights[:, None]
        G = B.T @ Bw
        rhs = Bw.T @ y
    if np.ndim(penalty) == 0:
        D = np.full(B.shape[1], float(penalty))
        D[0] = 0.0
    else:
        D = np.asarray(penalty, dtype=float)
    G = G + np.diag(D)
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(G, rhs, rcond=None)[0]


def penalized_irls(B, y, penalty, max_iter: int = 50, tol: float = 1e-8):
    """Logistic regression by iteratively reweighted least squares.

    Returns ``(coef, n_iter, converged)``. Convergence is declared when the
    largest absolute coefficient change falls below `tol`.
    """
    beta = np.zeros(B.shape[1])
    ybar = np.clip(y.mean(), PROB_CLIP, 1 - PROB_CLIP)
    beta[0] = np.log(ybar / (1 - ybar))
    for it in range(1, max_iter + 1):
        eta = np.clip(B @ beta, -30.0, 30.0)
        p = expit(eta)
        w = np.maximum(p * (1 - p), 1e-10)
        z = eta + (y - p) / w
        new = penalized_lstsq(B, z, penalty, weights=w)
        delta = np.max(np.abs(new - beta))
        beta = new
        if delta < tol:
            return beta, it, True
    return beta, max_iter, False


@dataclass(frozen=True)
class _ColumnBasis:
    kind: str  # "spline" or "linear"
    knots: np.ndarray | None = None
    lo: float = 0.0
    hi: float = 1.0
    center: float = 0.0
    scale: float = 1.0

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        linear = ((x - self.center) / self.scale)[:, None]
        if self.kind == "linear":
            return linear
        xc = np.clip(x, self.lo, self.hi)
        D = BSpline.design_matrix(xc, self.knots, 3).toarray()
        # {1, x, interior B-splines} spans the same space as the full B-spline
        # basis; keeping 1 and x explicit leaves linear trends unpenalized
        return np.hstack([linear, D[:, 1:-1]])

    def penalty_mask(self) -> np.ndarray:
        width = 1 if self.kind == "linear" else self.knots.size - 4 - 1
        mask = np.ones(width, dtype=bool)
        mask[0] = False
        return mask


def _column_basis(x: np.ndarray, n_knots: int) -> _ColumnBasis:
    u = np.unique(x)
    sd = float(np.std(x)) or 1.0
    center = float(np.mean(x))
    if u.size <= 3 or n_knots == 0:
        return _ColumnBasis("linear", center=center, scale=sd)
    lo, hi = float(u[0]), float(u[-1])
    probs = np.arange(1, n_knots + 1) / (n_knots + 1)
    interior = np.unique(np.quantile(x, probs))
    interior = interior[(interior > lo) & (interior < hi)]
    knots = np.r_[[lo] * 4, interior, [hi] * 4]
    return _ColumnBasis("spline", knots=knots, lo=lo, hi=hi, center=center, scale=sd)


@dataclass
class AdditiveSpline:
    bases: list[_ColumnBasis]
    coef: np.ndarray
    binary: bool
    n_iter: int = 0
    converged: bool = True

    def design(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        blocks = [np.ones((X.shape[0], 1))]
        blocks += [b.evaluate(X[:, j]) for j, b in enumerate(self.bases)]
        return np.hstack(blocks)

    def predict(self, X) -> np.ndarray:
        eta = self.design(X) @ self.coef
        if self.binary:
            return np.clip(expit(eta), PROB_CLIP, 1 - PROB_CLIP)
        return eta


def fit_additive_spline(
    X,
    y,
    n_knots: int = 4,
    penalty: float = 1e-6,
    binary: bool = False,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> AdditiveSpline:
    """Fit ``y ~ sum_j s_j(x_j)`` with one cubic B-spline basis per column.

    Interior knots sit at equally spaced quantiles of each column. Columns
    with at most three distinct values enter linearly. The ridge `penalty`
    touches only the non-linear part of each basis, so linear trends are
    reproduced exactly. Binary responses are
    fitted on the logit scale by IRLS.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    bases = [_column_basis(X[:, j], n_knots) for j in range(X.shape[1])]
    model = AdditiveSpline(bases=bases, coef=np.zeros(0), binary=binary)
    B = model.design(X)
    weights = np.concatenate([[0.0], *[b.penalty_mask() for b in bases]]) * penalty
    if binary:
        model.coef, model.n_iter, model.converged = penalized_irls(B, y, weights, max_iter, tol)
    else:
        model.coef = penalized_lstsq(B, y, weights)
    return model
