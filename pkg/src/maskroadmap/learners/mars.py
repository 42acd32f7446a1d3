"""Additive multivariate adaptive regression splines (degree-1 MARS).

Forward pass adds mirrored hinge pairs ``max(0, x - t)`` / ``max(0, t - x)``
greedily by residual-sum-of-squares reduction. Backward pass deletes terms one
at a time and keeps the subset with the lowest generalized cross-validation
score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from maskroadmap.learners.spline import PROB_CLIP, penalized_irls

# a hinge is (column, knot, sign); sign=+1 is max(0, x - t), sign=-1 is max(0, t - x)
Hinge = tuple[int, float, int]


def hinge_matrix(X: np.ndarray, hinges: list[Hinge]) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    cols = [np.ones(X.shape[0])]
    for j, t, s in hinges:
        cols.append(np.maximum(0.0, s * (X[:, j] - t)))
    return np.column_stack(cols)


def gcv(rss: float, n: int, n_terms: int, penalty: float) -> float:
    c = n_terms + penalty * (n_terms - 1) / 2.0
    if c >= n:
        return np.inf
    return rss / (n * (1.0 - c / n) ** 2)


def _rss(B: np.ndarray, y: np.ndarray) -> float:
    coef = np.linalg.lstsq(B, y, rcond=None)[0]
    r = y - B @ coef
    return float(r @ r)


@dataclass
class Mars:
    hinges: list[Hinge]
    coef: np.ndarray
    binary: bool
    forward_hinges: list[Hinge]
    gcv_path: list[float]

    def predict(self, X) -> np.ndarray:
        eta = hinge_matrix(X, self.hinges) @ self.coef
        if self.binary:
            return np.clip(expit(eta), PROB_CLIP, 1 - PROB_CLIP)
        return eta


def _forward(X, y, max_terms: int, thresh: float) -> list[Hinge]:
    n, p = X.shape
    hinges: list[Hinge] = []
    B = np.ones((n, 1))
    Q, _ = np.linalg.qr(B)
    resid = y - Q @ (Q.T @ y)
    tss = float(resid @ resid)
    if tss == 0.0:
        return hinges
    rss = tss
    while 1 + len(hinges) + 1 <= max_terms:
        best = None  # (reduction, j, t, which)
        for j in range(p):
            u = np.unique(X[:, j])
            knots = u[:-1]
            if knots.size == 0:
                continue
            xj = X[:, j][:, None]
            C1 = np.maximum(0.0, xj - knots)
            C2 = np.maximum(0.0, knots - xj)
            C1 = C1 - Q @ (Q.T @ C1)
            C2 = C2 - Q @ (Q.T @ C2)
            g11 = np.einsum("ij,ij->j", C1, C1)
            g22 = np.einsum("ij,ij->j", C2, C2)
            g12 = np.einsum("ij,ij->j", C1, C2)
            b1 = C1.T @ resid
            b2 = C2.T @ resid
            tiny = 1e-10 * n
            ok1 = g11 > tiny
            ok2 = g22 > tiny
            red1 = np.where(ok1, b1 * b1 / np.where(ok1, g11, 1.0), 0.0)
            red2 = np.where(ok2, b2 * b2 / np.where(ok2, g22, 1.0), 0.0)
            det = g11 * g22 - g12 * g12
            both = ok1 & ok2 & (det > 1e-10 * np.maximum(g11 * g22, 1e-300))
            safe = np.where(both, det, 1.0)
            red12 = np.where(both, (g22 * b1 * b1 - 2 * g12 * b1 * b2 + g11 * b2 * b2) / safe, 0.0)
            red = np.maximum(np.maximum(red1, red2), red12)
            k = int(np.argmax(red))
            if best is None or red[k] > best[0] * (1 + 1e-12):
                which = "both" if red12[k] >= max(red1[k], red2[k]) and both[k] else ("pos" if red1[k] >= red2[k] else "neg")
                best = (float(red[k]), j, float(knots[k]), which)
        if best is None or best[0] <= thresh * tss:
            break
        _, j, t, which = best
        new = []
        if which in ("both", "pos"):
            new.append((j, t, 1))
        if which in ("both", "neg"):
            new.append((j, t, -1))
        if 1 + len(hinges) + len(new) > max_terms:
            new = new[:1]
        hinges.extend(new)
        B = hinge_matrix(X, hinges)
        Q, _ = np.linalg.qr(B)
        resid = y - Q @ (Q.T @ y)
        new_rss = float(resid @ resid)
        if rss - new_rss <= thresh * tss:
            break
        rss = new_rss
    return hinges


def _backward(X, y, hinges: list[Hinge], penalty: float):
    n = y.size
    current = list(hinges)
    best_set = list(current)
    best_score = gcv(_rss(hinge_matrix(X, current), y), n, 1 + len(current), penalty)
    path = [best_score]
    while current:
        trial_scores = []
        for k in range(len(current)):
            subset = current[:k] + current[k + 1:]
            trial_scores.append(_rss(hinge_matrix(X, subset), y))
        k = int(np.argmin(trial_scores))
        current = current[:k] + current[k + 1:]
        score = gcv(trial_scores[k], n, 1 + len(current), penalty)
        path.append(score)
        if score < best_score:
            best_score = score
            best_set = list(current)
    return best_set, path


def fit_mars(
    X,
    y,
    max_terms: int = 21,
    penalty: float = 3.0,
    thresh: float = 1e-3,
    prune: bool = True,
    binary: bool = False,
) -> Mars:
    """Fit additive MARS.

    Parameters
    ----------
    max_terms : int
        Cap on basis functions after the forward pass, intercept included.
    penalty : float
        GCV cost per knot.
    thresh : float
        Forward pass stops once a pair improves RSS by less than this
        fraction of the total sum of squares.
    binary : bool
        Refit the selected basis as a logistic regression.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if max_terms < 1:
        raise ValueError("max_terms must be >= 1")
    forward = _forward(X, y, max_terms, thresh) if X.shape[1] else []
    if prune:
        hinges, path = _backward(X, y, forward, penalty)
    else:
        hinges, path = list(forward), []
    B = hinge_matrix(X, hinges)
    if binary:
        coef, _, _ = penalized_irls(B, y, 1e-6)
    else:
        coef = np.linalg.lstsq(B, y, rcond=None)[0]
    return Mars(hinges=hinges, coef=coef, binary=binary, forward_hinges=forward, gcv_path=path)
