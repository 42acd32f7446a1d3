"""Cross-validated stacking of the learner library (Super Learner)."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import nnls

from maskroadmap.learners import FittedLearner, LearnerSpec, fit_learner, predict

log = logging.getLogger(__name__)

LOSSES = ("squared_error", "log_loss")
PROB_CLIP = 1e-6


@dataclass(frozen=True)
class FoldAssignment:
    fold_id: np.ndarray
    K: int
    seed: int
    strata: np.ndarray | None = None
    warnings: tuple[str, ...] = ()

    def train_test(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.fold_id == k
        return np.flatnonzero(~test), np.flatnonzero(test)


def make_folds(n: int, K: int = 10, strata=None, seed: int = 0) -> FoldAssignment:
    """Assign `n` observations to `K` folds of sizes differing by at most one.

    With `strata`, each stratum is permuted separately and the strata are laid
    end to end before dealing positions round-robin, so every stratum is also
    spread evenly across folds.
    """
    if K < 2:
        raise ValueError(f"need at least 2 folds, got K={K}")
    if n < K:
        raise ValueError(f"cannot split {n} observations into {K} folds")
    rng = np.random.default_rng(seed)
    notes = []
    if strata is None:
        order = rng.permutation(n)
    else:
        strata = np.asarray(strata)
        if strata.shape != (n,):
            raise ValueError("strata must have one entry per observation")
        order = []
        for level in np.unique(strata):
            members = np.flatnonzero(strata == level)
            if members.size < K:
                notes.append(f"stratum {level!r} has {members.size} < K={K} members; some folds lack it")
            order.append(members[rng.permutation(members.size)])
        order = np.concatenate(order)
    fold_id = np.empty(n, dtype=np.intp)
    fold_id[order] = np.arange(n) % K
    for note in notes:
        log.warning(note)
    return FoldAssignment(fold_id, K, seed, None if strata is None else strata.copy(), tuple(notes))


def cv_predictions(library: list[LearnerSpec], X, y, folds: FoldAssignment, always_keep=()):
    """Out-of-fold prediction matrix for every library member.

    Returns ``(Z, kept, dropped)``: `Z` has one column per learner in `kept`
    (indices into `library`); `dropped` lists ``(index, reason)`` for learners
    that failed on some fold.
    """
    if not library:
        raise ValueError("library is empty")
    X = X if isinstance(X, pd.DataFrame) else pd.DataFrame(np.asarray(X, float))
    y = np.asarray(y, dtype=float)
    n = y.size
    Z = np.full((n, len(library)), np.nan)
    dropped = []
    for ell, spec in enumerate(library):
        try:
            for k in range(folds.K):
                train, test = folds.train_test(k)
                fit = fit_learner(spec, X.iloc[train], y[train], seed=folds.seed, always_keep=always_keep)
                Z[test, ell] = predict(fit, X.iloc[test])
        except (ValueError, FloatingPointError, np.linalg.LinAlgError, KeyError) as exc:
            log.warning("dropping learner %s: %s", spec.name, exc)
            dropped.append((ell, f"{type(exc).__name__}: {exc}"))
    kept = [ell for ell in range(len(library)) if ell not in {d[0] for d in dropped}]
    if not kept:
        raise RuntimeError(f"every learner failed: {dropped}")
    return Z[:, kept], kept, dropped


def meta_objective(Z, y, w, loss: str) -> float:
    pred = np.asarray(Z) @ np.asarray(w)
    y = np.asarray(y, dtype=float)
    if loss == "squared_error":
        return float(np.mean((y - pred) ** 2))
    if loss == "log_loss":
        p = np.clip(pred, PROB_CLIP, 1 - PROB_CLIP)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))
    raise ValueError(f"unknown loss {loss!r}; choose from {LOSSES}")


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.flatnonzero(u - css / np.arange(1, v.size + 1) > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _nnls_simplex(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # sum-to-one enforced by a heavily weighted extra row (Lawson-Hanson weighting method)
    scale = max(1.0, float(np.abs(Z).max()), float(np.abs(y).max())) * np.sqrt(y.size)
    big = 1e6 * scale
    A = np.vstack([Z, np.full((1, Z.shape[1]), big)])
    b = np.r_[y, big]
    w, _ = nnls(A, b, maxiter=50 * Z.shape[1] + 100)
    return w


def _projected_gradient(Z, y, w0, loss: str, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    w = project_simplex(np.asarray(w0, float))
    f = meta_objective(Z, y, w, loss)
    n = y.size
    step = 1.0
    for _ in range(max_iter):
        pred = Z @ w
        if loss == "squared_error":
            grad = -2.0 * Z.T @ (y - pred) / n
        else:
            p = np.clip(pred, PROB_CLIP, 1 - PROB_CLIP)
            grad = -Z.T @ (y / p - (1 - y) / (1 - p)) / n
        while True:
            cand = project_simplex(w - step * grad)
            fc = meta_objective(Z, y, cand, loss)
            # Armijo condition along the projection arc
            if fc <= f - 1e-4 * float(grad @ (w - cand)) or step < 1e-14:
                break
            step *= 0.5
        decrease = f - fc
        if fc <= f:
            w, f = cand, fc
        if decrease < tol:
            break
        step = min(step * 2.0, 1e6)
    return w


def meta_weights(Z, y, loss: str = "squared_error") -> np.ndarray:
    """Convex combination weights minimizing the stacked loss.

    Weights are non-negative and sum to one. Squared error is solved by
    non-negative least squares with the sum constraint built in; log loss by
    projected gradient descent on the simplex. The returned weights never do
    worse than the best single learner on `Z`.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; choose from {LOSSES}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("Z contains non-finite predictions")
    L = Z.shape[1]
    if L == 1:
        return np.ones(1)
    if loss == "squared_error":
        w = _nnls_simplex(Z, y)
        if w.sum() <= 0:
            warnings.warn("NNLS returned all-zero weights; using uniform weights", RuntimeWarning, stacklevel=2)
            w = np.full(L, 1.0 / L)
        w = w / w.sum()
        w = _projected_gradient(Z, y, w, loss)
    else:
        w = _projected_gradient(Z, y, np.full(L, 1.0 / L), loss)
    w = np.maximum(w, 0.0)
    w = w / w.sum()
    vertex = np.array([meta_objective(Z, y, np.eye(L)[ell], loss) for ell in range(L)])
    best = int(np.argmin(vertex))
    if meta_objective(Z, y, w, loss) > vertex[best]:
        w = np.eye(L)[best]
    return w


@dataclass
class SuperLearnerFit:
    library: list[LearnerSpec]
    folds: FoldAssignment
    Z: np.ndarray
    weights: np.ndarray
    cv_risk: np.ndarray
    combined_risk: float
    fits: list[FittedLearner]
    loss: str
    dropped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def learner_names(self) -> list[str]:
        return [spec.name for spec in self.library]


def sl_fit(library, X, y, K: int = 10, seed: int = 0, loss: str = "squared_error", strata=None, always_keep=(), cv_single: bool = False) -> SuperLearnerFit:
    """Cross-validate the library, solve for weights, refit on all data.

    A single-learner library has weight one whatever its risk, so its
    cross-validation is skipped unless `cv_single` is set; `Z` and the risks
    are then NaN.
    """
    X = X if isinstance(X, pd.DataFrame) else pd.DataFrame(np.asarray(X, float))
    y = np.asarray(y, dtype=float)
    folds = make_folds(y.size, K, strata, seed)
    if len(library) == 1 and not cv_single:
        fits = [fit_learner(library[0], X, y, seed=seed, always_keep=always_keep)]
        nan = np.full((y.size, 1), np.nan)
        return SuperLearnerFit(list(library), folds, nan, np.ones(1), np.full(1, np.nan), float("nan"), fits, loss)
    Z, kept, dropped = cv_predictions(library, X, y, folds, always_keep)
    used = [library[ell] for ell in kept]
    weights = meta_weights(Z, y, loss)
    risk = np.array([meta_objective(Z, y, e, loss) for e in np.eye(len(used))])
    combined = meta_objective(Z, y, weights, loss)
    fits = [fit_learner(spec, X, y, seed=seed, always_keep=always_keep) for spec in used]
    return SuperLearnerFit(used, folds, Z, weights, risk, combined, fits, loss, dropped)


def sl_predict(fit: SuperLearnerFit, X_new) -> np.ndarray:
    preds = np.column_stack([predict(f, X_new) for f in fit.fits])
    return np.clip(preds @ fit.weights, 0.0, 1.0)
