"""Gradient boosted regression trees for squared-error and logistic loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from maskroadmap.learners.tree import Tree, fit_tree

PROB_CLIP = 1e-6


def _logloss(y, f):
    # log(1 + exp(f)) - y f, stable
    return float(np.mean(np.logaddexp(0.0, f) - y * f))


@dataclass
class BoostedTrees:
    init: float
    trees: list[Tree] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    loss: str = "squared_error"
    train_loss: list[float] = field(default_factory=list)

    def decision_function(self, X) -> np.ndarray:
        f = np.full(np.asarray(X).shape[0], self.init)
        for tree, step in zip(self.trees, self.steps):
            f += step * tree.predict(X)
        return f

    def predict(self, X) -> np.ndarray:
        f = self.decision_function(X)
        if self.loss == "logistic":
            return np.clip(expit(f), PROB_CLIP, 1.0 - PROB_CLIP)
        return f


def fit_boosting(
    X,
    y,
    n_rounds: int = 100,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    min_leaf: int = 5,
    loss: str = "squared_error",
) -> BoostedTrees:
    """Fit a boosted tree ensemble.

    Squared error fits each tree to the current residuals. Logistic loss fits
    each tree to the gradient ``y - p`` and replaces leaf values with the
    one-step Newton update ``sum(g) / sum(h)``. A round whose step would raise
    the training loss is halved until it does not, so ``train_loss`` is
    non-increasing.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if loss not in ("squared_error", "logistic"):
        raise ValueError(f"unknown loss {loss!r}")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in (0, 1]")
    if loss == "logistic":
        init = float(logit(np.clip(y.mean(), PROB_CLIP, 1.0 - PROB_CLIP)))
        objective = lambda f: _logloss(y, f)  # noqa: E731
    else:
        init = float(y.mean())
        objective = lambda f: float(np.mean((y - f) ** 2))  # noqa: E731
    model = BoostedTrees(init=init, loss=loss)
    f = np.full(y.size, init)
    current = objective(f)
    model.train_loss.append(current)
    for _ in range(n_rounds):
        if loss == "logistic":
            p = expit(f)
            grad = y - p
            hess = p * (1.0 - p)
            tree = fit_tree(X, grad, max_depth=max_depth, min_leaf=min_leaf)
            leaf = tree.apply(X)
            num = np.bincount(leaf, weights=grad, minlength=tree.value.size)
            den = np.bincount(leaf, weights=hess, minlength=tree.value.size)
            tree = tree.with_values(num / np.maximum(den, 1e-12))
        else:
            tree = fit_tree(X, y - f, max_depth=max_depth, min_leaf=min_leaf)
        update = tree.predict(X)
        if not np.any(update):
            break
        step = learning_rate
        for _ in range(40):
            trial = objective(f + step * update)
            if trial <= current:
                break
            step *= 0.5
        else:
            break
        f = f + step * update
        current = trial
        model.trees.append(tree)
        model.steps.append(step)
        model.train_loss.append(current)
    return model
