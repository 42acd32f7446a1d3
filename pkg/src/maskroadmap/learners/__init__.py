"""Base-learner library stacked by the Super Learner.

Every learner works on a pandas DataFrame of covariates and produces
predictions on ``[0, 1]``: either a regression of an outcome already mapped
to the unit interval or a probability for a binary response.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from maskroadmap.learners.boosting import fit_boosting
from maskroadmap.learners.mars import fit_mars
from maskroadmap.learners.screening import pearson_tests, screen_correlation
from maskroadmap.learners.spline import fit_additive_spline
from maskroadmap.learners.tree import fit_tree

__all__ = [
    "ALGORITHMS",
    "TASKS",
    "ScreenSpec",
    "LearnerSpec",
    "FittedLearner",
    "fit_learner",
    "predict",
    "screen_correlation",
    "pearson_tests",
    "default_library",
]

TASKS = ("regression", "binary")
PROB_CLIP = 1e-6

DEFAULT_HYPERPARAMETERS: dict[str, dict[str, Any]] = {
    "empirical_mean": {},
    "additive_spline_regression": {"n_knots": 4, "penalty": 1e-6, "max_iter": 50, "tol": 1e-8},
    "recursive_partitioning_tree": {"max_depth": 5, "min_leaf": 5},
    "gradient_boosted_trees": {"n_rounds": 100, "max_depth": 3, "learning_rate": 0.1, "min_leaf": 5},
    "multivariate_adaptive_regression_splines": {"max_terms": 21, "penalty": 3.0, "thresh": 1e-3, "prune": True},
}
ALGORITHMS = tuple(DEFAULT_HYPERPARAMETERS)

SHORT_NAMES = {
    "empirical_mean": "mean",
    "additive_spline_regression": "gam",
    "recursive_partitioning_tree": "rpart",
    "gradient_boosted_trees": "xgboost",
    "multivariate_adaptive_regression_splines": "earth",
}


@dataclass(frozen=True)
class ScreenSpec:
    alpha: float = 0.10
    min_keep: int = 2

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"screen alpha must lie in (0, 1), got {self.alpha}")
        if self.min_keep < 1:
            raise ValueError(f"screen min_keep must be >= 1, got {self.min_keep}")


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative configuration of one library member.

    `task` is ``"regression"`` for outcomes on ``[0, 1]`` (predictions are
    clipped to that range) or ``"binary"`` for probabilities.
    """

    algorithm: str
    task: str = "regression"
    hyperparameters: dict[str, Any] = field(default_factory=dict)
    screen: ScreenSpec | None = None

    def __post_init__(self):
        if self.algorithm not in DEFAULT_HYPERPARAMETERS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {TASKS}")
        unknown = set(self.hyperparameters) - set(DEFAULT_HYPERPARAMETERS[self.algorithm])
        if unknown:
            raise ValueError(f"{self.algorithm} does not accept hyperparameters {sorted(unknown)}")
        _check_ranges(self.algorithm, self.params)

    @property
    def params(self) -> dict[str, Any]:
        return {**DEFAULT_HYPERPARAMETERS[self.algorithm], **self.hyperparameters}

    @property
    def name(self) -> str:
        base = SHORT_NAMES[self.algorithm]
        return f"{base}_screen" if self.screen else base

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        if self.screen is None:
            d.pop("screen")
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LearnerSpec":
        d = dict(d)
        screen = d.pop("screen", None)
        if screen is not None and not isinstance(screen, ScreenSpec):
            screen = ScreenSpec(**screen)
        return cls(screen=screen, **d)


def _check_ranges(algorithm: str, p: dict[str, Any]) -> None:
    checks = {
        "n_knots": lambda v: int(v) == v and v >= 0,
        "penalty": lambda v: v >= 0,
        "max_iter": lambda v: v >= 1,
        "tol": lambda v: v > 0,
        "max_depth": lambda v: int(v) == v and v >= 0,
        "min_leaf": lambda v: int(v) == v and v >= 1,
        "n_rounds": lambda v: int(v) == v and v >= 0,
        "learning_rate": lambda v: 0 < v <= 1,
        "max_terms": lambda v: int(v) == v and v >= 1,
        "thresh": lambda v: v >= 0,
        "prune": lambda v: isinstance(v, bool),
    }
    for key, value in p.items():
        if not checks[key](value):
            raise ValueError(f"{algorithm}: invalid {key}={value!r}")


@dataclass(frozen=True)
class FittedLearner:
    spec: LearnerSpec
    retained_columns: tuple[str, ...]
    model: Any
    n_train: int
    train_columns: tuple[str, ...]


class _Constant:
    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, X) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], self.value)


def _as_frame(X) -> pd.DataFrame:
    if isinstance(X, pd.DataFrame):
        return X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return pd.DataFrame(X, columns=[f"x{j}" for j in range(X.shape[1])])


def fit_learner(spec: LearnerSpec, X, y, seed: int = 0, always_keep=()) -> FittedLearner:
    """Fit `spec` on covariates `X` and response `y`.

    Screening, when configured, runs first on the training data; columns in
    `always_keep` survive it. All algorithms here are deterministic, so
    `seed` only documents the call.
    """
    X = _as_frame(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.size}")
    if y.size < 2:
        raise ValueError("need at least 2 observations")
    if np.any(y < 0) or np.any(y > 1) or not np.all(np.isfinite(y)):
        raise ValueError("response must lie in [0, 1]")
    if spec.task == "binary" and not np.all((y == 0) | (y == 1)):
        raise ValueError("binary task needs a 0/1 response")
    columns = list(X.columns)
    keep = np.ones(len(columns), dtype=bool)
    if spec.screen is not None and columns and np.ptp(y) > 0 and y.size >= 3:
        forced = np.array([c in set(always_keep) for c in columns])
        keep = screen_correlation(X.to_numpy(float), y, spec.screen.alpha, spec.screen.min_keep, forced)
    if spec.algorithm == "empirical_mean":
        keep[:] = False
    retained = tuple(c for c, k in zip(columns, keep) if k)
    Xm = X.loc[:, list(retained)].to_numpy(dtype=float)
    model = _fit_algorithm(spec, Xm, y)
    return FittedLearner(spec, retained, model, int(y.size), tuple(columns))


def _fit_algorithm(spec: LearnerSpec, X: np.ndarray, y: np.ndarray):
    p = spec.params
    binary = spec.task == "binary"
    algo = spec.algorithm
    if algo == "empirical_mean" or np.ptp(y) == 0:
        return _Constant(y.mean())
    if algo == "additive_spline_regression":
        return fit_additive_spline(X, y, binary=binary, **p)
    if algo == "recursive_partitioning_tree":
        return fit_tree(X, y, **p)
    if algo == "gradient_boosted_trees":
        return fit_boosting(X, y, loss="logistic" if binary else "squared_error", **p)
    if algo == "multivariate_adaptive_regression_splines":
        return fit_mars(X, y, binary=binary, **p)
    raise AssertionError(algo)


def predict(fitted: FittedLearner, X_new) -> np.ndarray:
    """Predictions of `fitted` for every row of `X_new`, within ``[0, 1]``."""
    X_new = _as_frame(X_new)
    missing = [c for c in fitted.retained_columns if c not in X_new.columns]
    if missing:
        raise KeyError(f"prediction data lacks retained columns {missing}")
    Xm = X_new.loc[:, list(fitted.retained_columns)].to_numpy(dtype=float)
    out = np.asarray(fitted.model.predict(Xm), dtype=float)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{fitted.spec.name} produced non-finite predictions")
    if fitted.spec.task == "binary" and fitted.spec.algorithm in (
        "recursive_partitioning_tree",
        "gradient_boosted_trees",
    ):
        return np.clip(out, PROB_CLIP, 1 - PROB_CLIP)
    return np.clip(out, 0.0, 1.0)


def default_library(task: str, screen: ScreenSpec | None = ScreenSpec()) -> list[LearnerSpec]:
    """The five-algorithm library; every member except the mean is screened."""
    return [
        LearnerSpec("empirical_mean", task),
        LearnerSpec("additive_spline_regression", task, screen=screen),
        LearnerSpec("recursive_partitioning_tree", task, screen=screen),
        LearnerSpec("gradient_boosted_trees", task, screen=screen),
        LearnerSpec("multivariate_adaptive_regression_splines", task, screen=screen),
    ]
