import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from maskroadmap.learners import (
    LearnerSpec,
    ScreenSpec,
    default_library,
    fit_learner,
    pearson_tests,
    predict,
    screen_correlation,
)
from maskroadmap.learners.boosting import fit_boosting
from maskroadmap.learners.mars import fit_mars, gcv, hinge_matrix
from maskroadmap.learners.spline import fit_additive_spline
from maskroadmap.learners.tree import fit_tree

# 10 x 3 design: column 0 tracks y closely, column 1 weakly, column 2 is unrelated
SCREEN_X = np.array(
    [
        [0.1, 1.0, 3.0],
        [0.9, 0.0, 1.0],
        [2.1, 2.0, 4.0],
        [2.8, 1.0, 1.0],
        [4.2, 3.0, 5.0],
        [5.1, 0.0, 9.0],
        [5.8, 4.0, 2.0],
        [7.2, 2.0, 6.0],
        [8.1, 5.0, 5.0],
        [8.8, 3.0, 3.0],
    ]
)
SCREEN_Y = np.arange(10, dtype=float) / 9.0


def t_pvalue_oracle(r: float, n: int) -> float:
    """Two-sided p-value by integrating the Student-t density directly."""
    df = n - 2
    t = abs(r) * math.sqrt(df / (1 - r * r))
    c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    tail, _ = quad(lambda x: c * (1 + x * x / df) ** (-(df + 1) / 2), t, math.inf)
    return 2 * tail


def pearson_oracle(x, y):
    xc, yc = x - x.mean(), y - y.mean()
    return float(xc @ yc / math.sqrt((xc @ xc) * (yc @ yc)))


# ---------------------------------------------------------------- screening


def test_pearson_tests_match_integration_oracle():
    r, p = pearson_tests(SCREEN_X, SCREEN_Y)
    for j in range(3):
        r_j = pearson_oracle(SCREEN_X[:, j], SCREEN_Y)
        assert r[j] == pytest.approx(r_j, abs=1e-12)
        assert p[j] == pytest.approx(t_pvalue_oracle(r_j, 10), rel=1e-7, abs=1e-12)


def test_screen_mask_matches_oracle():
    p_oracle = np.array([t_pvalue_oracle(pearson_oracle(SCREEN_X[:, j], SCREEN_Y), 10) for j in range(3)])
    for alpha in (0.01, 0.10, 0.5):
        mask = screen_correlation(SCREEN_X, SCREEN_Y, alpha=alpha, min_keep=1)
        expected = p_oracle < alpha
        if not expected.any():
            expected[np.argmin(p_oracle)] = True
        np.testing.assert_array_equal(mask, expected)


def test_screen_keeps_perfectly_correlated_column():
    rng = np.random.default_rng(0)
    y = rng.random(20)
    X = np.column_stack([rng.random(20), y, rng.random(20)])
    assert screen_correlation(X, y, alpha=0.10, min_keep=1)[1]


def test_screen_drops_constant_column():
    y = np.linspace(0, 1, 12)
    X = np.column_stack([np.full(12, 3.0), y, y**2])
    for alpha in (0.01, 0.5, 0.99):
        assert not screen_correlation(X, y, alpha=alpha, min_keep=2)[0]


def test_screen_rank_fallback_and_always_keep():
    rng = np.random.default_rng(1)
    y = rng.random(30)
    X = rng.random((30, 5))
    mask = screen_correlation(X, y, alpha=1e-9, min_keep=2)
    assert mask.sum() == 2
    r, _ = pearson_tests(X, y)
    assert set(np.flatnonzero(mask)) == set(np.argsort(-np.abs(r), kind="stable")[:2])
    forced = np.array([False, False, False, False, True])
    assert screen_correlation(X, y, alpha=1e-9, min_keep=2, always_keep=forced)[4]


@settings(max_examples=40, deadline=None)
@given(
    scale=st.floats(0.01, 100.0),
    shift=st.floats(-50.0, 50.0),
    col=st.integers(0, 2),
    seed=st.integers(0, 10_000),
)
def test_screen_invariant_to_affine_rescaling(scale, shift, col, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 3))
    y = X[:, 0] * 0.3 + rng.normal(size=25)
    y = (y - y.min()) / np.ptp(y)
    X2 = X.copy()
    X2[:, col] = X2[:, col] * scale + shift
    np.testing.assert_array_equal(screen_correlation(X, y), screen_correlation(X2, y))


# ---------------------------------------------------------------- tree


def leaf_trace_oracle(tree, X_train, y_train, x):
    """Mean of training responses satisfying every condition on `x`'s root-to-leaf path."""
    conditions = []
    node = 0
    while tree.feature[node] >= 0:
        f, t = tree.feature[node], tree.threshold[node]
        left = x[f] <= t
        conditions.append((f, t, left))
        node = tree.left[node] if left else tree.right[node]
    members = [i for i in range(len(y_train)) if all((X_train[i, f] <= t) == left for f, t, left in conditions)]
    return float(np.mean(y_train[members]))


def test_tree_prediction_equals_leaf_trace_mean():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(80, 3))
    y = np.sin(X[:, 0]) + 0.5 * (X[:, 1] > 0) + rng.normal(0, 0.1, 80)
    tree = fit_tree(X, y, max_depth=4, min_leaf=3)
    pred = tree.predict(X)
    for i in range(0, 80, 7):
        assert pred[i] == pytest.approx(leaf_trace_oracle(tree, X, y, X[i]), abs=1e-12)


def test_tree_depth_one_fits_step_exactly():
    x = np.linspace(0, 1, 20)[:, None]
    y = (x[:, 0] > 0.52).astype(float)
    tree = fit_tree(x, y, max_depth=1, min_leaf=1)
    assert np.mean((tree.predict(x) - y) ** 2) == 0.0
    spec = LearnerSpec("recursive_partitioning_tree", hyperparameters={"max_depth": 1, "min_leaf": 1})
    fitted = fit_learner(spec, x, y)
    assert np.all(predict(fitted, x) == y)


def test_tree_ties_break_to_lowest_column():
    x = np.linspace(0, 1, 10)
    X = np.column_stack([x, x])
    y = (x > 0.5).astype(float)
    tree = fit_tree(X, y, max_depth=1, min_leaf=1)
    assert tree.feature[0] == 0


def test_tree_respects_min_leaf():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 2))
    y = rng.normal(size=60)
    tree = fit_tree(X, y, max_depth=6, min_leaf=7)
    assert np.bincount(tree.apply(X))[np.unique(tree.apply(X))].min() >= 7


# ---------------------------------------------------------------- boosting


@pytest.mark.parametrize("loss", ["squared_error", "logistic"])
def test_boosting_training_loss_non_increasing(loss):
    rng = np.random.default_rng(5)
    X = rng.normal(size=(120, 3))
    eta = X[:, 0] - 0.5 * X[:, 1] ** 2
    y = (rng.random(120) < 1 / (1 + np.exp(-eta))).astype(float) if loss == "logistic" else np.clip(0.5 + 0.2 * eta, 0, 1)
    model = fit_boosting(X, y, n_rounds=40, loss=loss)
    tl = np.asarray(model.train_loss)
    assert np.all(np.diff(tl) <= 1e-12)
    assert tl[-1] < tl[0]


def test_boosting_logistic_predictions_are_clipped_probabilities():
    X = np.linspace(-3, 3, 40)[:, None]
    y = (X[:, 0] > 0).astype(float)
    p = fit_boosting(X, y, n_rounds=200, loss="logistic", learning_rate=0.5, min_leaf=1).predict(X)
    assert p.min() >= 1e-6 and p.max() <= 1 - 1e-6


# ---------------------------------------------------------------- additive spline


def test_spline_reproduces_linear_response():
    x = np.linspace(0, 1, 40)
    y = 3 * x / 3.0  # y = x keeps the response inside [0, 1]
    model = fit_additive_spline(x[:, None], y)
    np.testing.assert_allclose(model.predict(x[:, None]), y, atol=1e-8)


def test_spline_learner_matches_exact_least_squares_on_basis():
    rng = np.random.default_rng(6)
    X = rng.uniform(size=(60, 2))
    y = np.clip(0.3 * X[:, 0] + 0.4 * np.sin(3 * X[:, 1]) + 0.1, 0, 1)
    model = fit_additive_spline(X, y, penalty=0.0)
    B = model.design(X)
    coef = np.linalg.lstsq(B, y, rcond=None)[0]
    np.testing.assert_allclose(model.predict(X), B @ coef, atol=1e-8)


def test_spline_learner_on_linear_through_api():
    x = np.linspace(-2, 5, 30)
    y = (3 * x - 3 * x.min()) / (3 * np.ptp(x))
    fitted = fit_learner(LearnerSpec("additive_spline_regression"), pd.DataFrame({"x": x}), y)
    np.testing.assert_allclose(predict(fitted, pd.DataFrame({"x": x})), y, atol=1e-8)


def test_spline_binary_gives_probabilities():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(200, 2))
    y = (rng.random(200) < 1 / (1 + np.exp(-X[:, 0]))).astype(float)
    p = fit_additive_spline(X, y, binary=True).predict(X)
    assert np.all((p > 0) & (p < 1))
    assert np.corrcoef(p, X[:, 0])[0, 1] > 0.9


# ---------------------------------------------------------------- MARS


def test_mars_single_pair_equals_hinge_least_squares():
    rng = np.random.default_rng(8)
    x = rng.uniform(-1, 1, 50)
    y = np.maximum(0, x - 0.2) + 0.05 * rng.normal(size=50)
    model = fit_mars(x[:, None], y, max_terms=3, prune=False)
    assert len(model.hinges) <= 2
    B = hinge_matrix(x[:, None], model.hinges)
    coef = np.linalg.lstsq(B, y, rcond=None)[0]
    np.testing.assert_allclose(model.predict(x[:, None]), B @ coef, atol=1e-10)


def test_mars_pruning_selects_minimum_gcv():
    rng = np.random.default_rng(9)
    X = rng.uniform(-1, 1, size=(80, 3))
    y = np.abs(X[:, 0]) + 0.1 * rng.normal(size=80)
    model = fit_mars(X, y)
    assert min(model.gcv_path) == pytest.approx(
        gcv(float(np.sum((y - model.predict(X)) ** 2)), 80, 1 + len(model.hinges), 3.0), rel=1e-9
    )


def test_gcv_is_infinite_when_effective_terms_exceed_n():
    assert gcv(1.0, 5, 4, 3.0) == np.inf


# ---------------------------------------------------------------- library


def test_empirical_mean_is_constant():
    fitted = fit_learner(LearnerSpec("empirical_mean"), np.zeros((3, 2)), np.array([0.0, 0.5, 1.0]))
    pred = predict(fitted, np.random.default_rng(0).normal(size=(7, 2)))
    np.testing.assert_array_equal(pred, np.full(7, 0.5))
    assert fitted.retained_columns == ()


@pytest.mark.parametrize("spec", default_library("regression") + default_library("binary"), ids=lambda s: f"{s.task}-{s.name}")
def test_predictions_in_unit_interval_and_reproducible(spec):
    rng = np.random.default_rng(10)
    X = pd.DataFrame(rng.normal(size=(60, 4)), columns=list("abcd"))
    if spec.task == "binary":
        y = (rng.random(60) < 1 / (1 + np.exp(-2 * X["a"]))).astype(float)
    else:
        y = np.clip(0.5 + 0.3 * X["a"] - 0.2 * X["b"] ** 2 + 0.05 * rng.normal(size=60), 0, 1).to_numpy()
    X_new = pd.DataFrame(rng.normal(scale=3, size=(30, 4)), columns=list("abcd"))
    p1 = predict(fit_learner(spec, X, y, seed=1), X_new)
    p2 = predict(fit_learner(spec, X, y, seed=1), X_new)
    assert np.all((p1 >= 0) & (p1 <= 1))
    assert p1.tobytes() == p2.tobytes()


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), algo=st.sampled_from(["recursive_partitioning_tree", "additive_spline_regression", "multivariate_adaptive_regression_splines"]))
def test_predict_commutes_with_row_permutation(seed, algo):
    rng = np.random.default_rng(seed)
    X = pd.DataFrame(rng.normal(size=(40, 2)), columns=["u", "v"])
    y = np.clip(0.5 + 0.2 * X["u"].to_numpy(), 0, 1)
    fitted = fit_learner(LearnerSpec(algo), X, y)
    X_new = pd.DataFrame(rng.normal(size=(15, 2)), columns=["u", "v"])
    perm = rng.permutation(15)
    # BLAS may reassociate sums by row block, so agreement is to rounding
    np.testing.assert_allclose(predict(fitted, X_new)[perm], predict(fitted, X_new.iloc[perm]), rtol=0, atol=1e-14)


def test_predict_requires_retained_columns():
    X = pd.DataFrame({"u": np.linspace(0, 1, 20), "v": np.linspace(1, 0, 20) ** 2})
    fitted = fit_learner(LearnerSpec("additive_spline_regression"), X, X["u"].to_numpy())
    with pytest.raises(KeyError):
        predict(fitted, X[["v"]])


def test_screened_learner_retains_subset():
    rng = np.random.default_rng(11)
    X = pd.DataFrame(rng.normal(size=(50, 6)), columns=[f"w{j}" for j in range(6)])
    y = np.clip(0.5 + 0.3 * X["w2"].to_numpy(), 0, 1)
    fitted = fit_learner(LearnerSpec("additive_spline_regression", screen=ScreenSpec()), X, y)
    assert "w2" in fitted.retained_columns and len(fitted.retained_columns) < 6


@pytest.mark.parametrize(
    "kwargs",
    [
        {"algorithm": "boosting"},
        {"algorithm": "empirical_mean", "task": "survival"},
        {"algorithm": "recursive_partitioning_tree", "hyperparameters": {"max_depth": -1}},
        {"algorithm": "gradient_boosted_trees", "hyperparameters": {"learning_rate": 0}},
        {"algorithm": "empirical_mean", "hyperparameters": {"n_knots": 3}},
    ],
)
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(ValueError):
        LearnerSpec(**kwargs)


def test_responses_outside_unit_interval_rejected():
    with pytest.raises(ValueError):
        fit_learner(LearnerSpec("empirical_mean"), np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        fit_learner(LearnerSpec("empirical_mean", "binary"), np.zeros((3, 1)), np.array([0.0, 0.5, 1.0]))


def test_spec_round_trips_through_dict():
    spec = LearnerSpec("gradient_boosted_trees", "binary", {"n_rounds": 20}, ScreenSpec(0.2, 3))
    assert LearnerSpec.from_dict(spec.to_dict()) == spec
