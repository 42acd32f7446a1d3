import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskroadmap.learners import LearnerSpec, default_library
from maskroadmap.super_learner import (
    cv_predictions,
    make_folds,
    meta_objective,
    meta_weights,
    project_simplex,
    sl_fit,
    sl_predict,
)

FIXTURE = Path(__file__).parent / "data" / "meta_weights_fixture.json"


def load_fixture():
    d = json.loads(FIXTURE.read_text())
    return np.array(d["Z"]), np.array(d["y"])


def grid_oracle(Z, y, loss, step=1e-4):
    """Best two-learner weights over an evenly spaced simplex grid."""
    w1 = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    pred = np.outer(w1, Z[:, 0]) + np.outer(1 - w1, Z[:, 1])
    if loss == "squared_error":
        risk = np.mean((pred - y) ** 2, axis=1)
    else:
        p = np.clip(pred, 1e-6, 1 - 1e-6)
        risk = -np.mean(y * np.log(p) + (1 - y) * np.log1p(-p), axis=1)
    k = int(np.argmin(risk))
    return np.array([w1[k], 1 - w1[k]])


# ---------------------------------------------------------------- folds


def test_folds_equal_sizes():
    folds = make_folds(50, 10, seed=3)
    assert np.all(np.bincount(folds.fold_id) == 5)


def test_stratified_folds_balance_exposure():
    A = np.repeat([0, 1], 25)
    folds = make_folds(50, 10, strata=A, seed=3)
    assert np.all(np.bincount(folds.fold_id) == 5)
    treated = np.bincount(folds.fold_id[A == 1], minlength=10)
    assert set(treated) <= {2, 3}


def test_leave_one_out():
    folds = make_folds(7, 7, seed=0)
    assert sorted(folds.fold_id) == list(range(7))


def test_small_stratum_warns():
    strata = np.array([0] * 18 + [1] * 2)
    assert make_folds(20, 5, strata=strata).warnings


@pytest.mark.parametrize("n,K", [(3, 5), (10, 1)])
def test_invalid_fold_requests(n, K):
    with pytest.raises(ValueError):
        make_folds(n, K)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 80), K=st.integers(2, 10), seed=st.integers(0, 2**31 - 1))
def test_fold_sizes_differ_by_at_most_one(n, K, seed):
    if K > n:
        return
    sizes = np.bincount(make_folds(n, K, seed=seed).fold_id, minlength=K)
    assert sizes.max() - sizes.min() <= 1


# ---------------------------------------------------------------- cross-validated predictions


def test_mean_learner_z_is_out_of_fold_mean():
    rng = np.random.default_rng(0)
    y = rng.random(20)
    X = pd.DataFrame({"x": rng.random(20)})
    folds = make_folds(20, 4, seed=1)
    Z, kept, dropped = cv_predictions([LearnerSpec("empirical_mean")], X, y, folds)
    for i in range(20):
        assert Z[i, 0] == pytest.approx(y[folds.fold_id != folds.fold_id[i]].mean(), abs=1e-15)
    assert kept == [0] and dropped == []


def test_duplicated_learner_gives_identical_columns():
    rng = np.random.default_rng(1)
    X = pd.DataFrame(rng.normal(size=(30, 2)), columns=["a", "b"])
    y = np.clip(0.5 + 0.2 * X["a"].to_numpy(), 0, 1)
    spec = LearnerSpec("recursive_partitioning_tree")
    Z, _, _ = cv_predictions([spec, spec], X, y, make_folds(30, 5, seed=2))
    assert Z[:, 0].tobytes() == Z[:, 1].tobytes()


def test_two_fold_refit_oracle():
    x = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
    y = np.array([0.10, 0.25, 0.30, 0.55, 0.60, 0.90])
    X = pd.DataFrame({"x": x})
    folds = make_folds(6, 2, seed=4)
    # the spline learner on <= 3 distinct values is an unpenalized line
    library = [LearnerSpec("empirical_mean"), LearnerSpec("additive_spline_regression")]
    Z, _, _ = cv_predictions(library, X, y, folds)
    for k in range(2):
        tr, te = folds.fold_id != k, folds.fold_id == k
        np.testing.assert_allclose(Z[te, 0], y[tr].mean(), atol=1e-15)
        slope, intercept = np.polyfit(x[tr], y[tr], 1)
        np.testing.assert_allclose(Z[te, 1], np.clip(intercept + slope * x[te], 0, 1), atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(0, 4))
def test_no_leakage_from_held_out_fold(seed, k):
    rng = np.random.default_rng(seed)
    X = pd.DataFrame(rng.normal(size=(40, 3)), columns=["a", "b", "c"])
    y = np.clip(0.5 + 0.2 * X["a"].to_numpy() + 0.1 * rng.normal(size=40), 0, 1)
    folds = make_folds(40, 5, seed=seed)
    lib = [LearnerSpec("empirical_mean"), LearnerSpec("recursive_partitioning_tree"), LearnerSpec("additive_spline_regression")]
    Z1, _, _ = cv_predictions(lib, X, y, folds)
    y2 = y.copy()
    idx = np.flatnonzero(folds.fold_id == k)
    y2[idx] = rng.permutation(y2[idx])[::-1]
    Z2, _, _ = cv_predictions(lib, X, y2, folds)
    np.testing.assert_array_equal(Z1[idx], Z2[idx])


def test_failing_learner_is_dropped(monkeypatch):
    import maskroadmap.super_learner as sl

    real = sl.fit_learner

    def flaky(spec, X, y, **kw):
        if spec.algorithm == "recursive_partitioning_tree":
            raise np.linalg.LinAlgError("singular")
        return real(spec, X, y, **kw)

    monkeypatch.setattr(sl, "fit_learner", flaky)
    X = pd.DataFrame({"a": np.linspace(0, 1, 20)})
    y = np.linspace(0, 1, 20)
    fit = sl_fit([LearnerSpec("empirical_mean"), LearnerSpec("recursive_partitioning_tree")], X, y, K=4)
    assert fit.learner_names == ["mean"]
    assert fit.dropped and fit.dropped[0][0] == 1


# ---------------------------------------------------------------- meta weights


@pytest.mark.parametrize("loss", ["squared_error", "log_loss"])
def test_meta_weights_match_grid_oracle(loss):
    Z, y = load_fixture()
    w = meta_weights(Z, y, loss)
    np.testing.assert_allclose(w, grid_oracle(Z, y, loss), atol=1e-3)


def test_single_learner_weight_is_one():
    np.testing.assert_array_equal(meta_weights(np.random.default_rng(0).random((6, 1)), np.linspace(0, 1, 6)), [1.0])


def test_perfect_learner_reaches_zero_objective():
    rng = np.random.default_rng(2)
    y = rng.random(15)
    Z = np.column_stack([rng.random(15), y, rng.random(15)])
    w = meta_weights(Z, y)
    assert meta_objective(Z, y, w, "squared_error") < 1e-20


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    n=st.integers(3, 40),
    L=st.integers(2, 6),
    loss=st.sampled_from(["squared_error", "log_loss"]),
)
def test_weights_on_simplex_and_beat_every_vertex(seed, n, L, loss):
    rng = np.random.default_rng(seed)
    Z = rng.random((n, L))
    y = (rng.random(n) < 0.5).astype(float) if loss == "log_loss" else rng.random(n)
    w = meta_weights(Z, y, loss)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1) <= 1e-12
    f = meta_objective(Z, y, w, loss)
    assert all(f <= meta_objective(Z, y, e, loss) + 1e-12 for e in np.eye(L))


@settings(max_examples=40, deadline=None)
@given(v=st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_simplex_projection(v):
    v = np.array(v)
    p = project_simplex(v)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12
    # first-order optimality: no simplex vertex is closer along the residual direction
    for e in np.eye(v.size):
        assert (v - p) @ (e - p) <= 1e-9


# ---------------------------------------------------------------- full fit


def test_mean_only_super_learner_predicts_full_sample_mean():
    rng = np.random.default_rng(5)
    X = pd.DataFrame({"a": rng.normal(size=25)})
    y = rng.random(25)
    fit = sl_fit([LearnerSpec("empirical_mean")], X, y, K=5)
    np.testing.assert_allclose(sl_predict(fit, X.iloc[:7]), y.mean(), atol=1e-15)


def test_weights_concentrate_on_perfect_learner():
    x = np.linspace(0, 1, 30)
    X = pd.DataFrame({"x": x})
    y = x.copy()
    library = [LearnerSpec("empirical_mean"), LearnerSpec("additive_spline_regression")]
    fit = sl_fit(library, X, y, K=5)
    assert fit.weights[1] == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(sl_predict(fit, X), y, atol=1e-8)


@pytest.mark.parametrize("task,loss", [("regression", "squared_error"), ("binary", "log_loss")])
def test_combined_cv_risk_not_worse_than_best_learner(task, loss):
    rng = np.random.default_rng(6)
    X = pd.DataFrame(rng.normal(size=(60, 4)), columns=list("abcd"))
    if task == "binary":
        y = (rng.random(60) < 1 / (1 + np.exp(-X["a"].to_numpy()))).astype(float)
    else:
        y = np.clip(0.5 + 0.2 * X["a"] + 0.1 * X["b"] ** 2 + 0.05 * rng.normal(size=60), 0, 1).to_numpy()
    fit = sl_fit(default_library(task), X, y, K=5, seed=1, loss=loss)
    assert fit.combined_risk <= fit.cv_risk.min() + 1e-12
    assert abs(fit.weights.sum() - 1) <= 1e-12


def test_sl_fit_deterministic():
    rng = np.random.default_rng(7)
    X = pd.DataFrame(rng.normal(size=(40, 3)), columns=list("abc"))
    y = np.clip(0.5 + 0.2 * X["a"].to_numpy(), 0, 1)
    p1 = sl_predict(sl_fit(default_library("regression"), X, y, K=5, seed=9), X)
    p2 = sl_predict(sl_fit(default_library("regression"), X, y, K=5, seed=9), X)
    assert p1.tobytes() == p2.tobytes()


def test_single_learner_skips_cv_unless_asked():
    X = pd.DataFrame({"a": np.linspace(0, 1, 20)})
    y = np.linspace(0, 1, 20) ** 2
    lib = [LearnerSpec("additive_spline_regression")]
    quick = sl_fit(lib, X, y, K=4)
    full = sl_fit(lib, X, y, K=4, cv_single=True)
    assert np.isnan(quick.cv_risk).all() and np.isfinite(full.cv_risk).all()
    np.testing.assert_array_equal(sl_predict(quick, X), sl_predict(full, X))
