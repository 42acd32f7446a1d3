"""TMLE, plug-in G-computation and unadjusted estimators of the adjusted
rate ratio and rate difference, with influence-curve inference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from scipy.special import expit, logit

from maskroadmap.learners import LearnerSpec, ScreenSpec, default_library
from maskroadmap.super_learner import SuperLearnerFit, sl_fit, sl_predict

log = logging.getLogger(__name__)

EXPOSURE = "A"
Z95 = 1.959963984540054
QBAR_CLIP = 1e-6


class EstimationError(RuntimeError):
    pass


class FluctuationError(EstimationError):
    def __init__(self, message: str, trace: list[dict[str, float]]):
        super().__init__(message)
        self.trace = trace


@dataclass
class SLConfig:
    """Super Learner settings for one nuisance regression.

    `stratify_folds` balances folds on the exposure. `stratify_by_exposure`
    (outcome model only) fits a separate ensemble within each exposure arm on
    `W` alone instead of one ensemble on ``(A, W)``.
    """

    library: list[LearnerSpec]
    K: int = 10
    loss: str = "squared_error"
    stratify_folds: bool = False
    stratify_by_exposure: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "library": [spec.to_dict() for spec in self.library],
            "K": self.K,
            "loss": self.loss,
            "stratify_folds": self.stratify_folds,
            "stratify_by_exposure": self.stratify_by_exposure,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any], task: str) -> "SLConfig":
        d = dict(d)
        lib = []
        for item in d.pop("library"):
            item = {"algorithm": item} if isinstance(item, str) else dict(item)
            item.setdefault("task", task)
            lib.append(LearnerSpec.from_dict(item))
        return cls(library=lib, **d)


def default_q_config(screen: ScreenSpec | None = ScreenSpec(), K: int = 10) -> SLConfig:
    return SLConfig(default_library("regression", screen), K=K, loss="squared_error")


def default_g_config(screen: ScreenSpec | None = ScreenSpec(), K: int = 10) -> SLConfig:
    return SLConfig(default_library("binary", screen), K=K, loss="log_loss", stratify_folds=True)


def mean_only_config(task: str, K: int = 10, **kw) -> SLConfig:
    loss = "log_loss" if task == "binary" else "squared_error"
    return SLConfig([LearnerSpec("empirical_mean", task)], K=K, loss=loss, **kw)


def bound_outcome(Y) -> tuple[np.ndarray, tuple[float, float]]:
    """Map `Y` affinely onto ``[0, 1]`` using its sample range."""
    Y = np.asarray(Y, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise ValueError("outcome contains non-finite values")
    lo, hi = float(Y.min()), float(Y.max())
    if not hi > lo:
        raise ValueError("outcome is constant; it cannot be mapped onto [0, 1]")
    return (Y - lo) / (hi - lo), (lo, hi)


def unbound_outcome(Y_star, bounds: tuple[float, float]) -> np.ndarray:
    lo, hi = bounds
    return np.asarray(Y_star, dtype=float) * (hi - lo) + lo


@dataclass
class NuisanceFits:
    Qbar0: np.ndarray
    Qbar1: np.ndarray
    QbarA: np.ndarray
    g1: np.ndarray
    g1_raw: np.ndarray
    outcome_bounds: tuple[float, float]
    gbound: float
    positivity_alarm: bool = False
    q_fits: list[SuperLearnerFit] = field(default_factory=list)
    g_fit: SuperLearnerFit | None = None


def _unpack(data) -> tuple[pd.DataFrame, np.ndarray, np.ndarray]:
    W = data.W if isinstance(data.W, pd.DataFrame) else pd.DataFrame(np.asarray(data.W, float))
    W = W.reset_index(drop=True)
    A = np.asarray(data.A, dtype=float)
    Y = np.asarray(data.Y, dtype=float)
    if not (len(W) == A.size == Y.size):
        raise ValueError("W, A and Y must have the same number of rows")
    if not np.all((A == 0) | (A == 1)):
        raise ValueError("exposure must be binary")
    if A.sum() == 0 or A.sum() == A.size:
        raise EstimationError("positivity: one exposure arm is empty")
    if EXPOSURE in W.columns:
        raise ValueError(f"covariates may not use the reserved column name {EXPOSURE!r}")
    return W, A, Y


def fit_outcome_model(W, A, Y_star, config: SLConfig, seed: int = 0):
    """Fit E(Y*|A, W); returns ``(Qbar0, Qbar1, QbarA, fits)``."""
    if config.stratify_by_exposure:
        preds, fits = {}, []
        for a in (0, 1):
            arm = A == a
            fit = sl_fit(config.library, W.loc[arm], Y_star[arm], config.K, seed, config.loss)
            preds[a] = sl_predict(fit, W)
            fits.append(fit)
        Q0, Q1 = preds[0], preds[1]
    else:
        X = pd.concat([pd.Series(A, name=EXPOSURE), W], axis=1)
        strata = A if config.stratify_folds else None
        fit = sl_fit(config.library, X, Y_star, config.K, seed, config.loss, strata, always_keep=(EXPOSURE,))
        fits = [fit]
        Q0 = sl_predict(fit, X.assign(**{EXPOSURE: 0.0}))
        Q1 = sl_predict(fit, X.assign(**{EXPOSURE: 1.0}))
    QA = np.where(A == 1, Q1, Q0)
    return Q0, Q1, QA, fits


def fit_nuisance(data, q_config: SLConfig, g_config: SLConfig, gbound: float = 0.01, seed: int = 0) -> NuisanceFits:
    """Fit the outcome regression and the propensity score by Super Learner."""
    if not 0.0 <= gbound < 0.5:
        raise ValueError("gbound must lie in [0, 0.5)")
    W, A, Y = _unpack(data)
    Y_star, bounds = bound_outcome(Y)
    Q0, Q1, QA, q_fits = fit_outcome_model(W, A, Y_star, q_config, seed)
    strata = A if g_config.stratify_folds else None
    g_fit = sl_fit(g_config.library, W, A, g_config.K, seed, g_config.loss, strata)
    g1_raw = sl_predict(g_fit, W)
    alarm = bool(np.any((g1_raw <= 0.01) | (g1_raw >= 0.99)))
    if alarm:
        log.warning(
            "positivity alarm: estimated propensities span [%.4f, %.4f] before truncation",
            g1_raw.min(),
            g1_raw.max(),
        )
    g1 = np.clip(g1_raw, gbound, 1.0 - gbound)
    return NuisanceFits(Q0, Q1, QA, g1, g1_raw, bounds, gbound, alarm, q_fits, g_fit)


@dataclass
class Fluctuation:
    eps0: float
    eps1: float
    n_iter: int
    Qstar0: np.ndarray
    Qstar1: np.ndarray
    QstarA: np.ndarray
    score: tuple[float, float]
    trace: list[dict[str, float]]


def clever_covariates(A, g1) -> tuple[np.ndarray, np.ndarray]:
    A = np.asarray(A, dtype=float)
    return (1.0 - A) / (1.0 - g1), A / g1


def _loglik(y, eta) -> float:
    # Bernoulli quasi-log-likelihood for y in [0, 1]
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fluctuate(nuisance: NuisanceFits, A, Y_star, max_iter: int = 100, tol: float = 1e-10) -> Fluctuation:
    """Logistic fluctuation of the initial outcome fit along the clever covariates.

    Solves for ``(eps0, eps1)`` in the no-intercept logistic regression of
    `Y_star` on ``(H0, H1)`` with offset ``logit(QbarA)`` by Newton-Raphson
    with step halving. Stops once every mean score is below `tol`.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(Y_star, dtype=float)
    n = y.size
    H0, H1 = clever_covariates(A, nuisance.g1)
    H = np.column_stack([H0, H1])
    q0 = logit(np.clip(nuisance.Qbar0, QBAR_CLIP, 1 - QBAR_CLIP))
    q1 = logit(np.clip(nuisance.Qbar1, QBAR_CLIP, 1 - QBAR_CLIP))
    offset = np.where(A == 1, q1, q0)
    eps = np.zeros(2)
    trace = []
    eta = offset.copy()
    ll = _loglik(y, eta)
    for it in range(max_iter + 1):
        p = expit(eta)
        score = H.T @ (y - p) / n
        trace.append({"iter": it, "eps0": eps[0], "eps1": eps[1], "loglik": ll, "max_score": float(np.max(np.abs(score)))})
        if np.max(np.abs(score)) < tol:
            break
        if it == max_iter:
            raise FluctuationError(f"fluctuation did not converge in {max_iter} Newton steps", trace)
        info = (H * (p * (1 - p))[:, None]).T @ H / n
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, score, rcond=None)[0]
        for _ in range(60):
            cand = eps + step
            eta_c = offset + H @ cand
            ll_c = _loglik(y, eta_c)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            step = step / 2.0
        eps, eta, ll = cand, eta_c, ll_c
    g1 = nuisance.g1
    Qs0 = expit(q0 + eps[0] / (1.0 - g1))
    Qs1 = expit(q1 + eps[1] / g1)
    QsA = np.where(A == 1, Qs1, Qs0)
    final_score = (float(np.mean(H0 * (y - QsA))), float(np.mean(H1 * (y - QsA))))
    return Fluctuation(float(eps[0]), float(eps[1]), len(trace) - 1, Qs0, Qs1, QsA, final_score, trace)


@dataclass
class EffectEstimate:
    """Point estimates and influence-curve inference for one analysis."""

    estimator: str
    psi1: float
    psi0: float
    rr: float
    rd: float
    se_psi1: float
    se_psi0: float
    se_log_rr: float
    se_rd: float
    ci_psi1: tuple[float, float]
    ci_psi0: tuple[float, float]
    ci_rr: tuple[float, float]
    ci_rd: tuple[float, float]
    ic1: np.ndarray
    ic0: np.ndarray
    robust: bool = True
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.ic1.size)

    def to_record(self) -> dict[str, Any]:
        keys = ("estimator", "psi1", "psi0", "rr", "rd", "se_psi1", "se_psi0", "se_log_rr", "se_rd")
        rec: dict[str, Any] = {k: getattr(self, k) for k in keys}
        for k in ("ci_psi1", "ci_psi0", "ci_rr", "ci_rd"):
            rec[k] = list(getattr(self, k))
        rec["robust"] = self.robust
        rec["n"] = self.n
        rec.update(self.details)
        return rec


def influence_inference(psi1, psi0, ic1, ic0, estimator: str, robust: bool = True, details=None) -> EffectEstimate:
    """Standard errors and 95% Wald intervals from per-unit influence curves.

    The ratio is handled on the log scale by the delta method.
    """
    if psi0 <= 0 or psi1 <= 0:
        raise EstimationError(f"expected outcomes must be positive for a ratio (psi1={psi1}, psi0={psi0})")
    ic1 = np.asarray(ic1, dtype=float)
    ic0 = np.asarray(ic0, dtype=float)
    n = ic1.size
    root_n = np.sqrt(n)
    se1 = float(np.std(ic1, ddof=1) / root_n)
    se0 = float(np.std(ic0, ddof=1) / root_n)
    rd = psi1 - psi0
    rr = psi1 / psi0
    se_rd = float(np.std(ic1 - ic0, ddof=1) / root_n)
    se_log_rr = float(np.std(ic1 / psi1 - ic0 / psi0, ddof=1) / root_n)
    log_rr = np.log(rr)
    return EffectEstimate(
        estimator=estimator,
        psi1=float(psi1),
        psi0=float(psi0),
        rr=float(rr),
        rd=float(rd),
        se_psi1=se1,
        se_psi0=se0,
        se_log_rr=se_log_rr,
        se_rd=se_rd,
        ci_psi1=(psi1 - Z95 * se1, psi1 + Z95 * se1),
        ci_psi0=(psi0 - Z95 * se0, psi0 + Z95 * se0),
        ci_rr=(float(np.exp(log_rr - Z95 * se_log_rr)), float(np.exp(log_rr + Z95 * se_log_rr))),
        ci_rd=(rd - Z95 * se_rd, rd + Z95 * se_rd),
        ic1=ic1,
        ic0=ic0,
        robust=robust,
        details=dict(details or {}),
    )


def _plugin_ic(A, Y, g1, QA, Q1, Q0, psi1, psi0):
    H0, H1 = clever_covariates(A, g1)
    ic1 = H1 * (Y - QA) + Q1 - psi1
    ic0 = H0 * (Y - QA) + Q0 - psi0
    return ic1, ic0


def _nuisance_details(nuisance: NuisanceFits) -> dict[str, Any]:
    details: dict[str, Any] = {
        "bounds": list(nuisance.outcome_bounds),
        "gbound": nuisance.gbound,
        "positivity_alarm": nuisance.positivity_alarm,
        "propensity": propensity_summary(nuisance).to_record(),
    }
    if nuisance.q_fits:
        details["q_library"] = nuisance.q_fits[0].learner_names
        details["q_weights"] = [fit.weights.tolist() for fit in nuisance.q_fits]
    if nuisance.g_fit is not None:
        details["g_library"] = nuisance.g_fit.learner_names
        details["g_weights"] = nuisance.g_fit.weights.tolist()
    return details


def tmle_estimate(data, q_config: SLConfig | None = None, g_config: SLConfig | None = None, gbound: float = 0.01, seed: int = 0, nuisance: NuisanceFits | None = None) -> EffectEstimate:
    """Targeted maximum likelihood estimate of the adjusted RR and RD."""
    W, A, Y = _unpack(data)
    if nuisance is None:
        nuisance = fit_nuisance(data, q_config or default_q_config(), g_config or default_g_config(), gbound, seed)
    Y_star, bounds = bound_outcome(Y)
    fl = fluctuate(nuisance, A, Y_star)
    Q1 = unbound_outcome(fl.Qstar1, bounds)
    Q0 = unbound_outcome(fl.Qstar0, bounds)
    QA = unbound_outcome(fl.QstarA, bounds)
    psi1, psi0 = float(np.mean(Q1)), float(np.mean(Q0))
    ic1, ic0 = _plugin_ic(A, Y, nuisance.g1, QA, Q1, Q0, psi1, psi0)
    details = _nuisance_details(nuisance)
    details.update({"eps": [fl.eps0, fl.eps1], "fluctuation_iterations": fl.n_iter, "score": list(fl.score), "seed": seed})
    return influence_inference(psi1, psi0, ic1, ic0, "tmle", details=details)


def gcomp_estimate(data, q_config: SLConfig | None = None, g_config: SLConfig | None = None, gbound: float = 0.01, seed: int = 0, nuisance: NuisanceFits | None = None) -> EffectEstimate:
    """Plug-in G-computation from the untargeted outcome regression.

    Its intervals reuse the influence-curve formula at the untargeted fit and
    are flagged as not robust to outcome-model misspecification.
    """
    W, A, Y = _unpack(data)
    if nuisance is None:
        nuisance = fit_nuisance(data, q_config or default_q_config(), g_config or default_g_config(), gbound, seed)
    bounds = nuisance.outcome_bounds
    Q1 = unbound_outcome(nuisance.Qbar1, bounds)
    Q0 = unbound_outcome(nuisance.Qbar0, bounds)
    QA = unbound_outcome(nuisance.QbarA, bounds)
    psi1, psi0 = float(np.mean(Q1)), float(np.mean(Q0))
    ic1, ic0 = _plugin_ic(A, Y, nuisance.g1, QA, Q1, Q0, psi1, psi0)
    details = _nuisance_details(nuisance)
    details["seed"] = seed
    return influence_inference(psi1, psi0, ic1, ic0, "gcomp", robust=False, details=details)


def unadjusted_estimate(data) -> EffectEstimate:
    """Contrast of raw arm means with two-sample influence-curve inference."""
    A = np.asarray(data.A, dtype=float)
    Y = np.asarray(data.Y, dtype=float)
    if A.sum() == 0 or A.sum() == A.size:
        raise EstimationError("unadjusted contrast needs both exposure arms")
    p = A.mean()
    m1, m0 = Y[A == 1].mean(), Y[A == 0].mean()
    g1 = np.full(A.size, p)
    Q1 = np.full(A.size, m1)
    Q0 = np.full(A.size, m0)
    QA = np.where(A == 1, m1, m0)
    ic1, ic0 = _plugin_ic(A, Y, g1, QA, Q1, Q0, m1, m0)
    return influence_inference(m1, m0, ic1, ic0, "unadjusted")


@dataclass(frozen=True)
class PropensitySummary:
    min: float
    q1: float
    median: float
    mean: float
    q3: float
    max: float

    LABELS = ("Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max.")

    def values(self) -> tuple[float, ...]:
        return (self.min, self.q1, self.median, self.mean, self.q3, self.max)

    def to_record(self) -> dict[str, float]:
        return dict(zip(self.LABELS, self.values()))


def propensity_summary(nuisance_or_g1) -> PropensitySummary:
    g1 = nuisance_or_g1.g1 if isinstance(nuisance_or_g1, NuisanceFits) else nuisance_or_g1
    g1 = np.asarray(g1, dtype=float)
    q = np.quantile(g1, [0.0, 0.25, 0.5, 0.75, 1.0])
    return PropensitySummary(float(q[0]), float(q[1]), float(q[2]), float(g1.mean()), float(q[3]), float(q[4]))
