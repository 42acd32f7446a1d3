"""Simulated structural causal models with known counterfactual truth and
Monte Carlo experiments on the estimators (bias, double robustness, coverage).

Every model has the form

    W  ~ independent covariate laws
    U  ~ Uniform(-1, 1)                     (optional latent confounder)
    A  ~ Bernoulli(g(W, U))
    Y_a = 1 + (base(W) + a * effect(W) + c_Y * U) * V,   V ~ Gamma(k, 1/k)

so that E[V] = 1, every outcome is at least 1, and ``Y = Y_A``.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from maskroadmap.estimators import (
    Z95,
    SLConfig,
    fit_nuisance,
    gcomp_estimate,
    mean_only_config,
    tmle_estimate,
    unadjusted_estimate,
)
from maskroadmap.learners import LearnerSpec

log = logging.getLogger(__name__)

LAWS = ("normal", "uniform", "bernoulli")
TRANSFORMS = ("linear", "square", "tanh", "gauss", "sin")
SCENARIOS = ("both_correct", "Q_misspecified", "g_misspecified", "both_misspecified")
ESTIMATORS = ("tmle", "gcomp", "unadjusted")
MAX_FAILURE_RATE = 0.05

_TRANSFORM_FN = {
    "linear": lambda x: x,
    "square": np.square,
    "tanh": np.tanh,
    "gauss": lambda x: np.exp(-np.square(x)),
    "sin": np.sin,
}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CovariateLaw:
    """Marginal law of one covariate: ``normal(mean, sd)``, ``uniform(low, high)`` or ``bernoulli(p)``."""

    name: str
    law: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValueError(f"unknown law {self.law!r}; choose from {LAWS}")
        need = {"normal": 2, "uniform": 2, "bernoulli": 1}[self.law]
        if len(self.params) != need:
            raise ValueError(f"{self.law} takes {need} parameters")
        if self.law == "normal" and self.params[1] <= 0:
            raise ValueError("normal sd must be positive")
        if self.law == "uniform" and not self.params[0] < self.params[1]:
            raise ValueError("uniform needs low < high")
        if self.law == "bernoulli" and not 0 < self.params[0] < 1:
            raise ValueError("bernoulli p must lie in (0, 1)")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.law == "normal":
            return rng.normal(self.params[0], self.params[1], n)
        if self.law == "uniform":
            return rng.uniform(self.params[0], self.params[1], n)
        return (rng.random(n) < self.params[0]).astype(float)

    def expectation(self, transform: str) -> float | None:
        """E[transform(X)] in closed form, or None when not available."""
        if self.law == "bernoulli":
            p = self.params[0]
            return p * float(_TRANSFORM_FN[transform](np.array(1.0))) + (1 - p) * float(_TRANSFORM_FN[transform](np.array(0.0)))
        if self.law == "normal":
            mu, sd = self.params
            s2 = sd * sd
            if transform == "linear":
                return mu
            if transform == "square":
                return s2 + mu * mu
            if transform == "gauss":
                return math.exp(-mu * mu / (1 + 2 * s2)) / math.sqrt(1 + 2 * s2)
            if transform == "sin":
                return math.exp(-s2 / 2) * math.sin(mu)
            return None
        lo, hi = self.params
        width = hi - lo
        if transform == "linear":
            return (lo + hi) / 2
        if transform == "square":
            return (hi**3 - lo**3) / (3 * width)
        if transform == "sin":
            return (math.cos(lo) - math.cos(hi)) / width
        if transform == "tanh":
            return (math.log(math.cosh(hi)) - math.log(math.cosh(lo))) / width
        if transform == "gauss":
            return math.sqrt(math.pi) / 2 * (math.erf(hi) - math.erf(lo)) / width
        return None


@dataclass(frozen=True)
class Term:
    column: str
    transform: str
    coef: float

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}; choose from {TRANSFORMS}")


@dataclass(frozen=True)
class AdditiveForm:
    """``intercept + sum(coef * transform(W[column]))``."""

    intercept: float = 0.0
    terms: tuple[Term, ...] = ()

    def evaluate(self, W: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        out = np.full(n, float(self.intercept))
        for t in self.terms:
            out += t.coef * _TRANSFORM_FN[t.transform](W[t.column])
        return out

    def expectation(self, laws: Mapping[str, CovariateLaw]) -> float | None:
        total = float(self.intercept)
        for t in self.terms:
            e = laws[t.column].expectation(t.transform)
            if e is None:
                return None
            total += t.coef * e
        return total


@dataclass(frozen=True)
class DgpSpec:
    """Structural equations of a simulated study.

    `exposure` is the logit of P(A=1 | W, U) unless `exposure_prob` fixes a
    constant probability (a randomized design). `latent_exposure` and
    `latent_outcome` are the coefficients of the shared latent confounder U;
    both zero means no unmeasured confounding.
    """

    name: str
    covariates: tuple[CovariateLaw, ...]
    exposure: AdditiveForm = AdditiveForm()
    exposure_prob: float | None = None
    base: AdditiveForm = AdditiveForm(1.0)
    effect: AdditiveForm = AdditiveForm()
    noise_shape: float = 4.0
    latent_exposure: float = 0.0
    latent_outcome: float = 0.0

    def __post_init__(self):
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be unique")
        for form in (self.exposure, self.base, self.effect):
            for t in form.terms:
                if t.column not in names:
                    raise ValueError(f"term refers to unknown covariate {t.column!r}")
        if self.exposure_prob is not None and not 0 < self.exposure_prob < 1:
            raise ValueError("exposure_prob must lie in (0, 1)")
        if self.noise_shape <= 0:
            raise ValueError("noise_shape must be positive")

    @property
    def dim(self) -> int:
        return len(self.covariates)

    @property
    def has_latent(self) -> bool:
        return self.latent_exposure != 0.0 or self.latent_outcome != 0.0

    @property
    def laws(self) -> dict[str, CovariateLaw]:
        return {c.name: c for c in self.covariates}

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DgpSpec":
        d = dict(d)

        def form(f):
            if f is None:
                return AdditiveForm()
            f = dict(f)
            return AdditiveForm(f.get("intercept", 0.0), tuple(Term(**t) for t in f.get("terms", ())))

        covs = tuple(CovariateLaw(c["name"], c["law"], tuple(c["params"])) for c in d.pop("covariates"))
        for key in ("exposure", "base", "effect"):
            if key in d:
                d[key] = form(d[key])
        return cls(covariates=covs, **d)

    def propensity(self, W: Mapping[str, np.ndarray], U: np.ndarray) -> np.ndarray:
        n = U.size
        if self.exposure_prob is not None:
            return np.full(n, self.exposure_prob)
        return expit(self.exposure.evaluate(W, n) + self.latent_exposure * U)

    def mean_shift(self, W: Mapping[str, np.ndarray], U: np.ndarray, a: int) -> np.ndarray:
        """``E[Y_a | W, U] - 1``."""
        n = U.size
        out = self.base.evaluate(W, n) + self.latent_outcome * U
        if a:
            out = out + self.effect.evaluate(W, n)
        return out


@dataclass
class SimData:
    """Observed data handed to the estimators."""

    W: pd.DataFrame
    A: np.ndarray
    Y: np.ndarray


def _draw(dgp: DgpSpec, rng: np.random.Generator, n: int):
    W = {c.name: c.sample(rng, n) for c in dgp.covariates}
    U = rng.uniform(-1.0, 1.0, n) if dgp.has_latent else np.zeros(n)
    return W, U


def generate(dgp: DgpSpec, n: int, seed) -> tuple[SimData, tuple[np.ndarray, np.ndarray]]:
    """Draw `n` units; returns the observed data and the counterfactual pair ``(Y1, Y0)``."""
    rng = np.random.default_rng(seed)
    W, U = _draw(dgp, rng, n)
    g = dgp.propensity(W, U)
    if not np.all((g > 0) & (g < 1)):
        raise SimulationError(f"{dgp.name}: exposure probability outside (0, 1)")
    A = (rng.random(n) < g).astype(float)
    V = rng.gamma(dgp.noise_shape, 1.0 / dgp.noise_shape, n)
    m1, m0 = dgp.mean_shift(W, U, 1), dgp.mean_shift(W, U, 0)
    if np.any(m1 < 0) or np.any(m0 < 0):
        raise SimulationError(f"{dgp.name}: outcome mean below 1; counterfactuals would leave the domain")
    Y1 = 1.0 + m1 * V
    Y0 = 1.0 + m0 * V
    Y = np.where(A == 1, Y1, Y0)
    return SimData(pd.DataFrame(W), A, Y), (Y1, Y0)


# ---------------------------------------------------------------- truth


@dataclass(frozen=True)
class SimTruth:
    psi1: float
    psi0: float
    crr: float
    crd: float
    method: str
    mc_draws: int = 0
    se_psi1: float = 0.0
    se_psi0: float = 0.0
    se_crd: float = 0.0
    se_crr: float = 0.0
    # observed-data functional; differs from the causal one under unmeasured confounding
    stat_psi1: float | None = None
    stat_psi0: float | None = None

    @property
    def stat_rr(self) -> float | None:
        return None if self.stat_psi1 is None else self.stat_psi1 / self.stat_psi0

    @property
    def stat_rd(self) -> float | None:
        return None if self.stat_psi1 is None else self.stat_psi1 - self.stat_psi0

    def target(self, parameter: str) -> float:
        """The value an estimator of the observed-data functional should recover."""
        if parameter == "rd":
            return self.crd if self.stat_psi1 is None else self.stat_rd
        if parameter == "rr":
            return self.crr if self.stat_psi1 is None else self.stat_rr
        raise ValueError(parameter)


def _latent_given_exposure(eta: np.ndarray, gamma: float, a: int, nodes: int = 48) -> np.ndarray:
    # E[U | A=a, W] for U ~ Uniform(-1, 1) and P(A=1|W,U) = expit(eta + gamma U)
    u, w = np.polynomial.legendre.leggauss(nodes)
    p = expit(eta[:, None] + gamma * u[None, :])
    lik = p if a else 1.0 - p
    return (lik * u) @ w / (lik @ w)


def true_parameters(dgp: DgpSpec, mc_draws: int = 10_000_000, seed: int = 20200901, method: str = "auto", chunk: int = 1_000_000) -> SimTruth:
    """Counterfactual means E[Y_1], E[Y_0] and their ratio and difference.

    Closed form whenever every term has a known expectation under its
    covariate law (``method="auto"``); otherwise Monte Carlo over
    ``mc_draws`` covariate draws, averaging the conditional means so only the
    covariate variability enters the reported standard errors. Under
    unmeasured confounding the observed-data functional
    ``E_W E(Y | A=a, W)`` is also computed.
    """
    if method not in ("auto", "closed_form", "monte_carlo"):
        raise ValueError(method)
    laws = dgp.laws
    eb, ee = dgp.base.expectation(laws), dgp.effect.expectation(laws)
    closed = eb is not None and ee is not None and not dgp.has_latent
    if method == "closed_form" and not closed:
        raise ValueError(f"{dgp.name}: no closed form available")
    if closed and method != "monte_carlo":
        psi0 = 1.0 + eb
        psi1 = psi0 + ee
        return SimTruth(psi1, psi0, psi1 / psi0, psi1 - psi0, "closed_form")
    rng = np.random.default_rng(seed)
    sums = np.zeros(3)  # m1, m0, m1 - m0
    sq = np.zeros(3)
    cross = 0.0
    st1 = st0 = 0.0
    done = 0
    while done < mc_draws:
        m = min(chunk, mc_draws - done)
        W, U = _draw(dgp, rng, m)
        m1, m0 = dgp.mean_shift(W, U, 1), dgp.mean_shift(W, U, 0)
        sums += [m1.sum(), m0.sum(), (m1 - m0).sum()]
        sq += [(m1 * m1).sum(), (m0 * m0).sum(), ((m1 - m0) ** 2).sum()]
        cross += (m1 * m0).sum()
        if dgp.has_latent and dgp.exposure_prob is None:
            eta = dgp.exposure.evaluate(W, m)
            base = dgp.base.evaluate(W, m)
            eff = dgp.effect.evaluate(W, m)
            c = dgp.latent_outcome
            st1 += (base + eff + c * _latent_given_exposure(eta, dgp.latent_exposure, 1)).sum()
            st0 += (base + c * _latent_given_exposure(eta, dgp.latent_exposure, 0)).sum()
        done += m
    N = float(mc_draws)
    mean = sums / N
    var = sq / N - mean**2
    cov10 = cross / N - mean[0] * mean[1]
    se = np.sqrt(np.maximum(var, 0.0) / N)
    psi1, psi0 = 1.0 + mean[0], 1.0 + mean[1]
    rr = psi1 / psi0
    # delta method on the ratio of means
    var_rr = (var[0] / psi0**2 - 2 * rr * cov10 / psi0**2 + rr**2 * var[1] / psi0**2) / N
    stat1 = stat0 = None
    if dgp.has_latent:
        if dgp.exposure_prob is None:
            stat1, stat0 = 1.0 + st1 / N, 1.0 + st0 / N
        else:
            stat1, stat0 = psi1, psi0
    return SimTruth(
        psi1, psi0, rr, psi1 - psi0, "monte_carlo", mc_draws,
        float(se[0]), float(se[1]), float(se[2]), float(math.sqrt(max(var_rr, 0.0))),
        stat1, stat0,
    )  # fmt: skip


# ---------------------------------------------------------------- shipped models


def randomized_linear() -> DgpSpec:
    """Constant exposure probability and a linear outcome; the RD is 0.3 exactly."""
    covs = (CovariateLaw("W1", "normal", (0.0, 1.0)), CovariateLaw("W2", "bernoulli", (0.4,)))
    return DgpSpec(
        "randomized_linear",
        covs,
        exposure_prob=0.5,
        base=AdditiveForm(2.0, (Term("W1", "linear", 0.3), Term("W2", "linear", 0.5))),
        effect=AdditiveForm(0.3),
    )


def _confounded_covariates() -> tuple[CovariateLaw, ...]:
    return (
        CovariateLaw("W1", "normal", (0.0, 1.0)),
        CovariateLaw("W2", "uniform", (-1.0, 1.0)),
        CovariateLaw("W3", "bernoulli", (0.5,)),
        CovariateLaw("W4", "normal", (0.0, 1.0)),
    )


def _confounded_exposure() -> AdditiveForm:
    return AdditiveForm(-0.2, (Term("W1", "linear", 0.8), Term("W2", "linear", -0.6), Term("W3", "linear", 0.5)))


def _confounded_outcome() -> tuple[AdditiveForm, AdditiveForm]:
    # bounded terms keep the outcome mean above 1 for every covariate draw
    base = AdditiveForm(
        1.5,
        (
            Term("W1", "tanh", 0.5),
            Term("W2", "square", 0.3),
            Term("W3", "linear", 0.3),
            Term("W4", "tanh", 0.1),
        ),
    )
    effect = AdditiveForm(-0.2, (Term("W1", "gauss", -0.1), Term("W3", "linear", -0.05)))
    return base, effect


def confounded() -> DgpSpec:
    """Logistic exposure and a nonlinear outcome sharing the confounders W1, W2, W3.

    W1 raises both the exposure probability and the outcome, so the raw
    contrast overstates the difference (biased upward, toward zero here).
    """
    base, effect = _confounded_outcome()
    return DgpSpec("confounded", _confounded_covariates(), exposure=_confounded_exposure(), base=base, effect=effect)


def unmeasured() -> DgpSpec:
    """The confounded model plus a latent U driving both exposure and outcome."""
    base, effect = _confounded_outcome()
    return DgpSpec(
        "unmeasured",
        _confounded_covariates(),
        exposure=_confounded_exposure(),
        base=base,
        effect=effect,
        latent_exposure=1.5,
        latent_outcome=0.4,
    )


def null_effect() -> DgpSpec:
    """The confounded model with no exposure effect."""
    base, _ = _confounded_outcome()
    return DgpSpec("null_effect", _confounded_covariates(), exposure=_confounded_exposure(), base=base)


DGPS = {"randomized_linear": randomized_linear, "confounded": confounded, "unmeasured": unmeasured, "null_effect": null_effect}


def get_dgp(name: str) -> DgpSpec:
    try:
        return DGPS[name]()
    except KeyError:
        raise ValueError(f"unknown DGP {name!r}; choose from {sorted(DGPS)}") from None


# ---------------------------------------------------------------- experiments


def correct_q_config(K: int = 5) -> SLConfig:
    """Additive spline within each exposure arm; correct for the shipped models."""
    return SLConfig([LearnerSpec("additive_spline_regression", "regression")], K=K, stratify_by_exposure=True)


def correct_g_config(K: int = 5) -> SLConfig:
    """Additive logistic spline; correct for the shipped logistic exposures."""
    return SLConfig([LearnerSpec("additive_spline_regression", "binary")], K=K, loss="log_loss", stratify_folds=True)


def scenario_configs(scenario: str, K: int = 5) -> tuple[SLConfig, SLConfig]:
    """Outcome and propensity configs; misspecified means intercept-only."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    q_bad = scenario in ("Q_misspecified", "both_misspecified")
    g_bad = scenario in ("g_misspecified", "both_misspecified")
    q = mean_only_config("regression", K, stratify_by_exposure=True) if q_bad else correct_q_config(K)
    g = mean_only_config("binary", K, stratify_folds=True) if g_bad else correct_g_config(K)
    return q, g


def replicate_seed(master: int, i: int) -> np.random.SeedSequence:
    """Seed of replicate `i`; depends only on (master, i)."""
    return np.random.SeedSequence([int(master), int(i)])


@dataclass(frozen=True)
class _Job:
    dgp: DgpSpec
    n: int
    master: int
    index: int
    q_config: SLConfig
    g_config: SLConfig
    estimators: tuple[str, ...]
    gbound: float


def _run_replicate(job: _Job) -> dict[str, Any]:
    row: dict[str, Any] = {"replicate": job.index}
    try:
        data, _ = generate(job.dgp, job.n, replicate_seed(job.master, job.index))
        nuisance = None
        if {"tmle", "gcomp"} & set(job.estimators):
            nuisance = fit_nuisance(data, job.q_config, job.g_config, job.gbound, seed=job.index)
        for name in job.estimators:
            if name == "tmle":
                est = tmle_estimate(data, nuisance=nuisance)
            elif name == "gcomp":
                est = gcomp_estimate(data, nuisance=nuisance)
            else:
                est = unadjusted_estimate(data)
            row[name] = (est.rd, est.se_rd, *est.ci_rd, est.rr, est.se_log_rr, *est.ci_rr)
            if name == "tmle":
                residual = [*est.details["score"], est.ic1.mean(), est.ic0.mean()]
                row["tmle_max_score"] = float(np.max(np.abs(residual)))
        row["error"] = None
    except Exception as exc:  # recorded per replicate; the caller decides whether to abort
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


@dataclass
class ExperimentReport:
    dgp: str
    scenario: str
    n: int
    replicates: int
    seed: int
    truth: SimTruth
    metrics: pd.DataFrame
    failures: list[tuple[int, str]] = field(default_factory=list)
    estimates: pd.DataFrame | None = None

    def metric(self, estimator: str, parameter: str, name: str) -> float:
        row = self.metrics[(self.metrics["estimator"] == estimator) & (self.metrics["parameter"] == parameter)]
        return float(row[name].iloc[0])

    def to_dict(self) -> dict[str, Any]:
        return {
            "dgp": self.dgp,
            "scenario": self.scenario,
            "n": self.n,
            "replicates": self.replicates,
            "seed": self.seed,
            "truth": asdict(self.truth),
            "metrics": self.metrics.to_dict(orient="records"),
            "failures": [list(f) for f in self.failures],
        }


def summarize(values: np.ndarray, ses: np.ndarray, lo: np.ndarray, hi: np.ndarray, truth: float) -> dict[str, float]:
    """Bias, spread, RMSE and coverage of one estimator across replicates."""
    m = values.size
    err = values - truth
    bias = float(err.mean())
    sd = float(values.std(ddof=1)) if m > 1 else 0.0
    return {
        "truth": truth,
        "mean": float(values.mean()),
        "bias": bias,
        "bias_mc_se": sd / math.sqrt(m),
        "sd": sd,
        "mean_se": float(ses.mean()),
        "rmse": float(np.sqrt(np.mean(err**2))),
        "coverage": float(np.mean((lo <= truth) & (truth <= hi))),
        "ci_width": float(np.mean(hi - lo)),
    }


def run_experiment(
    dgp: DgpSpec,
    n: int,
    replicates: int,
    scenario: str = "both_correct",
    seed: int = 0,
    estimators: Sequence[str] = ESTIMATORS,
    configs: tuple[SLConfig, SLConfig] | None = None,
    truth: SimTruth | None = None,
    gbound: float = 0.01,
    n_jobs: int = 1,
) -> ExperimentReport:
    """Repeat generate-then-estimate and summarize against the truth.

    Replicate ``i`` draws from :func:`replicate_seed` ``(seed, i)``, so
    results do not depend on `n_jobs`. More than 5% failed replicates raises
    :class:`SimulationError`.
    """
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    q_config, g_config = configs or scenario_configs(scenario)
    truth = truth or true_parameters(dgp)
    jobs = [_Job(dgp, n, seed, i, q_config, g_config, tuple(estimators), gbound) for i in range(replicates)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_run_replicate, jobs, chunksize=max(1, replicates // (4 * n_jobs))))
    else:
        rows = [_run_replicate(j) for j in jobs]
    failures = [(r["replicate"], r["error"]) for r in rows if r["error"]]
    if len(failures) > MAX_FAILURE_RATE * replicates:
        raise SimulationError(f"{len(failures)}/{replicates} replicates failed; first: {failures[0][1]}")
    for idx, msg in failures:
        log.warning("replicate %d failed: %s", idx, msg)
    ok = [r for r in rows if not r["error"]]
    records, metrics = [], []
    for name in estimators:
        arr = np.array([r[name] for r in ok])
        rd, se_rd, rd_lo, rd_hi, rr, se_lrr, rr_lo, rr_hi = arr.T
        metrics.append({"estimator": name, "parameter": "rd", **summarize(rd, se_rd, rd_lo, rd_hi, truth.target("rd"))})
        metrics.append({"estimator": name, "parameter": "rr", **summarize(rr, rr * se_lrr, rr_lo, rr_hi, truth.target("rr"))})
        for r, row in zip(ok, arr):
            records.append({
                "replicate": r["replicate"], "estimator": name, "rd": row[0], "se_rd": row[1], "rr": row[4], "se_log_rr": row[5],
                "max_score": r.get(f"{name}_max_score", float("nan")),
            })  # fmt: skip
    return ExperimentReport(
        dgp.name, scenario, n, replicates, seed, truth, pd.DataFrame(metrics), failures, pd.DataFrame(records)
    )


def write_report(report: ExperimentReport, out_dir: Path | str) -> Path:
    """Write ``<dgp>_<scenario>_n<n>.csv`` (metrics) and its JSON twin."""
    from maskroadmap.dataset import atomic_write_text

    out_dir = Path(out_dir)
    stem = f"{report.dgp}_{report.scenario}_n{report.n}"
    csv_path = out_dir / f"{stem}.csv"
    atomic_write_text(csv_path, report.metrics.to_csv(index=False, lineterminator="\n", float_format="%.10g"))
    atomic_write_text(out_dir / f"{stem}.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return csv_path


def coverage_interval(coverage: float, replicates: int) -> tuple[float, float]:
    """Normal-approximation 95% band for an empirical coverage proportion."""
    half = Z95 * math.sqrt(max(coverage * (1 - coverage), 1e-12) / replicates)
    return coverage - half, coverage + half
