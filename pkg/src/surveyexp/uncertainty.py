"""Variance formulas, plug-in variance estimators and the case-wise bootstrap."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.stats import norm

from ._batch import NEEDS_BOTH_ARMS, batch_evaluate_many
from .design import AssignmentPlan, SamplingPlan, assign_treatment
from .errors import ArmTooSmall, BootstrapFailure, DegenerateArm, OracleDataMissing, SurveyExpError
from .estimators import EstimatorSpec, _arms, evaluate, oracle_nu
from .model import ExperimentData, Population


@dataclass(frozen=True)
class SampleMoments:
    """Finite-sample moments of the potential outcomes (divisor n - 1)."""

    var1: float
    var0: float
    varDelta: float
    gamma: float
    n: int

    @classmethod
    def from_potential_outcomes(cls, y1, y0) -> "SampleMoments":
        if y1 is None or y0 is None:
            raise OracleDataMissing("both potential outcome vectors are required")
        y1 = np.asarray(y1, dtype=float)
        y0 = np.asarray(y0, dtype=float)
        if len(y1) != len(y0) or len(y1) < 2:
            raise SurveyExpError("need two equal-length vectors of at least 2 units")
        c = np.cov(np.vstack([y1, y0]), ddof=1)
        return cls(
            var1=float(c[0, 0]),
            var0=float(c[1, 1]),
            varDelta=float(np.var(y1 - y0, ddof=1)),
            gamma=float(c[0, 1]),
            n=len(y1),
        )

    def sate_variance(self, beta1: float, beta0: float) -> float:
        return (beta1 * self.var1 + beta0 * self.var0 - self.varDelta) / self.n

    def sate_variance_gamma_form(self, beta1: float, beta0: float) -> float:
        """Same variance written through the covariance of the potential outcomes."""
        return ((beta1 - 1) * self.var1 + (beta0 - 1) * self.var0 + 2 * self.gamma) / self.n


def neyman_sate_variance(y1, y0, plan: AssignmentPlan = AssignmentPlan(), n1: Optional[int] = None) -> float:
    """Randomization variance of the difference in means given the sample.

    Complete randomization uses p = n1/n for its fixed n1. For Bernoulli
    assignment pass the realized ``n1`` to condition on it; otherwise the
    plan's p stands in for E[n/n1].
    """
    m = SampleMoments.from_potential_outcomes(y1, y0)
    if plan.mechanism == "complete":
        p = plan.treated_count(m.n) / m.n
    elif n1 is not None:
        if not 1 <= n1 <= m.n - 1:
            raise DegenerateArm("n1 must leave both arms non-empty")
        p = n1 / m.n
    else:
        p = plan.p
    return m.sate_variance(1 / p, 1 / (1 - p))


def neyman_sate_var_estimate(data: ExperimentData) -> float:
    """Conservative variance estimate s1^2/n1 + s0^2/n0."""
    tr, co = _arms(data)
    if tr.sum() < 2 or co.sum() < 2:
        raise ArmTooSmall("each arm needs at least two units for a sample variance")
    return float(np.var(data.y[tr], ddof=1) / tr.sum() + np.var(data.y[co], ddof=1) / co.sum())


def hh_plugin_variance(data: ExperimentData, pi=None, p: Optional[float] = None) -> float:
    """Plug-in variance estimate for the double-Hájek estimator.

    sum over each arm of w_i^2 (y_i - mu_arm)^2 / Z_arm^2. Passing the
    selection probabilities ``pi`` and treatment probability ``p`` applies the
    (1 - p*pi_i) and (1 - (1-p)*pi_i) finite-population factors, which the
    default form drops (it is their upper bound for small pi).
    """
    tr, co = _arms(data)
    y, w = data.y, data.w
    f1 = f0 = 1.0
    if pi is not None:
        if p is None:
            raise SurveyExpError("the exact form needs p as well as pi")
        pi = np.asarray(pi, dtype=float)
        f1 = (1 - p * pi)[tr]
        f0 = (1 - (1 - p) * pi)[co]
    total = 0.0
    for arm, f in ((tr, f1), (co, f0)):
        wa, ya = w[arm], y[arm]
        za = wa.sum()
        mu = np.dot(wa, ya) / za
        total += float(np.sum(f * wa**2 * (ya - mu) ** 2) / za**2)
    return total


def hh_approx_variance(pop: Population, p: float, expected_n: Optional[float] = None) -> float:
    """Population-level approximate variance of the double-Hájek (small pi).

    Assumes Poisson selection and Bernoulli(p) assignment.
    """
    en = pop.expected_n if expected_n is None else expected_n
    w = pop.w
    v1 = np.mean(w * (pop.y1 - pop.y1.mean()) ** 2)
    v0 = np.mean(w * (pop.y0 - pop.y0.mean()) ** 2)
    return float(v1 / (p * en) + v0 / ((1 - p) * en))


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 1000
    seed: int = 0
    ci_level: float = 0.95
    ci_method: str = "normal"

    def __post_init__(self):
        if self.B < 2:
            raise SurveyExpError("bootstrap needs B >= 2")
        if not 0 < self.ci_level < 1:
            raise SurveyExpError("ci_level must lie in (0, 1)")
        if self.ci_method not in ("normal", "percentile"):
            raise SurveyExpError(f"unknown ci_method {self.ci_method!r}")


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    se: float
    ci_low: float
    ci_high: float
    replicates: np.ndarray = field(repr=False)
    redraws: int = 0


def _interval(point, reps, se, cfg):
    alpha = 1 - cfg.ci_level
    if cfg.ci_method == "normal":
        z = norm.ppf(1 - alpha / 2)
        return point - z * se, point + z * se
    lo, hi = np.quantile(reps, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


def bootstrap_replicates(
    data: ExperimentData,
    specs: Sequence[EstimatorSpec],
    B: int,
    rng: np.random.Generator,
    chunk_cells: int = 2_000_000,
):
    """Case-wise bootstrap replicates of several estimators on shared resamples.

    Every replicate redraws n whole (y, t, w) rows with replacement and reruns
    each estimator, strata construction included. Resamples with an empty arm
    are redrawn. Returns (replicates of shape (B, len(specs)), redraw count).
    """
    n = data.n
    needs_arms = any(s.kind in NEEDS_BOTH_ARMS for s in specs)
    idx = rng.integers(0, n, size=(B, n))
    redraws = 0
    if needs_arms:
        T = data.t[idx]
        bad = (T.sum(1) == 0) | (T.sum(1) == n)
        if bad.sum() > B / 2:
            raise BootstrapFailure(f"{int(bad.sum())} of {B} resamples left an arm empty")
        for r in np.flatnonzero(bad):
            while True:
                redraws += 1
                row = rng.integers(0, n, size=n)
                if 0 < data.t[row].sum() < n:
                    break
                if redraws > 50 * B:
                    raise BootstrapFailure("could not draw a resample with both arms")
            idx[r] = row
    out = np.empty((B, len(specs)))
    step = max(1, chunk_cells // max(n, 1))
    for start in range(0, B, step):
        out[start : start + step] = batch_evaluate_many(specs, data, idx[start : start + step])[0]
    return out, redraws


def bootstrap_se(
    data: ExperimentData,
    spec: Union[EstimatorSpec, str],
    cfg: BootstrapConfig = BootstrapConfig(),
    rng: Optional[np.random.Generator] = None,
) -> BootstrapResult:
    """Bootstrap standard error and confidence interval for one estimator."""
    return bootstrap_many(data, [spec], cfg, rng)[0]


def bootstrap_many(data, specs, cfg: BootstrapConfig = BootstrapConfig(), rng=None):
    specs = [EstimatorSpec(s) if isinstance(s, str) else s for s in specs]
    if data.n < 2:
        raise SurveyExpError("bootstrap needs n >= 2")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed)]))
    reps, redraws = bootstrap_replicates(data, specs, cfg.B, rng)
    results = []
    for j, spec in enumerate(specs):
        point = evaluate(spec, data, warn=False)
        r = reps[:, j]
        se = float(np.std(r, ddof=1))
        lo, hi = _interval(point, r, se, cfg)
        results.append(BootstrapResult(point, se, float(lo), float(hi), r, redraws))
    return results


@dataclass(frozen=True)
class MSEDecomposition:
    within_mse: float
    nu_mse: float
    cross_term: float
    total_direct: float
    total_direct_se: float
    total_from_terms_se: float = 0.0

    @property
    def total_from_terms(self) -> float:
        return self.within_mse + self.nu_mse + self.cross_term


def mse_decomposition(
    pop: Population,
    sampling: SamplingPlan,
    assignment: AssignmentPlan,
    estimator: Union[EstimatorSpec, str, Callable[[ExperimentData], float]],
    reps: int,
    rng: np.random.Generator,
    inner: int = 20,
) -> MSEDecomposition:
    """Monte Carlo split of an estimator's MSE for the population mean effect.

    For ``reps`` samples, ``inner`` randomizations each estimate
    E_S[MSE(est | S)] (error around nu_S), MSE(nu_S) and the cross term
    2 E_S[b_S (nu_S - tau)]. The total MSE is estimated directly on an
    independent set of ``reps`` sample-and-randomize draws, for comparison.
    """
    if pop is None:
        raise OracleDataMissing("the decomposition needs the full population")
    if isinstance(estimator, str):
        estimator = EstimatorSpec(estimator)
    if isinstance(estimator, EstimatorSpec):
        spec = estimator

        def est_fn(d):
            return evaluate(spec, d, warn=False)
    else:
        est_fn = estimator
    tau = pop.tau
    w_pop = pop.w

    def one(draw_rng):
        draw = sampling.draw(pop, draw_rng)
        idx = draw.indices
        return idx, oracle_nu(pop, draw)

    def observe(idx, t):
        y = np.where(t == 1, pop.y1[idx], pop.y0[idx])
        return ExperimentData(y, t, w_pop[idx])

    within = np.empty(reps)
    nu_err = np.empty(reps)
    cross = np.empty(reps)
    for r in range(reps):
        idx, nu = one(rng)
        errs = np.array([est_fn(observe(idx, _assign(len(idx), assignment, rng))) - nu for _ in range(inner)])
        within[r] = np.mean(errs**2)
        nu_err[r] = (nu - tau) ** 2
        cross[r] = 2 * np.mean(errs) * (nu - tau)
    direct = np.empty(reps)
    for r in range(reps):
        idx, _ = one(rng)
        direct[r] = (est_fn(observe(idx, _assign(len(idx), assignment, rng))) - tau) ** 2
    return MSEDecomposition(
        within_mse=float(within.mean()),
        nu_mse=float(nu_err.mean()),
        cross_term=float(cross.mean()),
        total_direct=float(direct.mean()),
        total_direct_se=float(direct.std(ddof=1) / np.sqrt(reps)),
        total_from_terms_se=float((within + nu_err + cross).std(ddof=1) / np.sqrt(reps)),
    )


def _assign(n, plan, rng):
    while True:
        try:
            return assign_treatment(n, plan, rng)
        except DegenerateArm:
            continue
