"""Point estimators for sample and population average treatment effects.

Observed-data estimators take an :class:`ExperimentData`; the oracle
quantities (tau_S, nu_S) need the full potential outcomes of a population and
the indices of a sample draw.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateArm, DegenerateArmWarning, EmptyInput, LengthMismatch, SurveyExpError
from .model import ExperimentData, Population, SampleDraw
from .strata import StrataPartition, attach_treatment, build_partition, repair_partition


def _arms(data: ExperimentData):
    treated = data.t == 1
    if treated.all() or not treated.any():
        raise DegenerateArm(f"need both arms non-empty (n1={data.n1}, n0={data.n0})")
    return treated, ~treated


def hajek_mean(y, w) -> float:
    """Weighted average sum(w*y)/sum(w)."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.size == 0:
        raise EmptyInput("hajek_mean of an empty sample")
    if y.shape != w.shape:
        raise LengthMismatch("y and w must have the same shape")
    return float(np.dot(w, y) / w.sum())


def horvitz_thompson_mean(y, w, expected_n: float) -> float:
    """sum(w*y)/E[n].

    Unbiased under the design, but not translation invariant: adding a
    constant c to every y shifts the estimate by c*Z/E[n], not by c.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.size == 0:
        raise EmptyInput("horvitz_thompson_mean of an empty sample")
    if expected_n <= 0:
        raise SurveyExpError("expected_n must be positive")
    return float(np.dot(w, y) / expected_n)


def sate_diff_means(data: ExperimentData) -> float:
    """Unweighted difference in arm means."""
    tr, co = _arms(data)
    return float(data.y[tr].mean() - data.y[co].mean())


def double_hajek(data: ExperimentData) -> float:
    """Difference of the two arm-wise Hájek means."""
    tr, co = _arms(data)
    y, w = data.y, data.w
    return float(np.dot(w[tr], y[tr]) / w[tr].sum() - np.dot(w[co], y[co]) / w[co].sum())


def single_hajek(data: ExperimentData, p: Optional[float] = None) -> float:
    """Arm sums normalised by the expected arm masses Z*p and Z*(1-p).

    ``p`` defaults to the realized treated share n1/n. With an empty arm the
    estimator is still defined (that sum is zero), so only a warning is given.
    """
    tr = data.t == 1
    co = ~tr
    if p is None:
        p = data.n1 / data.n
    if not 0 < p < 1:
        raise SurveyExpError("p must lie in (0, 1)")
    if tr.all() or co.all():
        warnings.warn("single_hajek with an empty arm", DegenerateArmWarning, stacklevel=2)
    y, w = data.y, data.w
    z = w.sum()
    return float(np.dot(w[tr], y[tr]) / (z * p) - np.dot(w[co], y[co]) / (z * (1 - p)))


def tau_sd(data: ExperimentData) -> float:
    """Weighted arm sums divided by the arm counts n1 and n0.

    Unbiased when weights average 1 over the population, at a large cost in
    variance: it is not invariant to rescaling the weights.
    """
    tr, co = _arms(data)
    y, w = data.y, data.w
    return float(np.dot(w[tr], y[tr]) / tr.sum() - np.dot(w[co], y[co]) / co.sum())


def _drawn(pop: Population, draw: SampleDraw) -> np.ndarray:
    idx = draw.indices if isinstance(draw, SampleDraw) else np.asarray(draw)
    if len(idx) == 0:
        raise EmptyInput("empty sample draw")
    return idx


def oracle_sate(pop: Population, draw: SampleDraw) -> float:
    """tau_S: mean unit-level effect over the drawn units."""
    idx = _drawn(pop, draw)
    return float(pop.delta[idx].mean())


def oracle_nu(pop: Population, draw: SampleDraw) -> float:
    """nu_S: weight-averaged unit-level effect over the drawn units."""
    idx = _drawn(pop, draw)
    w = pop.w[idx]
    return float(np.dot(w, pop.delta[idx]) / w.sum())


def post_stratified(
    data: ExperimentData,
    part: StrataPartition,
    variant: str = "double",
    p: Optional[float] = None,
    warn: bool = True,
) -> float:
    """Sum over strata of f_k * tau_k with f_k = Z_k / Z.

    ``variant="double"`` uses the double-Hájek within each stratum.
    ``variant="single"`` uses the single-Hájek; with ``p=None`` the within-
    stratum treated share n_k1/n_k is used and Z_k cancels, leaving
    sum_k (n_k/Z) * (S_k1/n_k1 - S_k0/n_k0) with S the weighted arm sums.
    Strata missing an arm are merged first (:func:`repair_partition`).
    """
    return post_stratified_detail(data, part, variant, p, warn)[0]


def post_stratified_detail(data, part, variant="double", p=None, warn=True):
    """Like :func:`post_stratified` but also returns the repaired partition."""
    if variant not in ("double", "single"):
        raise SurveyExpError(f"unknown post-stratification variant {variant!r}")
    if len(part.labels) != data.n:
        raise LengthMismatch("partition does not match the data")
    _arms(data)
    part = repair_partition(part, data.w, data.t, warn=warn)
    y, w, t, lab, K = data.y, data.w, data.t, part.labels, part.K
    s1 = np.bincount(lab, weights=w * y * (t == 1), minlength=K)
    s0 = np.bincount(lab, weights=w * y * (t == 0), minlength=K)
    z = part.z.sum()
    if variant == "double":
        tau_k = s1 / part.z1 - s0 / part.z0
        est = float(np.dot(part.z / z, tau_k))
    elif p is None:
        n1 = np.bincount(lab, weights=(t == 1).astype(float), minlength=K)
        nk = np.bincount(lab, minlength=K).astype(float)
        est = float(np.sum(nk / z * (s1 / n1 - s0 / (nk - n1))))
    else:
        est = float(np.sum(s1 / (z * p) - s0 / (z * (1 - p))))
    return est, part


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator identity plus the recipe needed to recompute it on a resample.

    ``K`` and ``strata`` (a covariate name) define the post-stratification;
    ``p`` is the treated share for single-Hájek variants; ``expected_n`` is
    used by ``ht_mean`` (defaults to n).
    """

    kind: str
    K: Optional[int] = None
    strata: Optional[str] = None
    p: Optional[float] = None
    expected_n: Optional[float] = None

    def __post_init__(self):
        from .model import ESTIMATOR_IDS

        if self.kind not in ESTIMATOR_IDS:
            raise SurveyExpError(f"unknown estimator {self.kind!r}")
        if self.kind.startswith("ps_") and self.K is None and self.strata is None:
            raise SurveyExpError(f"{self.kind} needs K and/or a strata covariate")

    @property
    def post_stratified(self) -> bool:
        return self.kind.startswith("ps_")


def make_partition(data: ExperimentData, spec: EstimatorSpec) -> StrataPartition:
    cov = None
    if spec.strata is not None:
        if not data.covariates or spec.strata not in data.covariates:
            raise SurveyExpError(f"missing strata covariate {spec.strata!r}")
        cov = data.covariates[spec.strata]
    part = build_partition(data.w, spec.K, cov)
    return attach_treatment(part, data.w, data.t)


def evaluate(spec: EstimatorSpec, data: ExperimentData, warn: bool = True) -> float:
    """Run the estimator described by ``spec`` on ``data``."""
    k = spec.kind
    if k == "sate_dm":
        return sate_diff_means(data)
    if k == "double_hajek":
        return double_hajek(data)
    if k == "single_hajek":
        return single_hajek(data, spec.p)
    if k == "tau_sd":
        return tau_sd(data)
    if k == "hajek_mean":
        return hajek_mean(data.y, data.w)
    if k == "ht_mean":
        return horvitz_thompson_mean(data.y, data.w, spec.expected_n or data.n)
    part = make_partition(data, spec)
    variant = "double" if k == "ps_double" else "single"
    return post_stratified(data, part, variant, spec.p, warn=warn)
