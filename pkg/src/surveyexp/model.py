"""Shared data model: populations, sample draws, observed experiments, reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import (
    DegenerateArm,
    EmptyInput,
    LengthMismatch,
    MissingValue,
    NonBinaryTreatment,
    NonPositiveWeight,
    SurveyExpError,
)

ESTIMATOR_IDS = (
    "sate_dm",
    "hajek_mean",
    "ht_mean",
    "double_hajek",
    "single_hajek",
    "tau_sd",
    "ps_double",
    "ps_single",
)
SE_METHODS = ("plugin", "bootstrap", "none")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _check_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise MissingValue(f"{name} contains missing or non-finite values")


def normalize_weights(w) -> np.ndarray:
    """Rescale positive weights so that their mean is exactly 1."""
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        raise EmptyInput("no weights given")
    _check_finite("weights", w)
    if np.any(w <= 0):
        raise NonPositiveWeight("all weights must be strictly positive")
    return w / w.mean()


@dataclass(frozen=True)
class Population:
    """Full potential-outcome table with selection probabilities.

    ``pi`` holds nominal selection propensities. Values slightly above 1 are
    tolerated (they arise when scaling 1/w to a target sample size); samplers
    that need true probabilities cap or reject them.
    """

    y0: np.ndarray
    y1: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        y0, y1, pi = _frozen(self.y0), _frozen(self.y1), _frozen(self.pi)
        if not (y0.ndim == y1.ndim == pi.ndim == 1):
            raise LengthMismatch("population columns must be one-dimensional")
        if not (len(y0) == len(y1) == len(pi)):
            raise LengthMismatch("y0, y1 and pi must have the same length")
        if len(y0) < 2:
            raise EmptyInput("a population needs at least two units")
        for name, a in (("y0", y0), ("y1", y1), ("pi", pi)):
            _check_finite(name, a)
        if np.any(pi <= 0):
            raise NonPositiveWeight("every unit needs a positive selection probability")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "pi", pi)

    @property
    def N(self) -> int:
        return len(self.y0)

    @property
    def pibar(self) -> float:
        return float(self.pi.mean())

    @property
    def w(self) -> np.ndarray:
        return self.pibar / self.pi

    @property
    def delta(self) -> np.ndarray:
        return self.y1 - self.y0

    @property
    def tau(self) -> float:
        return float(self.y1.mean() - self.y0.mean())

    @property
    def expected_n(self) -> float:
        return float(self.pi.sum())

    def with_expected_n(self, expected_n: float) -> "Population":
        """Same population with the propensities rescaled to sum to `expected_n`."""
        return Population(self.y0, self.y1, self.pi * (expected_n / self.pi.sum()))


@dataclass(frozen=True)
class SampleDraw:
    """Indices of the selected units of a population."""

    indices: np.ndarray
    N: Optional[int] = None

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64, copy=True)
        if idx.ndim != 1:
            raise LengthMismatch("indices must be one-dimensional")
        if len(np.unique(idx)) != len(idx):
            raise SurveyExpError("sample indices must be distinct")
        if idx.size and idx.min() < 0:
            raise SurveyExpError("sample indices must be non-negative")
        if self.N is not None and idx.size and idx.max() >= self.N:
            raise SurveyExpError("sample index out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def n(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class ExperimentData:
    """Observed (outcome, treatment, weight) triples plus optional covariates.

    Construction checks shapes, missing values, binary treatment and weight
    signs. Arm sizes are checked by :func:`validate_experiment` and by the
    estimators themselves, so that degenerate bootstrap resamples can still be
    represented.
    """

    y: np.ndarray
    t: np.ndarray
    w: np.ndarray
    covariates: Optional[Mapping[str, np.ndarray]] = None

    def __post_init__(self):
        y = _frozen(self.y)
        w = _frozen(self.w)
        t_raw = np.asarray(self.t)
        if not (y.ndim == w.ndim == t_raw.ndim == 1):
            raise LengthMismatch("columns must be one-dimensional")
        if not (len(y) == len(w) == len(t_raw)):
            raise LengthMismatch("y, t and w must have the same length")
        if len(y) == 0:
            raise EmptyInput("no observations")
        _check_finite("outcome", y)
        _check_finite("weight", w)
        t = _as_binary(t_raw)
        if np.any(w <= 0):
            raise NonPositiveWeight("all weights must be strictly positive")
        covs = None
        if self.covariates:
            covs = {}
            for name, col in self.covariates.items():
                col = np.array(col, copy=True)
                if len(col) != len(y):
                    raise LengthMismatch(f"covariate {name!r} has the wrong length")
                col.setflags(write=False)
                covs[name] = col
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "covariates", covs)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def n1(self) -> int:
        return int(self.t.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def z(self) -> float:
        return float(self.w.sum())

    @property
    def z1(self) -> float:
        return float(self.w[self.t == 1].sum())

    @property
    def z0(self) -> float:
        return float(self.w[self.t == 0].sum())

    def normalized(self) -> "ExperimentData":
        return ExperimentData(self.y, self.t, normalize_weights(self.w), self.covariates)

    def subset(self, idx) -> "ExperimentData":
        covs = None
        if self.covariates:
            covs = {k: v[idx] for k, v in self.covariates.items()}
        return ExperimentData(self.y[idx], self.t[idx], self.w[idx], covs)


def _as_binary(t) -> np.ndarray:
    t = np.asarray(t)
    if t.dtype.kind in "US":
        s = np.char.strip(t.astype(str))
        if not np.all((s == "0") | (s == "1")):
            raise NonBinaryTreatment('treatment strings must be "0" or "1"')
        out = (s == "1").astype(np.int8)
    elif t.dtype.kind == "b":
        out = t.astype(np.int8)
    elif t.dtype.kind in "iu":
        if not np.all((t == 0) | (t == 1)):
            raise NonBinaryTreatment("treatment must be 0 or 1")
        out = t.astype(np.int8)
    else:
        raise NonBinaryTreatment(f"unsupported treatment dtype {t.dtype}")
    out.setflags(write=False)
    return out


def validate_experiment(y, t, w, covariates=None, normalize: bool = False) -> ExperimentData:
    """Build an :class:`ExperimentData` from raw columns and check it is estimable.

    Raises NonPositiveWeight, NonBinaryTreatment, MissingValue or DegenerateArm.
    """
    data = ExperimentData(y, t, w, covariates)
    if data.n1 == 0 or data.n0 == 0:
        raise DegenerateArm(f"need both arms non-empty (n1={data.n1}, n0={data.n0})")
    if normalize:
        data = data.normalized()
    return data


@dataclass(frozen=True)
class EstimateReport:
    estimator_id: str
    point: float
    se: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    se_method: str = "none"
    n: int = 0
    n_1: int = 0
    n_0: int = 0
    ci_method: Optional[str] = None
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.estimator_id not in ESTIMATOR_IDS:
            raise SurveyExpError(f"unknown estimator {self.estimator_id!r}")
        if self.se_method not in SE_METHODS:
            raise SurveyExpError(f"unknown se_method {self.se_method!r}")
        if self.se is not None and self.se < 0:
            raise SurveyExpError("standard error must be non-negative")
        has_ci = self.ci_low is not None or self.ci_high is not None
        if has_ci:
            if self.ci_low is None or self.ci_high is None:
                raise SurveyExpError("confidence interval needs both ends")
            if self.se is None:
                raise SurveyExpError("a confidence interval requires a standard error")
            if self.ci_low > self.ci_high:
                raise SurveyExpError("ci_low exceeds ci_high")
            # percentile intervals need not straddle the point estimate
            if self.ci_method != "percentile" and not (
                self.ci_low <= self.point <= self.ci_high
            ):
                raise SurveyExpError("point estimate outside its interval")

    def to_dict(self) -> dict:
        return {
            "estimator_id": self.estimator_id,
            "point": self.point,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "se_method": self.se_method,
            "ci_method": self.ci_method,
            "n": self.n,
            "n_1": self.n_1,
            "n_0": self.n_0,
            "notes": list(self.notes),
        }
