"""Diagnostics for SATE/PATE divergence and analytic bias checks on populations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .errors import OracleDataMissing, SurveyExpError, TooFew, ZeroVariance
from .estimators import EstimatorSpec, double_hajek, sate_diff_means
from .model import ExperimentData, Population
from .uncertainty import BootstrapConfig, bootstrap_replicates

_PAIR = (EstimatorSpec("sate_dm"), EstimatorSpec("double_hajek"))


@dataclass(frozen=True)
class DeltaReport:
    """Standardized SATE minus double-Hájek difference for one experiment.

    Positive ``delta`` means the unweighted estimate exceeds the weighted one.
    """

    sate_est: float
    hh_est: float
    se_diff: float
    delta: float
    group: Optional[str] = None
    experiment_id: Optional[str] = None
    redraws: int = 0

    def to_row(self) -> dict:
        return dict(
            group=self.group,
            experiment_id=self.experiment_id,
            sate=self.sate_est,
            hh=self.hh_est,
            se_diff=self.se_diff,
            delta=self.delta,
        )


def delta_statistic(
    data: ExperimentData,
    cfg: BootstrapConfig = BootstrapConfig(),
    rng: Optional[np.random.Generator] = None,
    group=None,
    experiment_id=None,
    rtol: float = 1e-12,
) -> DeltaReport:
    """Compute the δ̂ statistic with a paired case-wise bootstrap SE.

    Both estimators are evaluated on the same resamples so the SE reflects
    their correlation. When the difference and its SE are both zero (up to
    ``rtol`` relative to the estimates) δ̂ is defined as 0.
    """
    sate = sate_diff_means(data)
    hh = double_hajek(data)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed)]))
    reps, redraws = bootstrap_replicates(data, _PAIR, cfg.B, rng)
    se = float(np.std(reps[:, 0] - reps[:, 1], ddof=1))
    diff = sate - hh
    tol = rtol * max(abs(sate), abs(hh), 1.0)
    if se <= tol:
        if abs(diff) <= tol:
            return DeltaReport(sate, hh, 0.0, 0.0, group, experiment_id, redraws)
        raise ZeroVariance(f"bootstrap SE of the difference is zero but the estimates differ by {diff:g}")
    return DeltaReport(sate, hh, se, diff / se, group, experiment_id, redraws)


def qq_points(deltas):
    """(theoretical, observed) standard-normal quantile pairs.

    Theoretical quantiles are Φ⁻¹((i - 0.5)/m) for the ordered values.
    """
    d = np.sort(np.asarray(deltas, dtype=float).ravel())
    m = d.size
    if m < 2:
        raise TooFew("a qq table needs at least two values")
    if not np.all(np.isfinite(d)):
        raise SurveyExpError("qq input contains non-finite values")
    theo = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    return theo, d


def ks_band(m: int, level: float = 0.99) -> float:
    """Half-width of the two-sided KS confidence band for m observations."""
    if m < 1:
        raise TooFew("need at least one value")
    return float(stats.kstwo.ppf(level, m))


def within_ks_band(deltas, level: float = 0.99):
    """Whether the empirical CDF of ``deltas`` stays inside the KS band around Φ.

    Returns (inside, ks statistic, band half-width).
    """
    d = np.asarray(deltas, dtype=float).ravel()
    if d.size < 2:
        raise TooFew("need at least two values")
    D = float(stats.kstest(d, "norm").statistic)
    band = ks_band(d.size, level)
    return D <= band, D, band


def _require(pop):
    if pop is None or not isinstance(pop, Population):
        raise OracleDataMissing("a full population with potential outcomes is required")


def sate_bias_oracle(pop: Population) -> float:
    """Expected SATE minus PATE under selection proportional to pi.

    (1/N) sum (pi_i/pibar - 1) * Delta_i, evaluated with the nominal pi.
    """
    _require(pop)
    r = pop.pi / pop.pibar - 1
    return float(np.mean(r * pop.delta))


def hajek_bias_oracle(pop: Population, expected_n: Optional[float] = None, outcome: str = "y0") -> float:
    """Leading-order bias of the Hájek mean, -cov(y, w)/E[n].

    The covariance is the population one with divisor N. ``expected_n``
    defaults to the sum of the selection probabilities.
    """
    _require(pop)
    if outcome not in ("y0", "y1"):
        raise SurveyExpError("outcome must be 'y0' or 'y1'")
    en = pop.expected_n if expected_n is None else float(expected_n)
    if en <= 0:
        raise SurveyExpError("expected_n must be positive")
    y = getattr(pop, outcome)
    w = pop.w
    return float(-np.mean((y - y.mean()) * (w - w.mean())) / en)
