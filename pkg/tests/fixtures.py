"""Shared populations and experiment generators for the test suites."""

import numpy as np

from surveyexp import AssignmentPlan, ExperimentData, Population, assign_treatment, replicate_rng
from surveyexp.simulation import DGPConfig, draw_population_frame


def hajek_bias_population(expected_n, seed=20240501, N=2000):
    """Fixed population with a strong y-w covariance and light-tailed weights.

    Weights take two levels (with small jitter) so that the Hájek mean's
    second-order bias stays well below the leading term at E[n]=50.
    """
    rng = np.random.default_rng(seed)
    q, lo = 0.7, 0.3
    hi = (1 - q * lo) / (1 - q)
    base = np.where(rng.random(N) < q, lo, hi)
    w = base * np.exp(rng.uniform(-0.05, 0.05, N))
    w = w / w.mean()
    y = 5 / w + 0.2 * rng.standard_normal(N)
    pi = (1 / w) * expected_n / (1 / w).sum()
    return Population(y, y, pi)


def null_experiments(m, n=500, seed=0, N=10_000):
    """Experiments drawn with equal probability; weights unrelated to outcomes.

    Outcomes follow the constant-effect DGP with gamma=0, so the weighted and
    unweighted estimators target the same quantity and delta should be N(0,1).
    """
    fr = draw_population_frame(DGPConfig(N=N, gamma=0.0, effect="constant"), replicate_rng(seed, 2**32 - 1))
    out = []
    for e in range(m):
        idx = replicate_rng(seed, e, 0).choice(N, size=n, replace=False)
        t = assign_treatment(n, AssignmentPlan(), replicate_rng(seed, e, 1))
        y = np.where(t == 1, fr.y1[idx], fr.y0[idx])
        out.append(ExperimentData(y, t, fr.w[idx]))
    return out


def enumeration_populations():
    """Small populations (N <= 8) with heterogeneous effects and unequal sizes.

    Yields (y0, y1, size, n); samples of n units are drawn proportional to
    ``size`` without replacement.
    """
    rng = np.random.default_rng(8)
    for N, n in [(4, 2), (5, 2), (5, 3), (6, 3), (6, 4), (7, 3), (8, 4)]:
        y0 = np.round(rng.normal(10, 3, N), 2)
        y1 = y0 + np.round(rng.normal(2, 4, N), 2)
        size = np.round(rng.uniform(0.5, 4.0, N), 2)
        yield y0, y1, size, n
