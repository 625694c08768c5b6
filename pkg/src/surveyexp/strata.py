"""Strata construction for post-stratified estimators.

Strata are built before looking at treatment: weight-quantile strata cut the
weight-sorted units into groups of roughly equal weight mass, covariate strata
come from a categorical column, and the two can be crossed. A stratum that
ends up without one of the arms is merged into a neighbour (see
:func:`repair_partition`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import EmptyStratumArm, StrataMergeWarning, SurveyExpError, TooManyStrata

SOURCES = ("weight_quantiles", "covariate", "covariate_x_weights")


@dataclass(frozen=True)
class StrataPartition:
    """Unit-to-stratum labels with per-stratum weight masses.

    ``z1``/``z0`` are only filled once a treatment vector is attached.
    ``group`` holds the covariate level of each stratum (all zeros for pure
    weight strata); merges prefer neighbours from the same group.
    """

    labels: np.ndarray
    K: int
    z: np.ndarray
    source: str = "weight_quantiles"
    z1: Optional[np.ndarray] = None
    z0: Optional[np.ndarray] = None
    group: Optional[np.ndarray] = None
    merges: tuple = ()

    def __post_init__(self):
        if self.source not in SOURCES:
            raise SurveyExpError(f"unknown strata source {self.source!r}")

    @property
    def f_hat(self) -> np.ndarray:
        return self.z / self.z.sum()

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


def quantile_cuts(cum: np.ndarray, K: int) -> np.ndarray:
    """Cut positions for rows of cumulative weight mass.

    ``cum`` has shape (B, n): cumulative sums of weight-sorted units. Returns
    integer counts c (B, K-1) such that stratum k holds sorted units
    ``c[k-1] <= i < c[k]``. Each cut sits at whichever unit boundary is
    closest to k/K of the total mass (ties go to the smaller stratum), then
    the cuts are nudged apart so no stratum is empty.
    """
    B, n = cum.shape
    if K == 1:
        return np.zeros((B, 0), dtype=np.int64)
    targets = cum[:, -1:] * (np.arange(1, K) / K)
    # j = number of units whose cumulative mass falls short of the target
    j = np.empty((B, K - 1), dtype=np.int64)
    for k in range(K - 1):
        j[:, k] = np.count_nonzero(cum < targets[:, k : k + 1], axis=1)
    jc = np.minimum(j, n - 1)
    above = np.take_along_axis(cum, jc, axis=1)
    below = np.where(j > 0, np.take_along_axis(cum, np.maximum(j - 1, 0), axis=1), 0.0)
    cuts = np.where(targets - below <= above - targets, j, j + 1).astype(np.int64)
    lo = np.zeros(B, dtype=np.int64)
    for k in range(K - 1):
        cuts[:, k] = np.maximum(cuts[:, k], lo + 1)
        lo = cuts[:, k]
    hi = np.full(B, n, dtype=np.int64)
    for k in range(K - 2, -1, -1):
        cuts[:, k] = np.minimum(cuts[:, k], hi - 1)
        hi = cuts[:, k]
    return cuts


def sorted_labels(cuts: np.ndarray, n: int) -> np.ndarray:
    """Stratum label of each weight-sorted position, shape (B, n)."""
    B = cuts.shape[0]
    mark = np.zeros((B, n + 1), dtype=np.int64)
    # cuts are strictly increasing within a row, so no index repeats
    mark[np.arange(B)[:, None], cuts] = 1
    return np.cumsum(mark[:, :n], axis=1)


def weight_quantile_labels(w, K: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    n = len(w)
    if K < 1:
        raise TooManyStrata("K must be at least 1")
    if K > n:
        raise TooManyStrata(f"cannot form {K} strata from {n} units")
    order = np.argsort(w, kind="stable")
    cum = np.cumsum(w[order])[None, :]
    lab_sorted = sorted_labels(quantile_cuts(cum, K), n)[0]
    labels = np.empty(n, dtype=np.int64)
    labels[order] = lab_sorted
    return labels


def _masses(labels, w, K, t=None):
    z = np.bincount(labels, weights=w, minlength=K)
    if t is None:
        return z, None, None
    t = np.asarray(t)
    z1 = np.bincount(labels, weights=w * (t == 1), minlength=K)
    z0 = np.bincount(labels, weights=w * (t == 0), minlength=K)
    return z, z1, z0


def strata_from_weights(w, K: int, t=None) -> StrataPartition:
    """K strata of (as near as possible) equal weight mass."""
    w = np.asarray(w, dtype=float)
    labels = weight_quantile_labels(w, K)
    z, z1, z0 = _masses(labels, w, K, t)
    return StrataPartition(labels, K, z, "weight_quantiles", z1, z0, np.zeros(K, dtype=np.int64))


def _codes(values) -> np.ndarray:
    _, codes = np.unique(np.asarray(values), return_inverse=True)
    return codes.astype(np.int64).ravel()


def strata_from_covariate(values, w, t=None) -> StrataPartition:
    """One stratum per observed level of a categorical column."""
    w = np.asarray(w, dtype=float)
    labels = _codes(values)
    K = int(labels.max()) + 1
    z, z1, z0 = _masses(labels, w, K, t)
    return StrataPartition(labels, K, z, "covariate", z1, z0, np.arange(K))


def strata_from_covariate_x_weights(values, w, K: int, t=None) -> StrataPartition:
    """Product of covariate levels with weight-quantile strata, empty cells dropped."""
    w = np.asarray(w, dtype=float)
    g = _codes(values)
    q = weight_quantile_labels(w, K)
    cell = g * K + q
    used, labels = np.unique(cell, return_inverse=True)
    labels = labels.astype(np.int64).ravel()
    Kc = len(used)
    z, z1, z0 = _masses(labels, w, Kc, t)
    return StrataPartition(labels, Kc, z, "covariate_x_weights", z1, z0, used // K)


def attach_treatment(part: StrataPartition, w, t) -> StrataPartition:
    z, z1, z0 = _masses(part.labels, np.asarray(w, dtype=float), part.K, t)
    return replace(part, z=z, z1=z1, z0=z0)


def repair_partition(part: StrataPartition, w, t, warn: bool = True) -> StrataPartition:
    """Merge strata missing an arm into their nearest neighbour, recursively.

    Strata are ordered by (group, mean weight). A deficient stratum is merged
    with an adjacent stratum, preferring one from the same group and then the
    one with the closer mean weight (ties to the lower neighbour). Empty
    strata are dropped. Raises EmptyStratumArm when a single stratum is left
    and it still lacks an arm.
    """
    w = np.asarray(w, dtype=float)
    t = np.asarray(t)
    labels = part.labels.copy()
    group = part.group if part.group is not None else np.zeros(part.K, dtype=np.int64)
    merges = list(part.merges)
    while True:
        # compact away empty strata
        used, labels = np.unique(labels, return_inverse=True)
        labels = labels.ravel()
        group = np.asarray(group)[used]
        K = len(used)
        counts = np.bincount(labels, minlength=K)
        n1 = np.bincount(labels, weights=(t == 1).astype(float), minlength=K)
        n0 = counts - n1
        mean_w = np.bincount(labels, weights=w, minlength=K) / counts
        order = np.lexsort((mean_w, group))
        bad = [k for k in order if n1[k] == 0 or n0[k] == 0]
        if not bad:
            break
        if K == 1:
            raise EmptyStratumArm("only one stratum left and it lacks a treatment arm")
        k = bad[0]
        pos = int(np.flatnonzero(order == k)[0])
        cands = [order[i] for i in (pos - 1, pos + 1) if 0 <= i < K]
        same = [c for c in cands if group[c] == group[k]]
        if same:
            cands = same
        target = min(cands, key=lambda c: (abs(mean_w[c] - mean_w[k]), mean_w[c]))
        msg = f"stratum {k} (n={counts[k]}, n1={int(n1[k])}) merged into stratum {target}"
        merges.append(msg)
        if warn:
            warnings.warn(msg, StrataMergeWarning, stacklevel=2)
        labels = np.where(labels == k, target, labels)
    z, z1, z0 = _masses(labels, w, K, t)
    return StrataPartition(labels, K, z, part.source, z1, z0, group, tuple(merges))


def build_partition(w, K: Optional[int] = None, covariate=None, t=None) -> StrataPartition:
    """Partition from a recipe: weight quantiles, a covariate, or their cross."""
    if covariate is not None and K is not None:
        return strata_from_covariate_x_weights(covariate, w, K, t)
    if covariate is not None:
        return strata_from_covariate(covariate, w, t)
    if K is not None:
        return strata_from_weights(w, K, t)
    raise SurveyExpError("a post-stratification recipe needs K and/or a covariate")
