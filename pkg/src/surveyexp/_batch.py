# Vectorised estimator evaluation over many resamples at once.
#
# Each function takes an (B, n) matrix of row indices into an ExperimentData
# and returns B estimates. Rows whose post-stratification would need a merge
# are flagged and recomputed by the scalar path, which owns the repair rules.

from __future__ import annotations

import numpy as np

from .estimators import EstimatorSpec, evaluate
from .model import ExperimentData
from .strata import quantile_cuts, sorted_labels

NEEDS_BOTH_ARMS = {"sate_dm", "double_hajek", "single_hajek", "tau_sd", "ps_double", "ps_single"}


def _codes(values) -> np.ndarray:
    _, codes = np.unique(np.asarray(values), return_inverse=True)
    return codes.astype(np.int64).ravel()


class _Resamples:
    """Resampled columns and per-arm sums shared by all estimators of a batch."""

    def __init__(self, data: ExperimentData, idx: np.ndarray):
        self.data = data
        self.idx = idx
        self.B, self.n = idx.shape
        self.Y = data.y[idx]
        self.W = data.w[idx]
        self.Tf = (data.t[idx] == 1).astype(float)
        self.WY = self.W * self.Y
        self.n1 = self.Tf.sum(1)
        self.n0 = self.n - self.n1
        self.bad = (self.n1 == 0) | (self.n0 == 0)
        self.z = self.W.sum(1)
        self.z1 = (self.W * self.Tf).sum(1)
        self.s = self.WY.sum(1)
        self.s1 = (self.WY * self.Tf).sum(1)
        self._order = None
        self._qlabels = {}

    def weight_order(self):
        # stable sort of each row by weight, done on integer ranks for speed
        if self._order is None:
            _, rank = np.unique(self.data.w, return_inverse=True)
            rank = rank.ravel()
            if rank.max() < np.iinfo(np.int16).max:
                R = rank.astype(np.int16)[self.idx]
                self._order = np.argsort(R, axis=1, kind="stable")
            else:
                key = rank[self.idx] * self.n + np.arange(self.n)
                self._order = np.argsort(key, axis=1)
        return self._order

    def quantile_labels(self, K: int):
        if K not in self._qlabels:
            order = self.weight_order()
            Ws = np.take_along_axis(self.W, order, axis=1)
            q_sorted = sorted_labels(quantile_cuts(np.cumsum(Ws, axis=1), K), self.n)
            q = np.empty_like(q_sorted)
            np.put_along_axis(q, order, q_sorted, axis=1)
            self._qlabels[K] = q
        return self._qlabels[K]


def _strata_sums(spec: EstimatorSpec, rs: _Resamples):
    B, n = rs.B, rs.n
    cols = []
    if spec.strata is not None:
        g = _codes(rs.data.covariates[spec.strata])[rs.idx]
        cols.append((g, int(g.max()) + 1))
    if spec.K is not None:
        cols.append((rs.quantile_labels(spec.K), spec.K))
    lab = np.zeros((B, n), dtype=np.int64)
    K = 1
    for c, size in cols:
        lab = lab * size + c
        K *= size
    flat = (lab + K * np.arange(B)[:, None]).ravel()
    m = B * K

    def s(v):
        return np.bincount(flat, weights=v.ravel(), minlength=m).reshape(B, K)

    nk = np.bincount(flat, minlength=m).reshape(B, K).astype(float)
    nk1 = s(rs.Tf)
    z = s(rs.W)
    z1 = s(rs.W * rs.Tf)
    tot = s(rs.WY)
    s1 = s(rs.WY * rs.Tf)
    return dict(nk=nk, nk1=nk1, nk0=nk - nk1, z=z, z1=z1, z0=z - z1, s1=s1, s0=tot - s1)


def _evaluate(spec: EstimatorSpec, rs: _Resamples) -> np.ndarray:
    k = spec.kind
    if k == "hajek_mean":
        return rs.s / rs.z
    if k == "ht_mean":
        return rs.s / (spec.expected_n or rs.n)
    s1, s0 = rs.s1, rs.s - rs.s1
    with np.errstate(divide="ignore", invalid="ignore"):
        if k == "sate_dm":
            ys1 = (rs.Y * rs.Tf).sum(1)
            est = ys1 / rs.n1 - (rs.Y.sum(1) - ys1) / rs.n0
        elif k == "double_hajek":
            est = s1 / rs.z1 - s0 / (rs.z - rs.z1)
        elif k == "tau_sd":
            est = s1 / rs.n1 - s0 / rs.n0
        elif k == "single_hajek":
            p = spec.p if spec.p is not None else rs.n1 / rs.n
            est = s1 / (rs.z * p) - s0 / (rs.z * (1 - p))
        else:
            st = _strata_sums(spec, rs)
            used = st["nk"] > 0
            missing = used & ((st["nk1"] == 0) | (st["nk0"] == 0))
            z = st["z"].sum(1)
            if k == "ps_double":
                tau_k = np.where(used, st["s1"] / st["z1"] - st["s0"] / st["z0"], 0.0)
                est = (st["z"] * tau_k).sum(1) / z
            elif spec.p is None:
                part = st["nk"] * (st["s1"] / st["nk1"] - st["s0"] / st["nk0"])
                est = np.where(used, part, 0.0).sum(1) / z
            else:
                # with a fixed p the strata shares cancel entirely
                est = (st["s1"].sum(1) / spec.p - st["s0"].sum(1) / (1 - spec.p)) / z
                missing = np.zeros_like(missing)
            for r in np.flatnonzero(missing.any(1) & ~rs.bad):
                est[r] = evaluate(spec, rs.data.subset(rs.idx[r]), warn=False)
    return np.where(rs.bad, np.nan, est)


def batch_evaluate_many(specs, data: ExperimentData, idx: np.ndarray):
    """Estimates of shape (B, len(specs)) plus the mask of rows with an empty arm.

    Degenerate rows get NaN for estimators that need both arms.
    """
    rs = _Resamples(data, np.asarray(idx))
    out = np.empty((rs.B, len(specs)))
    for j, spec in enumerate(specs):
        out[:, j] = _evaluate(spec, rs)
    return out, rs.bad


def batch_evaluate(spec: EstimatorSpec, data: ExperimentData, idx: np.ndarray):
    """Single-estimator form of :func:`batch_evaluate_many`."""
    out, bad = batch_evaluate_many([spec], data, idx)
    if spec.kind not in NEEDS_BOTH_ARMS:
        bad = np.zeros_like(bad)
    return out[:, 0], bad
