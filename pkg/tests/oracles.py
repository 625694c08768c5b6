"""Independent reference computations used as test oracles.

Nothing here imports the package's estimator code; formulas are written out
directly or obtained by brute-force enumeration.
"""

import itertools
import math

import numpy as np


def assignments(n, n1):
    """Every complete-randomization treatment vector with n1 treated units."""
    for treated in itertools.combinations(range(n), n1):
        t = np.zeros(n, dtype=int)
        t[list(treated)] = 1
        yield t


def wls_slope(y, t, w):
    """Coefficient on t from weighted least squares of y on (1, t)."""
    X = np.column_stack([np.ones_like(y), t.astype(float)])
    XtW = X.T * w
    beta = np.linalg.solve(XtW @ X, XtW @ y)
    return beta[1]


def diff_in_means(y1_obs, y0_obs):
    return sum(y1_obs) / len(y1_obs) - sum(y0_obs) / len(y0_obs)


def enumerate_sate_dm(y1, y0, n1):
    """Exact mean and variance of the difference in means over all assignments."""
    vals = []
    for t in assignments(len(y1), n1):
        vals.append(diff_in_means(y1[t == 1], y0[t == 0]))
    vals = np.array(vals)
    return vals.mean(), vals.var()


def single_hajek_ref(y, t, w, p):
    Z = sum(w)
    a = sum(wi * yi for wi, yi, ti in zip(w, y, t) if ti == 1)
    b = sum(wi * yi for wi, yi, ti in zip(w, y, t) if ti == 0)
    return a / (Z * p) - b / (Z * (1 - p))


def successive_design(size, n):
    """{sorted subset: probability} for draws proportional to size without replacement.

    Walks every ordered sequence of n distinct units, multiplying the
    step-wise selection probabilities.
    """
    size = [float(s) for s in size]
    N = len(size)
    total = sum(size)
    probs = {}
    for seq in itertools.permutations(range(N), n):
        p = 1.0
        left = total
        for i in seq:
            p *= size[i] / left
            left -= size[i]
        key = tuple(sorted(seq))
        probs[key] = probs.get(key, 0.0) + p
    return probs


def srs_design(N, n):
    k = math.comb(N, n)
    return {s: 1.0 / k for s in itertools.combinations(range(N), n)}


def inclusion(design, N):
    pi = np.zeros(N)
    for s, p in design.items():
        pi[list(s)] += p
    return pi


def sample_variance(x):
    x = list(x)
    m = sum(x) / len(x)
    return sum((v - m) ** 2 for v in x) / (len(x) - 1)
