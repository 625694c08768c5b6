"""Sampling and treatment-assignment mechanisms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateArm, SampleTooLarge, SurveyExpError
from .model import Population, SampleDraw

MECHANISMS = ("bernoulli", "complete")
SAMPLING_SCHEMES = ("poisson", "fixed_n_weighted", "fixed_n_systematic")


def replicate_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the substream identified by ``(seed, *keys)``.

    Streams depend only on the key tuple, never on the order in which they are
    requested, so replicate results do not depend on scheduling. The key count
    is mixed in as well, since SeedSequence treats trailing zeros as padding.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), len(keys), *map(int, keys)]))


@dataclass(frozen=True)
class AssignmentPlan:
    mechanism: str = "complete"
    p: float = 0.5
    n1: Optional[int] = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise SurveyExpError(f"unknown assignment mechanism {self.mechanism!r}")
        if not 0 < self.p < 1:
            raise SurveyExpError("treatment probability must lie in (0, 1)")
        if self.n1 is not None and self.n1 < 1:
            raise SurveyExpError("n1 must be positive")

    def treated_count(self, n: int) -> int:
        """Number treated under complete randomization of ``n`` units."""
        n1 = self.n1 if self.n1 is not None else int(np.floor(n * self.p + 0.5))
        if not 1 <= n1 <= n - 1:
            raise DegenerateArm(f"complete randomization needs 1 <= n1 <= n-1 (n={n}, n1={n1})")
        return n1


@dataclass(frozen=True)
class SamplingPlan:
    scheme: str = "fixed_n_systematic"
    n: int = 500

    def __post_init__(self):
        if self.scheme not in SAMPLING_SCHEMES:
            raise SurveyExpError(f"unknown sampling scheme {self.scheme!r}")
        if self.n < 1:
            raise SurveyExpError("sample size must be positive")

    def draw(self, pop: Population, rng: np.random.Generator) -> SampleDraw:
        if self.n > pop.N:
            raise SampleTooLarge(f"n={self.n} exceeds N={pop.N}")
        if self.scheme == "poisson":
            return poisson_sample(pop.with_expected_n(self.n), rng)
        if self.scheme == "fixed_n_weighted":
            return weighted_sample_without_replacement(pop, self.n, rng)
        return systematic_pps_sample(pop, self.n, rng)


def poisson_sample(pop: Population, rng: np.random.Generator) -> SampleDraw:
    """Include each unit independently with probability ``pi_i``.

    The realized size is random and may be zero; callers decide what to do.
    """
    if np.any(pop.pi > 1):
        raise SurveyExpError("Poisson sampling needs every pi_i <= 1")
    keep = rng.random(pop.N) < pop.pi
    return SampleDraw(np.flatnonzero(keep), pop.N)


def weighted_sample_without_replacement(
    pop: Population, n: int, rng: np.random.Generator
) -> SampleDraw:
    """Successive draws, each proportional to 1/w_i among the units left.

    Uses the exponential-race form: with E_i ~ Exp(1), the units sorted by
    E_i / size_i come out in the same order, in distribution, as successive
    size-proportional draws. Indices are returned in draw order.
    """
    return SampleDraw(successive_sample(pop.pi, n, rng), pop.N)


def successive_sample(size, n: int, rng: np.random.Generator) -> np.ndarray:
    size = np.asarray(size, dtype=float)
    N = len(size)
    if not 1 <= n <= N:
        raise SampleTooLarge(f"cannot draw {n} distinct units from {N}")
    keys = rng.exponential(size=N) / size
    if n == N:
        return np.argsort(keys, kind="stable")
    idx = np.argpartition(keys, n - 1)[:n]
    return idx[np.argsort(keys[idx], kind="stable")]


def pps_inclusion_probabilities(size, n: int) -> np.ndarray:
    """Inclusion probabilities proportional to ``size`` for a fixed-size design.

    Units whose proportional share reaches 1 become certainty units and the
    remaining sample is re-spread over the rest.
    """
    size = np.asarray(size, dtype=float)
    N = len(size)
    if not 1 <= n <= N:
        raise SampleTooLarge(f"cannot draw {n} distinct units from {N}")
    certain = np.zeros(N, dtype=bool)
    while True:
        m = n - certain.sum()
        pi = np.ones(N)
        rest = ~certain
        pi[rest] = m * size[rest] / size[rest].sum()
        new = rest & (pi >= 1)
        if not new.any():
            return pi
        certain |= new


def systematic_pps_sample(pop: Population, n: int, rng: np.random.Generator) -> SampleDraw:
    """Randomized systematic sampling with probabilities proportional to 1/w_i.

    Units are put in random order and a systematic grid with a uniform start is
    laid over the cumulated inclusion probabilities, so every unit is included
    with exactly its target probability.
    """
    pi = pps_inclusion_probabilities(pop.pi, n)
    order = rng.permutation(pop.N)
    cum = np.cumsum(pi[order])
    cum *= n / cum[-1]
    points = rng.uniform() + np.arange(n)
    pos = np.searchsorted(cum, points, side="right")
    return SampleDraw(order[pos], pop.N)


def assign_treatment(n: int, plan: AssignmentPlan, rng: np.random.Generator) -> np.ndarray:
    """Random treatment indicators for ``n`` units. Never looks at weights."""
    if n < 2:
        raise DegenerateArm("need at least two units to randomize")
    if plan.mechanism == "complete":
        n1 = plan.treated_count(n)
        t = np.zeros(n, dtype=np.int8)
        t[rng.permutation(n)[:n1]] = 1
        return t
    t = (rng.random(n) < plan.p).astype(np.int8)
    if t.all() or not t.any():
        raise DegenerateArm("Bernoulli assignment left one arm empty")
    return t
