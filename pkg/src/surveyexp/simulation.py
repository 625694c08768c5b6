"""Finite-population Monte Carlo studies of the estimators.

A population is generated once; each replicate then draws a fixed-size sample
with probability proportional to 1/w, randomizes treatment, and records every
requested estimator, its bootstrap SE and the two oracle targets. All
randomness for replicate r comes from the substreams (seed, r, *), so results
do not depend on how replicates are split across worker processes.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .design import (
    AssignmentPlan,
    SamplingPlan,
    assign_treatment,
    replicate_rng,
)
from .errors import DegenerateArm, InvalidInterval, SurveyExpError
from .estimators import EstimatorSpec, evaluate, oracle_nu, oracle_sate
from .model import ExperimentData, Population
from .uncertainty import bootstrap_replicates

ORACLES = ("tau_S", "nu_S")
# substream tag for population generation, disjoint from replicate indices
POPULATION_STREAM = 2**32 - 1
SAMPLERS = {"systematic": "fixed_n_systematic", "sequential": "fixed_n_weighted"}


@dataclass(frozen=True)
class DGPConfig:
    N: int = 10_000
    gamma: float = 1.0
    a: float = 0.25
    b: float = 0.25 + 23.88
    noise_sd: float = 5.0
    effect: str = "heterogeneous"
    constant_effect: float = 30.0

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise SurveyExpError("gamma must lie in [0, 1]")
        if not self.b > self.a > 0:
            raise InvalidInterval(f"need b > a > 0, got a={self.a}, b={self.b}")
        if self.N < 100:
            raise SurveyExpError("population size must be at least 100")
        if self.effect not in ("heterogeneous", "constant"):
            raise SurveyExpError(f"unknown effect type {self.effect!r}")

    @property
    def analytic_tau(self) -> float:
        """Population mean effect implied by uniform shadow weights on (a, b)."""
        if self.effect == "constant":
            return self.constant_effect
        return 20.0 / 3.0 * np.sqrt(self.b - self.a)


@dataclass(frozen=True)
class PopulationFrame:
    w: np.ndarray
    w_shadow: np.ndarray
    y0: np.ndarray
    y1: np.ndarray


def draw_population_frame(cfg: DGPConfig, rng: np.random.Generator) -> PopulationFrame:
    """Weights, shadow weights and potential outcomes for one population.

    Weights and shadow weights are uniform on (a, b), coupled through latent
    normals with correlation gamma. Outcomes depend on the shadow weights only.
    """
    N, g = cfg.N, cfg.gamma
    eps = rng.standard_normal(N)
    eta = rng.standard_normal(N)
    noise = rng.standard_normal(N)
    eps_shadow = g * eps + np.sqrt(1 - g * g) * eta
    span = cfg.b - cfg.a
    w = cfg.a + span * norm.cdf(eps)
    w_shadow = cfg.a + span * norm.cdf(eps_shadow)
    y0 = 120 - 20 * np.sqrt(w_shadow) + cfg.noise_sd * noise
    if cfg.effect == "heterogeneous":
        y1 = y0 + 10 * np.sqrt(cfg.b - w_shadow)
    else:
        y1 = y0 + cfg.constant_effect
    return PopulationFrame(w, w_shadow, y0, y1)


def generate_population(cfg: DGPConfig, rng: np.random.Generator, expected_n: float = 500) -> Population:
    """Population with selection propensities proportional to 1/w summing to ``expected_n``."""
    fr = draw_population_frame(cfg, rng)
    inv = 1 / fr.w
    return Population(fr.y0, fr.y1, expected_n * inv / inv.sum())


@dataclass(frozen=True)
class StudyConfig:
    sample_n: int = 500
    assignment: AssignmentPlan = AssignmentPlan("complete", 0.5)
    reps: int = 10_000
    K: int = 7
    estimators: tuple = ("sate_dm", "double_hajek", "ps_double")
    bootstrap_B: int = 400
    seed: int = 0
    ci_level: float = 0.95
    sampler: str = "systematic"
    threads: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise SurveyExpError("reps must be positive")
        if self.sampler not in SAMPLERS:
            raise SurveyExpError(f"unknown sampler {self.sampler!r}")
        if self.bootstrap_B == 1 or self.bootstrap_B < 0:
            raise SurveyExpError("bootstrap_B must be 0 (off) or at least 2")
        for e in self.estimators:
            EstimatorSpec(e, K=self.K)

    def specs(self) -> list:
        return [EstimatorSpec(e, K=self.K if e.startswith("ps_") else None) for e in self.estimators]


@dataclass(frozen=True)
class EstimatorSummary:
    estimator: str
    mean: float
    bias: float
    se: float
    rmse: float
    boot_se: Optional[float] = None
    coverage: Optional[float] = None


@dataclass(frozen=True)
class SimulationSummary:
    rows: dict
    tau: float
    tau_S_mean: float
    reps: int
    assignment_redraws: int
    bootstrap_redraws: int
    inclusion_counts: np.ndarray = field(repr=False)
    estimates: np.ndarray = field(repr=False)
    boot_se: np.ndarray = field(repr=False)
    oracle: np.ndarray = field(repr=False)
    estimators: tuple = ()

    def __getitem__(self, name: str) -> EstimatorSummary:
        return self.rows[name]

    def mc_se(self, name: str) -> float:
        """Monte Carlo standard error of the estimated mean (and bias)."""
        return self.rows[name].se / np.sqrt(self.reps)

    def table(self) -> list:
        out = []
        for name, r in self.rows.items():
            out.append(
                dict(
                    estimator=name,
                    mean=r.mean,
                    bias=r.bias,
                    se=r.se,
                    rmse=r.rmse,
                    boot_se=r.boot_se,
                    coverage=r.coverage,
                )
            )
        return out


def _summarize(x: np.ndarray, tau: float):
    mean = float(x.mean())
    se = float(x.std(ddof=0))
    return mean, mean - tau, se, float(np.sqrt(np.mean((x - tau) ** 2)))


def _run_chunk(pop: Population, study: StudyConfig, reps: Sequence[int]):
    specs = study.specs()
    plan = SamplingPlan(SAMPLERS[study.sampler], study.sample_n)
    w_pop = pop.w
    m = len(specs)
    est = np.empty((len(reps), m))
    bse = np.full((len(reps), m), np.nan)
    orc = np.empty((len(reps), 2))
    counts = np.zeros(pop.N, dtype=np.int64)
    a_redraws = b_redraws = 0
    for i, r in enumerate(reps):
        draw = plan.draw(pop, replicate_rng(study.seed, r, 0))
        idx = draw.indices
        counts[idx] += 1
        arng = replicate_rng(study.seed, r, 1)
        while True:
            try:
                t = assign_treatment(len(idx), study.assignment, arng)
                break
            except DegenerateArm:
                a_redraws += 1
        y = np.where(t == 1, pop.y1[idx], pop.y0[idx])
        data = ExperimentData(y, t, w_pop[idx])
        orc[i] = oracle_sate(pop, draw), oracle_nu(pop, draw)
        est[i] = [evaluate(s, data, warn=False) for s in specs]
        if study.bootstrap_B:
            reps_b, rd = bootstrap_replicates(data, specs, study.bootstrap_B, replicate_rng(study.seed, r, 2))
            bse[i] = reps_b.std(axis=0, ddof=1)
            b_redraws += rd
    return est, bse, orc, counts, a_redraws, b_redraws


def default_threads() -> int:
    return max(1, int(os.environ.get("SURVEYEXP_THREADS", "1")))


def run_study(pop: Population, study: StudyConfig) -> SimulationSummary:
    """Repeated sample-randomize-estimate cycles against the population mean effect."""
    if study.sample_n >= pop.N:
        raise SurveyExpError("sample_n must be smaller than the population")
    reps = np.arange(study.reps)
    threads = max(1, study.threads)
    if threads == 1:
        parts = [_run_chunk(pop, study, reps)]
    else:
        chunks = np.array_split(reps, threads * 4)
        with ProcessPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_run_chunk, [pop] * len(chunks), [study] * len(chunks), chunks))
    est = np.concatenate([p[0] for p in parts])
    bse = np.concatenate([p[1] for p in parts])
    orc = np.concatenate([p[2] for p in parts])
    counts = np.sum([p[3] for p in parts], axis=0)
    a_red = sum(p[4] for p in parts)
    b_red = sum(p[5] for p in parts)

    tau = pop.tau
    z = norm.ppf(0.5 + study.ci_level / 2)
    rows = {}
    for j, name in enumerate(ORACLES):
        rows[name] = EstimatorSummary(name, *_summarize(orc[:, j], tau))
    for j, name in enumerate(study.estimators):
        boot = cover = None
        if study.bootstrap_B:
            boot = float(bse[:, j].mean())
            cover = float(np.mean(np.abs(est[:, j] - tau) <= z * bse[:, j]))
        rows[name] = EstimatorSummary(name, *_summarize(est[:, j], tau), boot, cover)
    return SimulationSummary(
        rows=rows,
        tau=tau,
        tau_S_mean=float(orc[:, 0].mean()),
        reps=study.reps,
        assignment_redraws=a_red,
        bootstrap_redraws=b_red,
        inclusion_counts=counts,
        estimates=est,
        boot_se=bse,
        oracle=orc,
        estimators=tuple(study.estimators),
    )


@dataclass(frozen=True)
class SweepResult:
    rows: list
    averages: list

    def average(self, gamma: float, estimator: str) -> dict:
        for r in self.averages:
            if r["gamma"] == gamma and r["estimator"] == estimator:
                return r
        raise KeyError((gamma, estimator))


def _derived_seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(map(int, keys))).generate_state(1)[0])


def gamma_sweep(
    dgp: DGPConfig,
    study: StudyConfig,
    gammas: Sequence[float],
    populations_per_gamma: int = 20,
) -> SweepResult:
    """Run a study on several populations for each latent correlation gamma.

    Emits one row per (gamma, population, estimator), including the oracles,
    and per-gamma averages. ``bias_mcse`` of an average combines the Monte
    Carlo errors of its populations.
    """
    from dataclasses import replace

    rows = []
    averages = []
    for gi, g in enumerate(gammas):
        if not 0 <= g <= 1:
            raise SurveyExpError("gammas must lie in [0, 1]")
        per_est: dict = {}
        for pj in range(populations_per_gamma):
            cfg = replace(dgp, gamma=float(g))
            pop = generate_population(cfg, replicate_rng(study.seed, POPULATION_STREAM, gi, pj), study.sample_n)
            sub = replace(study, seed=_derived_seed(study.seed, gi, pj))
            summ = run_study(pop, sub)
            for name, r in summ.rows.items():
                row = dict(
                    gamma=float(g),
                    population=pj,
                    estimator=name,
                    tau=summ.tau,
                    mean=r.mean,
                    bias=r.bias,
                    se=r.se,
                    rmse=r.rmse,
                    mc_se=summ.mc_se(name),
                    boot_se=r.boot_se,
                    coverage=r.coverage,
                )
                rows.append(row)
                per_est.setdefault(name, []).append(row)
        for name, rs in per_est.items():
            P = len(rs)
            averages.append(
                dict(
                    gamma=float(g),
                    estimator=name,
                    bias=float(np.mean([r["bias"] for r in rs])),
                    se=float(np.mean([r["se"] for r in rs])),
                    rmse=float(np.mean([r["rmse"] for r in rs])),
                    bias_mcse=float(np.sqrt(np.sum([r["mc_se"] ** 2 for r in rs])) / P),
                    populations=P,
                )
            )
    return SweepResult(rows, averages)
