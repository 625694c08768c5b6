"""Acceptance criteria 1-7. Each test prints one PASS/FAIL line with its runtime.

Seeds are fixed here once; they are not tuned per outcome.
"""

import time

import numpy as np
import pytest

from surveyexp import (
    BootstrapConfig,
    EstimatorSpec,
    ExperimentData,
    Population,
    SampleDraw,
    delta_statistic,
    double_hajek,
    evaluate,
    hajek_bias_oracle,
    hajek_mean,
    oracle_nu,
    oracle_sate,
    poisson_sample,
    replicate_rng,
    sate_bias_oracle,
    sate_diff_means,
    single_hajek,
)
from surveyexp.diagnostics import within_ks_band
from surveyexp.simulation import POPULATION_STREAM, DGPConfig, StudyConfig, gamma_sweep, generate_population, run_study

from .fixtures import enumeration_populations, hajek_bias_population, null_experiments
from .oracles import assignments, inclusion, successive_design, wls_slope

pytestmark = pytest.mark.acceptance

SEED_HAJEK = 101
SEED_B = 202
SEED_A = 303
SEED_C = 404
SEED_NULL = 505


def _random_experiment(rng, n):
    y = rng.normal(rng.uniform(-5, 5), rng.uniform(0.5, 5), n)
    t = np.zeros(n, dtype=int)
    t[rng.choice(n, rng.integers(2, n - 1), replace=False)] = 1
    w = np.exp(rng.normal(0, 1, n))
    return ExperimentData(y, t, w)


def test_c1_exact_identities(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    eq = k1 = wls = True
    worst = 0.0
    for _ in range(100):
        d = _random_experiment(rng, int(rng.integers(6, 200)))
        de = ExperimentData(d.y, d.t, np.full(d.n, 2.5))
        eq &= abs(double_hajek(de) - sate_diff_means(de)) <= 1e-12
        k1 &= abs(evaluate(EstimatorSpec("ps_double", K=1), d) - double_hajek(d)) <= 1e-12
        ref = wls_slope(d.y, d.t, d.w)
        rel = abs(double_hajek(d) - ref) / max(abs(ref), 1e-300)
        worst = max(worst, rel)
        wls &= rel <= 1e-9
    checks = acceptance(
        "C1 exact identities",
        {"equal weights: hh = sate": eq, "K=1: ps = hh": k1, f"hh = WLS (worst rel {worst:.1e})": wls},
        time.perf_counter() - t0,
        5,
    )
    assert all(checks.values()), checks


def test_c2_enumeration(acceptance):
    t0 = time.perf_counter()
    worst = {"sate": 0.0, "single": 0.0, "bias": 0.0}
    for y0, y1, size, n in enumeration_populations():
        design = successive_design(size, n)
        pi = inclusion(design, len(size))
        pop = Population(y0, y1, pi)
        n1 = n // 2
        exp_tau_s = 0.0
        for s, prob in design.items():
            idx = np.array(s)
            draw = SampleDraw(idx, N=pop.N)
            w = pop.w[idx]
            sd, sh = [], []
            for t in assignments(n, n1):
                d = ExperimentData(np.where(t == 1, y1[idx], y0[idx]), t, w)
                sd.append(sate_diff_means(d))
                sh.append(single_hajek(d))
            worst["sate"] = max(worst["sate"], abs(np.mean(sd) - oracle_sate(pop, draw)))
            worst["single"] = max(worst["single"], abs(np.mean(sh) - oracle_nu(pop, draw)))
            exp_tau_s += prob * oracle_sate(pop, draw)
        worst["bias"] = max(worst["bias"], abs((exp_tau_s - pop.tau) - sate_bias_oracle(pop)))
    checks = acceptance(
        "C2 enumeration unbiasedness",
        {
            f"E[sate_dm] = tau_S ({worst['sate']:.1e})": worst["sate"] <= 1e-10,
            f"E[single_hajek] = nu_S ({worst['single']:.1e})": worst["single"] <= 1e-10,
            f"E[tau_S] - tau = bias oracle ({worst['bias']:.1e})": worst["bias"] <= 1e-10,
        },
        time.perf_counter() - t0,
        30,
    )
    assert all(checks.values()), checks


def _hajek_bias(expected_n, rng, draws=50_000):
    pop = hajek_bias_population(expected_n)
    y, w = pop.y0, pop.w
    est = np.empty(draws)
    for r in range(draws):
        idx = poisson_sample(pop, rng).indices
        est[r] = hajek_mean(y[idx], w[idx])
    bias = est.mean() - y.mean()
    return bias, est.std(ddof=1) / np.sqrt(draws), hajek_bias_oracle(pop)


def test_c3_hajek_bias(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED_HAJEK)
    b50, se50, o50 = _hajek_bias(50, rng)
    b500, se500, o500 = _hajek_bias(500, rng)
    ratio = b50 / b500
    checks = acceptance(
        "C3 Hajek mean bias",
        {
            f"E[n]=50: {b50:.4f} vs {o50:.4f} (3 MC SE = {3 * se50:.4f})": abs(b50 - o50) < 3 * se50,
            f"E[n]=500: {b500:.5f} vs {o500:.5f} (3 MC SE = {3 * se500:.5f})": abs(b500 - o500) < 3 * se500,
            f"bias ratio {ratio:.2f} within 10 +- 20%": 8 <= ratio <= 12,
        },
        time.perf_counter() - t0,
        60,
    )
    assert all(checks.values()), checks


def _table_study(effect, seed):
    cfg = DGPConfig(effect=effect)
    pop = generate_population(cfg, replicate_rng(seed, POPULATION_STREAM), 500)
    study = StudyConfig(sample_n=500, reps=2000, K=7, bootstrap_B=400, seed=seed)
    return pop, run_study(pop, study)


def test_c4_scenario_b(acceptance):
    t0 = time.perf_counter()
    pop, s = _table_study("constant", SEED_B)
    checks = {}
    for name in ("sate_dm", "double_hajek", "ps_double"):
        r = s[name]
        checks[f"{name} |bias| {abs(r.bias):.3f} < 4 MC SE {4 * s.mc_se(name):.3f}"] = abs(r.bias) < 4 * s.mc_se(name)
        checks[f"{name} coverage {100 * r.coverage:.1f}% in [93.5, 96.5]"] = 0.935 <= r.coverage <= 0.965
    checks[f"SE(hh) {s['double_hajek'].se:.2f} > SE(sate) {s['sate_dm'].se:.2f}"] = s["double_hajek"].se > s["sate_dm"].se
    checks = acceptance("C4 scenario B", checks, time.perf_counter() - t0, 180)
    assert all(checks.values()), checks


def test_c5_scenario_a(acceptance):
    t0 = time.perf_counter()
    pop, s = _table_study("heterogeneous", SEED_A)
    oracle = sate_bias_oracle(pop)
    sate, hh, ps = s["sate_dm"], s["double_hajek"], s["ps_double"]
    checks = {
        f"tau {s.tau:.2f} within 1% of 32.58": abs(s.tau - 32.58) <= 0.01 * 32.58,
        f"SATE bias {sate.bias:.2f} positive, within 15% of oracle {oracle:.2f}": sate.bias > 0
        and abs(sate.bias - oracle) <= 0.15 * abs(oracle),
        f"coverage(sate) {100 * sate.coverage:.1f}% < 50%": sate.coverage < 0.5,
        f"coverage(hh) {100 * hh.coverage:.1f}% in [93, 97]": 0.93 <= hh.coverage <= 0.97,
        f"coverage(ps) {100 * ps.coverage:.1f}% in [93, 97]": 0.93 <= ps.coverage <= 0.97,
        f"SE(ps)/SE(hh) {ps.se / hh.se:.3f} < 0.85": ps.se / hh.se < 0.85,
        f"bootSE(hh) {hh.boot_se:.2f} within 10% of SE {hh.se:.2f}": abs(hh.boot_se / hh.se - 1) <= 0.10,
    }
    checks = acceptance("C5 scenario A", checks, time.perf_counter() - t0, 600)
    assert all(checks.values()), checks


def test_c6_gamma_sweep(acceptance):
    t0 = time.perf_counter()
    gammas = [0.0, 0.25, 0.5, 0.75, 1.0]
    study = StudyConfig(sample_n=500, reps=500, K=7, bootstrap_B=0, seed=SEED_C)
    res = gamma_sweep(DGPConfig(), study, gammas, populations_per_gamma=5)

    def avg(g, e):
        return res.average(g, e)

    checks = {}
    for e in ("double_hajek", "ps_double"):
        worst = max(abs(avg(g, e)["bias"]) / avg(g, e)["bias_mcse"] for g in gammas)
        checks[f"|bias({e})| within 1 MC SE (worst {worst:.2f} MC SE)"] = worst < 1
    steps = [
        (avg(b, "sate_dm")["bias"] - avg(a, "sate_dm")["bias"])
        / np.hypot(avg(a, "sate_dm")["bias_mcse"], avg(b, "sate_dm")["bias_mcse"])
        for a, b in zip(gammas, gammas[1:])
    ]
    checks[f"bias(sate) nondecreasing within 1 MC SE (min step {min(steps):.2f} MC SE)"] = min(steps) >= -1
    for e in ("sate_dm", "double_hajek"):
        ses = np.array([avg(g, e)["se"] for g in gammas])
        spread = (ses.max() - ses.min()) / ses.mean()
        checks[f"SE({e}) spread {100 * spread:.1f}% < 10%"] = spread < 0.10
    r0 = avg(0.0, "ps_double")["se"] / avg(0.0, "double_hajek")["se"]
    r1 = avg(1.0, "ps_double")["se"] / avg(1.0, "double_hajek")["se"]
    checks[f"SE(ps)/SE(hh) at gamma=0 {r0:.3f} within 5%"] = abs(r0 - 1) <= 0.05
    checks[f"SE(ps)/SE(hh) at gamma=1 {r1:.3f} <= 0.85"] = r1 <= 0.85
    rs, rh = avg(1.0, "sate_dm")["rmse"], avg(1.0, "double_hajek")["rmse"]
    checks[f"RMSE(sate) {rs:.2f} > RMSE(hh) {rh:.2f} at gamma=1"] = rs > rh
    checks = acceptance("C6 gamma sweep", checks, time.perf_counter() - t0, 900)
    assert all(checks.values()), checks


def test_c7_null_calibration(acceptance):
    t0 = time.perf_counter()
    cfg = BootstrapConfig(B=400)
    deltas = np.array([
        delta_statistic(d, cfg, rng=replicate_rng(SEED_NULL, i)).delta
        for i, d in enumerate(null_experiments(200, n=500, seed=SEED_NULL))
    ])
    sd = deltas.std(ddof=1)
    inside, D, band = within_ks_band(deltas, 0.99)
    checks = acceptance(
        "C7 null calibration",
        {f"sd(delta) {sd:.3f} in [0.85, 1.15]": 0.85 <= sd <= 1.15, f"KS {D:.3f} within 99% band {band:.3f}": inside},
        time.perf_counter() - t0,
        300,
    )
    assert all(checks.values()), checks
