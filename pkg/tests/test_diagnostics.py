import numpy as np
import pytest

from surveyexp import (
    BootstrapConfig,
    bootstrap_se,
    ExperimentData,
    Population,
    delta_statistic,
    hajek_bias_oracle,
    hajek_mean,
    poisson_sample,
    qq_points,
    replicate_rng,
    sate_bias_oracle,
)
from surveyexp.diagnostics import ks_band, within_ks_band
from surveyexp.errors import OracleDataMissing, TooFew, ZeroVariance
from surveyexp.simulation import DGPConfig, generate_population

from .fixtures import hajek_bias_population, null_experiments


class TestDelta:
    def test_equal_weights_zero(self):
        rng = np.random.default_rng(0)
        d = ExperimentData(rng.normal(size=30), np.tile([0, 1], 15), np.full(30, 2.0))
        r = delta_statistic(d, BootstrapConfig(B=100))
        assert r.sate_est == pytest.approx(r.hh_est, abs=1e-12)
        assert r.delta == 0

    def test_constant_outcomes_zero(self):
        d = ExperimentData(np.full(10, 3.0), np.tile([0, 1], 5), np.arange(1.0, 11))
        r = delta_statistic(d, BootstrapConfig(B=50))
        assert (r.delta, r.se_diff) == (0, 0)

    def test_sign_and_ratio(self):
        rng = np.random.default_rng(1)
        w = rng.uniform(0.5, 3, 60)
        t = np.tile([0, 1], 30)
        y = 5 * t / w + rng.normal(0, 0.1, 60)  # small weights carry large effects
        r = delta_statistic(ExperimentData(y, t, w), BootstrapConfig(B=200, seed=2))
        assert r.sate_est > r.hh_est and r.delta > 0
        assert r.delta == pytest.approx((r.sate_est - r.hh_est) / r.se_diff)

    def test_paired_se_below_independent(self):
        rng = np.random.default_rng(3)
        w = rng.uniform(0.8, 1.25, 200)
        t = np.tile([0, 1], 100)
        y = rng.normal(size=200) + t
        d = ExperimentData(y, t, w)
        paired = delta_statistic(d, BootstrapConfig(B=400, seed=1)).se_diff
        a = bootstrap_se(d, "sate_dm", BootstrapConfig(B=400, seed=2)).se
        b = bootstrap_se(d, "double_hajek", BootstrapConfig(B=400, seed=3)).se
        assert paired < 0.5 * np.hypot(a, b)

    def test_zero_variance_error(self, monkeypatch):
        import surveyexp.diagnostics as diag

        # replicates that never move while the point estimates differ
        monkeypatch.setattr(diag, "bootstrap_replicates", lambda data, specs, B, rng: (np.ones((B, 2)), 0))
        rng = np.random.default_rng(4)
        d = ExperimentData(rng.normal(size=20), np.tile([0, 1], 10), rng.uniform(1, 2, 20))
        with pytest.raises(ZeroVariance):
            delta_statistic(d, BootstrapConfig(B=50))

    def test_labels_in_row(self):
        d = ExperimentData([1.0, 2, 3, 4], [0, 1, 0, 1], [1, 1, 1, 1])
        row = delta_statistic(d, BootstrapConfig(B=20), group="g1", experiment_id="e7").to_row()
        assert (row["group"], row["experiment_id"]) == ("g1", "e7")

    def test_null_calibration(self):
        deltas = [delta_statistic(d, BootstrapConfig(B=200), rng=replicate_rng(9, i)).delta
                  for i, d in enumerate(null_experiments(200, n=200, seed=11))]
        assert 0.85 <= np.std(deltas, ddof=1) <= 1.15


class TestQQ:
    def test_symmetric(self):
        theo, obs = qq_points([1, -1, 0])
        np.testing.assert_allclose(theo, [-0.9674216, 0, 0.9674216], atol=1e-6)
        np.testing.assert_array_equal(obs, [-1, 0, 1])

    def test_repeated_value(self):
        _, obs = qq_points([2.0] * 5)
        assert (obs == 2).all()

    def test_too_few(self):
        with pytest.raises(TooFew):
            qq_points([1.0])

    def test_normal_draws_inside_band(self):
        x = np.random.default_rng(5).standard_normal(200)
        inside, D, band = within_ks_band(x, 0.99)
        assert inside and D < band

    def test_shifted_draws_outside_band(self):
        x = np.random.default_rng(6).standard_normal(200) + 1
        assert not within_ks_band(x, 0.99)[0]

    def test_band_asymptotics(self):
        # large m: half-width approaches 1.6276/sqrt(m)
        assert ks_band(10_000, 0.99) * 100 == pytest.approx(1.6276, abs=0.01)


class TestBiasOracles:
    def _pop(self, seed=0, N=50):
        rng = np.random.default_rng(seed)
        return Population(rng.normal(size=N), rng.normal(2, 1, size=N), rng.uniform(0.05, 0.5, N))

    def test_sate_zero_cases(self):
        p = self._pop()
        const = Population(p.y0, p.y0 + 4, p.pi)
        assert sate_bias_oracle(const) == pytest.approx(0, abs=1e-12)
        eq = Population(p.y0, p.y1, np.full(p.N, 0.2))
        assert sate_bias_oracle(eq) == pytest.approx(0, abs=1e-12)

    def test_sate_shift_invariance(self):
        p = self._pop(1)
        shifted = Population(p.y0, p.y1 + 17.5, p.pi)
        assert sate_bias_oracle(shifted) == pytest.approx(sate_bias_oracle(p), abs=1e-12)

    def test_hajek_zero_cases(self):
        p = self._pop(2)
        assert hajek_bias_oracle(Population(p.y0, p.y1, np.full(p.N, 0.3))) == pytest.approx(0, abs=1e-15)
        assert hajek_bias_oracle(Population(np.full(p.N, 2.0), p.y1, p.pi)) == pytest.approx(0, abs=1e-15)

    def test_hajek_scaling(self):
        p = self._pop(3)
        assert hajek_bias_oracle(p, 20) == 2 * hajek_bias_oracle(p, 40)
        assert hajek_bias_oracle(p) == pytest.approx(hajek_bias_oracle(p, p.pi.sum()))

    def test_hajek_monte_carlo(self):
        pop = hajek_bias_population(500)
        rng = np.random.default_rng(7)
        est = []
        for _ in range(10_000):
            idx = poisson_sample(pop, rng).indices
            est.append(hajek_mean(pop.y0[idx], pop.w[idx]))
        est = np.array(est)
        bias = est.mean() - pop.y0.mean()
        mcse = est.std(ddof=1) / np.sqrt(len(est))
        assert abs(bias - hajek_bias_oracle(pop)) < 3 * mcse

    def test_missing_population(self):
        with pytest.raises(OracleDataMissing):
            sate_bias_oracle(None)
        with pytest.raises(OracleDataMissing):
            hajek_bias_oracle(None)

    @pytest.mark.xfail(strict=True, reason="calibrated interval gives a larger oracle bias than the reported 7.77")
    def test_scenario_a_sate_bias_reference(self):
        pop = generate_population(DGPConfig(), replicate_rng(0, 2**32 - 1), 500)
        assert sate_bias_oracle(pop) == pytest.approx(7.77, rel=0.15)
