import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from epijoint.config import Calendar, ParamSet
from epijoint.observation import (BackgroundModel, DetectionSchedule, gp_rates, loglik_binomial_detection,
                                  loglik_gp, loglik_poisson_series, loglik_virology,
                                  simulate_observations, virology_probability, weekly_aggregate)
from epijoint.severity import LatentPath


def path_of(xh, xic, xf=None):
    n = len(xh)
    z = np.zeros(n, dtype=np.int64)
    return LatentPath(z, np.asarray(xh), z, np.asarray(xic), z,
                      z if xf is None else np.asarray(xf))


class TestWeeklyAggregate:
    def test_ones(self):
        assert weekly_aggregate(np.ones(21), Calendar(21)).tolist() == [7, 7, 7]

    def test_impulse(self):
        d = np.zeros(21)
        d[8] = 1
        assert weekly_aggregate(d, Calendar(21)).tolist() == [0, 1, 0]

    @given(st.lists(st.integers(0, 1000), min_size=1, max_size=100))
    def test_conservation(self, daily):
        w = weekly_aggregate(np.array(daily), Calendar(len(daily)))
        assert w.sum() == sum(daily)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            weekly_aggregate(np.ones(10), Calendar(14))


class TestDensities:
    def test_binomial_certain(self):
        assert loglik_binomial_detection([4, 0, 2], [4, 0, 2], 1.0) == 0.0

    def test_binomial_impossible(self):
        assert loglik_binomial_detection([3, 5], [4, 4], 0.5) == -math.inf

    def test_binomial_value(self):
        v = loglik_binomial_detection([3], [10], 0.3)
        assert v == pytest.approx(math.log(0.26682793), abs=1e-8)
        assert v == pytest.approx(math.log(math.comb(10, 3)) + 3 * math.log(0.3)
                                  + 7 * math.log(0.7), abs=1e-12)

    @given(st.integers(0, 1000), st.integers(0, 1000), st.floats(0.001, 0.999))
    def test_binomial_oracle(self, x, y, p):
        y = min(x, y)
        assert loglik_binomial_detection([y], [x], p) == pytest.approx(
            stats.binom.logpmf(y, x, p), abs=1e-10)

    def test_binomial_edge_probabilities(self):
        assert loglik_binomial_detection([0], [5], 0.0) == 0.0
        assert loglik_binomial_detection([1], [5], 0.0) == -math.inf
        assert loglik_binomial_detection([5], [5], 1.0) == 0.0

    def test_poisson(self):
        assert loglik_poisson_series([0, 0], [0, 0]) == 0.0
        assert loglik_poisson_series([2], [2]) == pytest.approx(math.log(2 * math.exp(-2)))
        assert loglik_poisson_series([1], [0]) == -math.inf
        with pytest.raises(ValueError):
            loglik_poisson_series([1], [-1])

    @given(st.integers(0, 1000), st.floats(1e-3, 1e3))
    def test_poisson_oracle(self, y, lam):
        assert loglik_poisson_series([y], [lam]) == pytest.approx(stats.poisson.logpmf(y, lam),
                                                                   abs=1e-10)


class TestSimulateObservations:
    def test_full_ascertainment(self, rng):
        cal = Calendar(14)
        xh = rng.poisson(3, 14)
        xic = rng.poisson(1, 14)
        sched = DetectionSchedule(np.ones(2), np.ones(2), 1.0)
        bg = BackgroundModel(enabled=False)
        obs = simulate_observations(path_of(xh, xic, xh), sched, bg, cal, rng,
                                    streams=("hospital", "icu", "gp"))
        assert obs.y_h.tolist() == weekly_aggregate(xh, cal).tolist()
        assert obs.y_ic.tolist() == weekly_aggregate(xic, cal).tolist()
        assert obs.y_g.tolist() == xh.tolist()

    def test_zero_path(self, rng):
        cal = Calendar(21)
        z = np.zeros(21, dtype=int)
        sched = DetectionSchedule(np.full(3, 0.5), np.full(3, 0.5), 0.5)
        obs = simulate_observations(path_of(z, z, z), sched, BackgroundModel(enabled=False), cal,
                                    rng, lam_f=np.zeros(21), streams=("hospital", "icu", "gp",
                                                                      "virology"))
        assert not obs.y_h.any() and not obs.y_ic.any() and not obs.y_g.any()
        assert not obs.virology[:, 2].any()

    def test_detection_moment(self, rng):
        cal = Calendar(7)
        xh = np.zeros(7, dtype=int)
        xh[0] = 100
        sched = DetectionSchedule(np.array([0.3]), np.array([0.5]))
        bg = BackgroundModel(enabled=False)
        ys = [simulate_observations(path_of(xh, xh * 0), sched, bg, cal, rng).y_h[0]
              for _ in range(100_000)]
        assert abs(np.mean(ys) - 30) < 3 * math.sqrt(100 * 0.21 / 100_000)

    def test_virology_needs_rates(self, rng):
        z = np.zeros(7, dtype=int)
        with pytest.raises(ValueError):
            simulate_observations(path_of(z, z), DetectionSchedule(np.ones(1), np.ones(1)),
                                  BackgroundModel(), Calendar(7), rng, streams=("virology",))


class TestBackgroundAndVirology:
    def test_background_positive(self):
        bg = BackgroundModel(1.0, 0.5, -0.3)
        w = bg.weekly_rate(60)
        assert np.all(w > 0)
        t = np.arange(60)
        assert np.allclose(w, np.exp(1 + 0.5 * np.sin(2 * np.pi * t / 52)
                                     - 0.3 * np.cos(2 * np.pi * t / 52)))
        assert np.allclose(bg.daily_rate(Calendar(14)), np.repeat(w[:2] / 7, 7))

    @given(st.lists(st.floats(0, 1e4), min_size=14, max_size=14), st.floats(-5, 5))
    def test_virology_probability_range(self, lam, a0):
        p = virology_probability(np.array(lam), BackgroundModel(a0), Calendar(14))
        assert np.all((p >= 0) & (p <= 1))

    def test_virology_limit(self):
        cal = Calendar(14)
        p = virology_probability(np.full(14, 1e-12), BackgroundModel(2.0), cal)
        assert np.all(p < 1e-10)

    def test_gp_background_only(self):
        cal = Calendar(14, start_dow=3)
        p = ParamSet(theta_f=0.0, zeta_g=0.5, dow_effect=(1, 1, 1, 1, 1, 0.5, 0.5),
                     bg_a0=3.0, bg_a1=0.2)
        bg = BackgroundModel.from_params(p)
        y = np.arange(14) % 5
        lam = p.zeta_g_daily(cal) * bg.daily_rate(cal)
        assert np.allclose(gp_rates(np.ones(14) * 100, p, cal, bg), lam)
        assert loglik_gp(y, np.ones(14) * 100, p, cal, bg) == pytest.approx(
            stats.poisson.logpmf(y, lam).sum(), abs=1e-10)

    def test_virology_loglik(self):
        cal = Calendar(14)
        p = ParamSet(theta_f=0.1, bg_a0=2.0)
        xi0 = np.full(14, 50.0)
        bg = BackgroundModel.from_params(p)
        vir = np.array([[0, 20, 5], [1, 10, 9]])
        lam_f = p.theta_f * np.convolve(xi0, p.delay_inf_to_gp.probs)[:14]
        prob = virology_probability(lam_f, bg, cal)
        expect = stats.binom.logpmf([5, 9], [20, 10], prob).sum()
        assert loglik_virology(vir, xi0, p, cal, bg) == pytest.approx(expect, abs=1e-10)

    def test_dow_bound(self):
        with pytest.raises(ValueError):
            DetectionSchedule(np.ones(1), np.ones(1), 0.9, (2,) * 7).zeta_g(Calendar(7))
