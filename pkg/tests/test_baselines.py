import math

import numpy as np
import pytest
from scipy import integrate

from hawkes_horizon import baselines as bl
from hawkes_horizon.features import DAY, HOUR, FeatureSchema
from hawkes_horizon.forecaster import SamplingPolicy, UnsupportedHorizon, build_training_set, fit
from hawkes_horizon.hawkes_core import INF, Cascade, DomainError, PowerLawKernel, residual_mass
from hawkes_horizon.simulation import Heterogeneity, make_rng, simulate_batch

K = bl.SEISMIC_KERNEL


class TestRpp:
    def test_predict_examples(self):
        p = bl.RppParams(0.1, math.log(3600.0), 1.0)
        assert bl.rpp_predict(p, 12.0, 500.0, 500.0) == 12.0
        s = 3600.0 * math.exp(-0.5)
        t = 3600.0 * math.exp(0.5)
        gap = float(p.cdf(t) - p.cdf(s))
        assert bl.rpp_predict(p, 12.0, s, t) == pytest.approx(12.0 * math.exp(0.1 * gap))
        assert bl.rpp_predict(p, 12.0, s, INF) == pytest.approx(12.0 * math.exp(0.1 * (1 - float(p.cdf(s)))))
        with pytest.raises(DomainError):
            bl.rpp_predict(p, 1.0, 5.0, 4.0)

    def test_predict_monotone_in_t(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = bl.RppParams(rng.uniform(0, 5), rng.uniform(0, 12), rng.uniform(0.2, 3))
            s = rng.uniform(0, 1e5)
            ts = np.sort(s + rng.exponential(1e5, 20))
            out = bl.rpp_predict(p, 7.0, s, np.append(ts, INF))
            assert out[0] >= 7.0
            assert np.all(np.diff(out) >= 0)

    def test_needs_two_events(self):
        with pytest.raises(DomainError):
            bl.rpp_fit(Cascade("x", [10.0]), 100.0)

    def test_loglik_matches_fit_objective(self):
        p = bl.RppParams(5.0, math.log(3000.0), 1.2)
        c = bl.rpp_simulate(p, make_rng(3), t1=30.0)
        s = float(c.times[-1])
        fitted, info = bl.rpp_fit(c, s)
        assert info.loglik == pytest.approx(bl.rpp_loglik(fitted, c.times, s), rel=1e-9)
        assert info.loglik >= bl.rpp_loglik(p, c.times, s) - 1e-6

    @pytest.mark.slow
    def test_recovers_p(self):
        truth = bl.RppParams(6.0, math.log(3000.0), 1.0)
        rel = []
        for r in range(200):
            c = bl.rpp_simulate(truth, make_rng(4, r), t1=60.0)
            if len(c) < 3:
                continue
            fitted, _ = bl.rpp_fit(c, float(c.times[-1]) * 1.01)
            rel.append(abs(fitted.p - truth.p) / truth.p)
        assert np.median(rel) <= 0.15

    @pytest.mark.slow
    def test_fit_cost_grows_linearly(self):
        import time
        # below ~1e4 events the optimizer's fixed per-iteration overhead dominates
        sizes, times = [10_000, 100_000, 1_000_000], []
        for n in sizes:
            c = Cascade("x", np.sort(make_rng(5, n).lognormal(8, 1.5, n)))
            t0 = time.perf_counter()
            bl.rpp_fit(c, float(c.times[-1]))
            times.append(time.perf_counter() - t0)
        assert np.polyfit(np.log(sizes), np.log(times), 1)[0] > 0.8


class TestSeismic:
    def test_single_event_flat_part(self):
        c = Cascade("x", [0.0])
        assert bl.seismic_estimate_p(c, 200.0) == pytest.approx(1 / (K.phi0 * 200.0))

    def test_many_events_at_zero(self):
        st = bl.SeismicState(d_const=3.0)
        c = Cascade("x", np.zeros(7))
        assert bl.seismic_estimate_p(c, 250.0, st) == pytest.approx(1 / (K.phi0 * 250.0 * 3.0))

    def test_zero_exposure(self):
        with pytest.raises(DomainError):
            bl.seismic_estimate_p(Cascade("x", [5.0]), 5.0)

    def test_estimate_vs_quadrature(self):
        t = np.sort(make_rng(6).uniform(0, 20_000, 60))
        c = Cascade("x", t)
        s = 20_000.0
        k = PowerLawKernel(K)
        den = sum(integrate.quad(k.value, 0, s - ti, points=[K.tau_cut] if s - ti > K.tau_cut else None,
                                 limit=200, epsabs=0, epsrel=1e-12)[0] for ti in t)
        assert bl.seismic_estimate_p(c, s) == pytest.approx(60 / den, rel=1e-6)

    def test_triangular_exposure_vs_quadrature(self):
        t = np.sort(make_rng(7).uniform(0, 5000, 25))
        s, w = 5000.0, 1500.0
        k = PowerLawKernel(K)
        got = bl._triangular_exposure(t, s, w, K)
        for g, ti in zip(got, t):
            lo = max(s - w, ti)
            ref, _ = integrate.quad(lambda u: (u - s + w) / w * k.value(u - ti), lo, s,
                                    points=[ti + K.tau_cut] if lo < ti + K.tau_cut < s else None,
                                    epsabs=0, epsrel=1e-12, limit=200)
            assert g == pytest.approx(ref, rel=1e-8, abs=1e-15)

    def test_zero_p(self):
        c = Cascade("x", [1.0, 2.0])
        assert bl.seismic_predict(c, 10.0, 0.0) == 2.0

    def test_predict_equals_residual_over_one_minus_mu(self):
        # with the true infectiousness the rule is N(s) + Lambda(s, inf) / (1 - mu)
        st = bl.SeismicState(max_branching=0.99)
        p = 0.5 / PowerLawKernel(K).total()
        t = np.sort(make_rng(8).uniform(0, 3600, 40))
        c = Cascade("x", t, np.full(40, p))
        s = 3600.0
        lam = residual_mass(c, PowerLawKernel(K), lambda x: 0.0, s, INF)
        out = bl.seismic_predict(c, s, p, state=st, detail=True)
        assert not out.capped and out.branching == pytest.approx(0.5)
        assert out.value == pytest.approx(40 + lam / 0.5, rel=1e-12)

    def test_cap(self):
        c = Cascade("x", np.linspace(0, 100, 30))
        out = bl.seismic_predict(c, 100.0, 10.0, detail=True)
        assert out.capped and np.isfinite(out.value)

    def test_smoothing_constant_rate(self):
        # steady stream: smoothed and plain estimates both finite and positive
        c = Cascade("x", np.arange(0, 20_000, 10.0))
        a = bl.seismic_estimate_p(c, 20_000.0)
        b = bl.seismic_estimate_p(c, 20_000.0, bl.SeismicState(smoothing=True))
        assert a > 0 and b > 0


@pytest.fixture(scope="module")
def ts():
    data = simulate_batch(Heterogeneity(max_events=20_000), 150, seed=5)
    return build_training_set(data, (6 * HOUR, DAY, 4 * DAY), FeatureSchema(n_static=5),
                              SamplingPolicy(seed=5))


class TestLearners:
    def test_pb_matches_hwk_at_trained_horizon(self, ts):
        hyper = {"n_trees": 30}
        pb = bl.train_pb(ts, (DAY,), hyper, seed=1)
        hwk = fit(ts, (DAY,), hyperparams=hyper, seed=1)
        a = pb.predict(ts.X, ts.n_s, DAY)
        b = hwk.predict(ts.X, ts.n_s, DAY)
        assert np.array_equal(a, b)

    def test_pb_unseen_horizon(self, ts):
        pb = bl.train_pb(ts, (DAY,), {"n_trees": 5})
        with pytest.raises(UnsupportedHorizon):
            pb.predict(ts.X[0], 1.0, 2 * DAY)

    def test_hf_inflation_and_range(self, ts):
        hs = (6 * HOUR, DAY, 4 * DAY)
        X, y = bl.hf_design(ts, hs)
        assert X.shape == (3 * len(ts), ts.X.shape[1] + 1) and y.size == 3 * len(ts)
        hf = bl.train_hf(ts, hs, {"n_trees": 10})
        assert hf.inflation == 3
        assert np.isfinite(hf.predict(ts.X[0], 2.0, 2 * DAY))
        with pytest.raises(UnsupportedHorizon):
            hf.predict(ts.X[0], 2.0, INF)
