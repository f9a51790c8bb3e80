import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rade.simulation import (
    DEFAULT_DOMAINS,
    TRAFFIC_MEAN,
    AnalyticDomainModel,
    CorruptionConfig,
    TrafficProcess,
    acceptance_prob,
    acceptance_prob_array,
    feedback,
    sample_arrivals,
    sample_request,
    traffic_factor,
)
from rade.slo import SloVector

models = st.builds(AnalyticDomainModel, st.floats(0.05, 5), st.floats(1, 100), st.floats(0.1, 5))
taus = st.floats(0, 300)
thetas = st.floats(0, 3)
lams = st.floats(0.1, 1.0)


def test_traffic_factor_range_and_shape():
    proc = TrafficProcess(400, 0.5)
    lam = np.array([traffic_factor(proc, t) for t in range(400)])
    assert lam.min() >= 0.1 - 1e-12 and lam.max() <= 1.0 + 1e-12
    assert traffic_factor(proc, 0) == pytest.approx(0.55)
    assert traffic_factor(proc, 100) == pytest.approx(1.0)
    assert traffic_factor(proc, 300) == pytest.approx(0.1)
    assert lam.mean() == pytest.approx(TRAFFIC_MEAN, abs=1e-12)
    with pytest.raises(ValueError):
        traffic_factor(proc, 400)


def test_acceptance_formula():
    m = AnalyticDomainModel(1.0, 35.0, 2.0)
    s = SloVector(35.0, 2.0)
    expected = (1 - math.exp(-1)) * math.exp(-1)
    assert acceptance_prob(m, s, 1.0) == pytest.approx(expected, rel=1e-14)
    assert acceptance_prob(m, SloVector(0, 0.5), 0.5) == 0.0
    with pytest.raises(ValueError):
        acceptance_prob(m, s, 0.0)


@given(models, taus, taus, thetas, lams)
def test_monotone_in_delay(m, t1, t2, th, lam):
    lo, hi = sorted((t1, t2))
    assert acceptance_prob(m, SloVector(lo, th), lam) <= acceptance_prob(m, SloVector(hi, th), lam)


@given(models, taus, thetas, thetas, lams)
def test_monotone_in_throughput(m, t, th1, th2, lam):
    lo, hi = sorted((th1, th2))
    assert acceptance_prob(m, SloVector(t, hi), lam) <= acceptance_prob(m, SloVector(t, lo), lam)


@given(models, taus, thetas, lams, lams)
def test_monotone_in_load(m, t, th, l1, l2):
    lo, hi = sorted((l1, l2))
    assert acceptance_prob(m, SloVector(t, th), hi) <= acceptance_prob(m, SloVector(t, th), lo)


@given(st.floats(0.05, 5), st.floats(0.05, 5), taus, thetas, lams)
def test_monotone_in_alpha(a1, a2, t, th, lam):
    lo, hi = sorted((a1, a2))
    s = SloVector(t, th)
    assert acceptance_prob(AnalyticDomainModel(lo), s, lam) <= acceptance_prob(AnalyticDomainModel(hi), s, lam)


@given(models, taus, thetas, lams)
def test_probability_range(m, t, th, lam):
    p = acceptance_prob(m, SloVector(t, th), lam)
    assert 0.0 <= p <= 1.0
    assert p < 1.0 or t > 0


def test_vectorised_matches_scalar():
    m = DEFAULT_DOMAINS[2]
    tau = np.linspace(0, 100, 11)
    got = acceptance_prob_array(m, tau, 0.45, 0.7)
    want = [acceptance_prob(m, SloVector(t, 0.45), 0.7) for t in tau]
    np.testing.assert_allclose(got, want, rtol=1e-15)


def test_full_corruption_always_rejects(rng):
    m = AnalyticDomainModel()
    for _ in range(200):
        accepted, corrupted = feedback(m, SloVector(1e6, 0), 0.5, CorruptionConfig(1.0), rng)
        assert not accepted and corrupted


def test_certain_acceptance(rng):
    m = AnalyticDomainModel()
    assert all(feedback(m, SloVector(1e6, 0.0), 0.5, CorruptionConfig(0.0), rng)[0] for _ in range(200))


def test_corruption_frequency(rng):
    m = AnalyticDomainModel()
    flags = [feedback(m, SloVector(30, 0.5), 0.5, CorruptionConfig(0.3), rng)[1] for _ in range(100_000)]
    assert abs(np.mean(flags) - 0.3) < 0.01 * 0.3 * 10  # within 1 percentage point
    assert abs(np.mean(flags) - 0.3) < 0.01


def test_feedback_marginal(rng):
    m = DEFAULT_DOMAINS[0]
    s = SloVector(25, 0.5)
    p = acceptance_prob(m, s, 0.6)
    n = 20_000
    k = sum(feedback(m, s, 0.6, CorruptionConfig(0.0), rng)[0] for _ in range(n))
    assert abs(k / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_arrivals_mean_matches_rate():
    proc = TrafficProcess(400, 0.5)
    total = 0
    reps = 40
    for r in range(reps):
        rng = np.random.default_rng(r)
        total += sum(sample_arrivals(proc, t, rng) for t in range(400))
    assert total / (reps * 400) == pytest.approx(0.5, rel=0.02)


def test_request_ranges(rng):
    for _ in range(500):
        s = sample_request(rng)
        assert 90 <= s.delay_ms <= 110 and 0.4 <= s.throughput_gbps <= 0.6


@pytest.mark.parametrize("kwargs", [dict(alpha=0), dict(tau_ref_ms=-1), dict(theta_ref_gbps=0)])
def test_model_validation(kwargs):
    with pytest.raises(ValueError):
        AnalyticDomainModel(**kwargs)
