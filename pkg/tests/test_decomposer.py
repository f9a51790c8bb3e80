import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rade.decomposer import (
    DecomposerConfig,
    decompose,
    decompose_opt,
    decompose_random,
    grid_compositions,
)
from rade.risk_model import MonotoneRiskClassifier, forward, init_params
from rade.simulation import DEFAULT_DOMAINS, AnalyticDomainModel, acceptance_prob
from rade.slo import SloVector, is_valid_for


def brute_force(prob_fns, target, G, floor=1e-9):
    """Enumerate every grid split in lexicographic order; keep the first strict maximum."""
    D = len(prob_fns)
    step = target.delay_ms / G
    best, best_obj = None, -math.inf
    for ks in itertools.product(range(G + 1), repeat=D - 1):
        if sum(ks) > G:
            continue
        ks = ks + (G - sum(ks),)
        obj = sum(math.log(max(fn(k * step), floor)) for fn, k in zip(prob_fns, ks))
        if obj > best_obj:
            best, best_obj = ks, obj
    return best, best_obj


def learned_fn(p, theta):
    return lambda tau: forward(p, SloVector(tau, theta))


def test_grid_compositions_are_lexicographic():
    comps = grid_compositions(4, 3)
    assert len(comps) == math.comb(4 + 2, 2)
    assert np.all(comps.sum(axis=1) == 4)
    rows = [tuple(r) for r in comps]
    assert rows == sorted(rows)


def test_identical_concave_models_split_equally():
    def f(delays, theta):
        return 1.0 - np.exp(-np.asarray(delays) / 30.0)

    dec, _ = decompose([f] * 3, SloVector(99, 0.5), DecomposerConfig(grid_divisions=99, refine_iters=0))
    assert dec.delays == (33.0, 33.0, 33.0)


def test_single_domain_gets_everything(params):
    dec, prob = decompose([params], SloVector(100, 0.5))
    assert dec.delays == (100.0,)
    assert prob == pytest.approx(forward(params, SloVector(100, 0.5)))


def test_zero_delay_target(params):
    dec, _ = decompose([params] * 3, SloVector(0, 0.5))
    assert dec.delays == (0.0, 0.0, 0.0)


def test_invalid_inputs(params):
    with pytest.raises(ValueError):
        decompose([], SloVector(10, 0.5))
    with pytest.raises(TypeError):
        decompose([params], (10, 0.5))


def test_grid_search_matches_brute_force(rng):
    cfg = DecomposerConfig(grid_divisions=12, refine_iters=0)
    for _ in range(10):
        models = [init_params(rng) for _ in range(3)]
        target = SloVector(rng.uniform(50, 150), rng.uniform(0.2, 0.8))
        dec, prob = decompose(models, target, cfg)
        ks, obj = brute_force([learned_fn(m, target.throughput_gbps) for m in models], target, 12)
        np.testing.assert_allclose(dec.delays, np.array(ks) * target.delay_ms / 12, rtol=0, atol=1e-12)
        assert prob == pytest.approx(math.exp(obj), rel=1e-12)


def test_refinement_never_hurts(rng):
    for _ in range(10):
        models = [init_params(rng) for _ in range(3)]
        target = SloVector(100, 0.5)
        _, p0 = decompose(models, target, DecomposerConfig(refine_iters=0))
        _, p2 = decompose(models, target, DecomposerConfig(refine_iters=2))
        assert p2 >= p0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 300), st.floats(0, 1), st.integers(1, 4))
def test_output_feasible(seed, tau, theta, D):
    rng = np.random.default_rng(seed)
    models = [init_params(rng) for _ in range(D)]
    target = SloVector(tau, theta)
    dec, prob = decompose(models, target, DecomposerConfig(grid_divisions=10))
    assert is_valid_for(dec, target, 1e-6)
    assert all(p.delay_ms >= 0 for p in dec)
    assert 0 < prob <= 1


def test_accepts_estimators_and_callables(params):
    clf = MonotoneRiskClassifier.from_params(params)
    target = SloVector(100, 0.5)
    a = decompose([params] * 2, target)
    b = decompose([clf] * 2, target)
    assert a == b
    c = decompose([lambda d, t: np.minimum(1, d / 100)] * 2, target)
    assert c[0].delays == (50.0, 50.0)


def test_opt_identical_domains_equal_split():
    m = AnalyticDomainModel(1.0, 35.0, 2.0)
    dec, _ = decompose_opt([m] * 3, SloVector(99, 0.5), 0.6, DecomposerConfig(grid_divisions=99))
    np.testing.assert_allclose(dec.delays, (33, 33, 33), atol=1e-9)


def test_opt_matches_brute_force():
    target = SloVector(100, 0.5)
    for lam in (0.1, 0.55, 1.0):
        fns = [lambda t, m=m: acceptance_prob(m, SloVector(t, 0.5), lam) for m in DEFAULT_DOMAINS]
        dec, prob = decompose_opt(DEFAULT_DOMAINS, target, lam, DecomposerConfig(grid_divisions=20, refine_iters=0))
        ks, obj = brute_force(fns, target, 20)
        np.testing.assert_allclose(dec.delays, np.array(ks) * 5.0, atol=1e-12)
        assert prob == pytest.approx(math.exp(obj), rel=1e-12)


def test_opt_beats_learned_split(rng):
    target = SloVector(100, 0.5)
    dec_opt, p_opt = decompose_opt(DEFAULT_DOMAINS, target, 0.7)
    for _ in range(5):
        dec, _ = decompose([init_params(rng) for _ in range(3)], target)
        p_true = math.prod(acceptance_prob(m, s, 0.7) for m, s in zip(DEFAULT_DOMAINS, dec))
        assert p_opt >= p_true


def test_random_split_is_valid_and_uniform(rng):
    target = SloVector(100, 0.5)
    assert decompose_random(target, 1, rng).delays == (100.0,)
    draws = np.array([decompose_random(target, 3, rng).delays for _ in range(100_000)])
    assert np.allclose(draws.sum(axis=1), 100)
    np.testing.assert_allclose(draws.mean(axis=0), 100 / 3, rtol=0.01)
    assert is_valid_for(decompose_random(target, 3, rng), target, 1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        DecomposerConfig(grid_divisions=0)
    with pytest.raises(ValueError):
        DecomposerConfig(prob_floor=0.5)
