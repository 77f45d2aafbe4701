import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsehe.dp import (
    DpConfig,
    add_gaussian_noise,
    clip_gradient,
    composition_terms,
    epsilon_for,
    sigma_for_epsilon,
    split_delta,
    tradeoff_epsilon,
    worked_example_report,
)
from sparsehe.errors import ConfigurationError
from sparsehe.sparsifier import SparseGradient


def test_config_validation():
    for bad in ({"sensitivity": 0}, {"sigma": -1}, {"delta": 1.0}, {"rounds": 0},
                {"log_convention": "e"}, {"variant": "x"}):
        with pytest.raises(ConfigurationError):
            DpConfig(**bad)


def test_clip():
    g = SparseGradient(np.array([3.0, 4.0, 0.0]), np.array([True, True, False]))
    assert np.allclose(clip_gradient(g, 1.0).values, [0.6, 0.8, 0.0])
    small = SparseGradient(np.array([0.3, 0.4]), np.array([True, True]))
    assert np.array_equal(clip_gradient(small, 1.0).values, small.values)
    rng = np.random.default_rng(0)
    for _ in range(100):
        g = SparseGradient.dense(rng.normal(size=50) * 10)
        assert np.linalg.norm(clip_gradient(g, 1.0).values) <= 1.0 + 1e-12


def test_noise_only_on_retained_and_deterministic():
    mask = np.zeros(10, dtype=bool)
    mask[[1, 4]] = True
    g = SparseGradient(np.ones(10), mask)
    assert np.array_equal(add_gaussian_noise(g, 0.0, 1).values, g.values)
    a = add_gaussian_noise(g, 1.0, 7)
    b = add_gaussian_noise(g, 1.0, 7)
    assert np.array_equal(a.values, b.values)
    assert np.count_nonzero(a.values) == 2 and np.array_equal(a.mask, mask)


def test_noise_statistics():
    g = SparseGradient.dense(np.zeros(100_000))
    noise = add_gaussian_noise(g, 1.0, 3).values
    assert abs(noise.mean()) <= 4 / math.sqrt(1e5)
    assert abs(noise.std() - 1.0) <= 0.02


def test_worked_example():
    nat = epsilon_for(DpConfig(1, 1, 1e-5, 3, 0.9, "natural")).epsilon
    b10 = epsilon_for(DpConfig(1, 1, 1e-5, 3, 0.9, "base10")).epsilon
    assert round(nat, 2) == 0.98 and round(b10, 2) == 0.70
    assert nat < 1 and b10 < 1
    rep = worked_example_report()
    assert rep["sqrt_term"]["natural"] == pytest.approx(8.31, abs=0.005)
    assert rep["sqrt_term"]["base10"] == pytest.approx(5.48, abs=0.005)
    assert rep["reported_sqrt_term_reproducible"] is False


def test_edge_cases():
    assert epsilon_for(DpConfig(sigma=0.0)).epsilon == math.inf
    assert epsilon_for(DpConfig(sparsity=1.0)).epsilon == 0.0
    assert sigma_for_epsilon(1.0, 1.0, 1.0, 3) == 0.0
    assert tradeoff_epsilon(0.0, 0.5, 1.0, 3) == math.inf
    assert split_delta(1e-5, 4) == (1e-5 / 8, 1e-5 / 2)


def test_term_scaling_in_rounds():
    one = DpConfig(1.0, 0.7, 1e-5, 1, 0.8)
    four = DpConfig(1.0, 0.7, 1e-5, 4, 0.8)
    a1, b1 = composition_terms(one)
    assert epsilon_for(four).epsilon == pytest.approx(2 * a1 + 4 * b1)


def test_sigma_for_epsilon():
    assert sigma_for_epsilon(1.0, 0.9, 1.0, 3) == pytest.approx(0.1225, abs=5e-4)
    assert sigma_for_epsilon(1.0, 0.9, 1.0, 6) == pytest.approx(math.sqrt(2) * sigma_for_epsilon(1.0, 0.9, 1.0, 3))
    for eps in (0.1, 1.0, 5.0):
        sigma = sigma_for_epsilon(eps, 0.9, 2.0, 7)
        assert tradeoff_epsilon(sigma, 0.9, 2.0, 7) <= eps * (1 + 1e-12)
    with pytest.raises(ConfigurationError):
        sigma_for_epsilon(0.0, 0.9, 1.0, 3)


def test_variants_differ_only_in_quadratic_term():
    st_ = composition_terms(DpConfig(1, 1, 1e-5, 3, 0.9, variant="statement"))
    pf = composition_terms(DpConfig(1, 1, 1e-5, 3, 0.9, variant="proof"))
    assert st_[0] == pf[0]
    assert st_[1] == pytest.approx(0.1 * 3 / 2)
    assert pf[1] == pytest.approx(0.01 * 3)


configs = st.builds(
    DpConfig,
    sensitivity=st.floats(0.1, 5),
    sigma=st.floats(0.05, 10),
    delta=st.floats(1e-9, 1e-2),
    rounds=st.integers(1, 50),
    sparsity=st.floats(0.0, 0.99),
    log_convention=st.sampled_from(["natural", "base10"]),
    variant=st.sampled_from(["statement", "proof"]),
)


@settings(max_examples=200, deadline=None)
@given(configs)
def test_monotonicity(cfg):
    eps = epsilon_for(cfg).epsilon
    assert epsilon_for(replace(cfg, rounds=cfg.rounds + 1)).epsilon > eps
    assert epsilon_for(replace(cfg, sensitivity=cfg.sensitivity * 1.1)).epsilon > eps
    assert epsilon_for(replace(cfg, sigma=cfg.sigma * 1.1)).epsilon < eps
    assert epsilon_for(replace(cfg, sparsity=min(1.0, cfg.sparsity + 0.005))).epsilon < eps
