import numpy as np
import pytest

from sparsehe.attacks import (
    attack_scores,
    balance,
    best_threshold,
    mia_attack,
    overfit_baseline,
    permutation_null,
    rank_auc,
)
from sparsehe.errors import ConfigurationError
from sparsehe.model import Dataset, init_model, make_synthetic, train_test_split


def test_identical_confidences_are_chance():
    res = attack_scores(np.full(20, 0.7), np.full(20, 0.7))
    assert res.attack_success_rate == 0.5 and res.auc == 0.5


def test_separable_scores_are_perfect():
    res = attack_scores(np.linspace(0.9, 1.0, 10), np.linspace(0.5, 0.6, 10))
    assert res.attack_success_rate == 1.0 and res.auc == 1.0
    assert 0.6 < res.threshold <= 0.9


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(0)
    m = np.round(rng.uniform(size=40), 1)
    n = np.round(rng.uniform(size=30), 1)
    pairs = (m[:, None] > n[None, :]).mean() + 0.5 * (m[:, None] == n[None, :]).mean()
    assert rank_auc(m, n) == pytest.approx(pairs, abs=1e-12)


def test_threshold_matches_brute_force():
    rng = np.random.default_rng(1)
    m, n = rng.normal(0.3, 1, 25), rng.normal(0, 1, 35)
    brute = max(0.5 * ((m >= t).mean() + (n < t).mean()) for t in np.r_[m, n, np.inf])
    assert best_threshold(m, n)[0] == pytest.approx(brute)


def test_permutation_null_is_near_chance():
    rng = np.random.default_rng(2)
    scores = rng.uniform(0.5, 1.0, size=1000)
    null = permutation_null(scores[:500], scores[500:], 100, seed=3)
    inside = np.mean((null >= 0.45) & (null <= 0.55))
    assert inside >= 0.95


def test_empty_sets_raise():
    with pytest.raises(ConfigurationError):
        attack_scores([], [0.5])
    empty = Dataset(np.zeros((0, 3)), np.zeros(0))
    some = Dataset(np.zeros((4, 3)), np.zeros(4))
    with pytest.raises(ConfigurationError):
        mia_attack(init_model(3, None, seed=0), empty, some)


def test_balance_subsamples_larger_set():
    a = Dataset(np.zeros((10, 2)), np.zeros(10))
    b = Dataset(np.ones((4, 2)), np.ones(4))
    x, y = balance(a, b, seed=0)
    assert len(x) == len(y) == 4
    assert y is b


def test_overfit_model_leaks_more_than_chance():
    train, test = train_test_split(make_synthetic(2000, 20, 2.0, seed=0), 0.25, seed=1)
    members = train.subset(np.arange(50))
    model = overfit_baseline(members, 20, seed=0)
    assert mia_attack(model, members, test, seed=0).attack_success_rate > 0.55
