import numpy as np
import pytest

from sparsehe.errors import ConfigurationError, ContractViolation, NumericalDivergenceError
from sparsehe.model import (
    Dataset,
    Model,
    compute_update,
    evaluate,
    f1_binary,
    init_model,
    local_train,
    loss_and_grad,
    make_synthetic,
    param_count,
    partition_dirichlet,
    partition_indices,
    predict_proba,
)


def test_dataset_rejects_bad_labels():
    with pytest.raises(ContractViolation):
        Dataset(np.zeros((3, 2)), np.array([0, 1, 2]))
    with pytest.raises(ContractViolation):
        Dataset(np.zeros((3, 2)), np.array([0, 1]))


def test_model_weight_count_checked():
    with pytest.raises(ContractViolation):
        Model(np.zeros(5), (3, 1))
    with pytest.raises(ContractViolation):
        Model(np.array([np.nan, 0, 0, 0]), (3, 1))
    assert param_count((3, 4, 1)) == 3 * 4 + 4 + 4 + 1


@pytest.mark.parametrize("hidden", [None, 5])
def test_gradient_matches_finite_differences(hidden):
    rng = np.random.default_rng(0)
    data = make_synthetic(40, 6, seed=1)
    model = init_model(6, hidden, seed=2)
    w = model.weights + rng.normal(0, 0.3, size=model.d)
    _, grad = loss_and_grad(w, model.layers, data.features, data.labels, weight_decay=0.01)
    h = 1e-6
    for i in rng.choice(model.d, size=min(100, model.d), replace=False):
        e = np.zeros(model.d)
        e[i] = h
        fp, _ = loss_and_grad(w + e, model.layers, data.features, data.labels, 0.01)
        fm, _ = loss_and_grad(w - e, model.layers, data.features, data.labels, 0.01)
        fd = (fp - fm) / (2 * h)
        assert abs(fd - grad[i]) <= 1e-4 * max(1.0, abs(fd))


def test_zero_learning_rate_is_identity():
    data = make_synthetic(30, 4, seed=0)
    model = init_model(4, 3, seed=0)
    out = local_train(model, data, 0.0, 3, 8, seed=1)
    assert np.array_equal(out.weights, model.weights)


def test_training_is_deterministic():
    data = make_synthetic(60, 4, seed=0)
    model = init_model(4, 3, seed=0)
    a = local_train(model, data, 0.1, 2, 8, seed=5)
    b = local_train(model, data, 0.1, 2, 8, seed=5)
    assert np.array_equal(a.weights, b.weights)


def test_separable_set_is_learned():
    data = make_synthetic(200, 2, separation=6.0, seed=3)
    model = local_train(init_model(2), data, 0.1, 50, 16, seed=0)
    acc, _, _ = evaluate(model, data)
    assert acc >= 0.95
    # independent full-batch gradient descent reaches the same regime
    w = np.zeros(3)
    x = np.hstack([data.features, np.ones((len(data), 1))])
    for _ in range(2000):
        p = 1.0 / (1.0 + np.exp(-x @ w))
        w -= 0.5 * x.T @ (p - data.labels) / len(data)
    ref_acc = np.mean(((x @ w) >= 0) == data.labels)
    assert abs(acc - ref_acc) <= 0.03


def test_divergence_names_batch():
    data = Dataset(np.full((4, 1), 1e300), np.array([0, 1, 0, 1]))
    with pytest.raises(NumericalDivergenceError) as info:
        local_train(init_model(1), data, 1e300, 1, 2, seed=0)
    assert isinstance(info.value.batch_index, int)
    assert f"batch {info.value.batch_index}" in str(info.value)


def test_compute_update_arithmetic():
    before = Model(np.array([1.0, 2.0]), (1, 1))
    after = Model(np.array([1.5, 1.0]), (1, 1))
    assert np.array_equal(compute_update(before, after).values, [0.5, -1.0])
    assert np.array_equal(compute_update(before, before).values, [0.0, 0.0])
    rng = np.random.default_rng(1)
    a = Model(rng.normal(size=8), (7, 1))
    b = Model(rng.normal(size=8), (7, 1))
    # (b - a) + a can differ from b in the last bit
    assert np.allclose(a.weights + compute_update(a, b).values, b.weights, rtol=1e-15, atol=0)
    with pytest.raises(ContractViolation):
        compute_update(Model(np.zeros(3), (2, 1)), Model(np.zeros(4), (3, 1)))


def test_f1_conventions_and_hand_confusion_matrix():
    assert f1_binary([0, 0, 0], [0, 0, 0]) == 1.0
    assert f1_binary([0, 1], [0, 0]) == 0.0
    assert f1_binary([0, 0], [1, 0]) == 0.0
    y_true = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0, 1])
    y_pred = np.array([1, 1, 1, 0, 0, 0, 1, 1, 0, 0])
    # tp=3 fp=2 fn=2 tn=3 -> precision 3/5, recall 3/5
    assert f1_binary(y_true, y_pred) == pytest.approx(0.6)
    x = np.where(y_pred == 1, 1.0, -1.0).reshape(-1, 1)
    model = Model(np.array([5.0, 0.0]), (1, 1))
    acc, f1, _ = evaluate(model, Dataset(x, y_true))
    assert acc == pytest.approx(0.6)
    assert f1 == pytest.approx(0.6)


def test_perfect_model_accuracy_one():
    x = np.array([[-1.0], [1.0], [-2.0], [3.0]])
    y = np.array([0, 1, 0, 1])
    acc, f1, _ = evaluate(Model(np.array([10.0, 0.0]), (1, 1)), Dataset(x, y))
    assert acc == 1.0 and f1 == 1.0
    assert np.all((predict_proba(Model(np.array([10.0, 0.0]), (1, 1)), x) >= 0.5) == y)


def test_partition_single_client_and_completeness():
    data = make_synthetic(100, 3, seed=0)
    (only,) = partition_dirichlet(data, 1, 0.5, seed=0)
    assert len(only) == 100
    data = make_synthetic(1000, 3, seed=0)
    parts = partition_indices(data.labels, 5, 0.1, seed=42)
    allidx = np.concatenate(parts)
    assert allidx.size == 1000
    assert np.array_equal(np.sort(allidx), np.arange(1000))
    assert all(p.size >= 1 for p in parts)
    again = partition_indices(data.labels, 5, 0.1, seed=42)
    assert all(np.array_equal(a, b) for a, b in zip(parts, again))


def test_partition_errors():
    with pytest.raises(ConfigurationError):
        partition_indices(np.array([0, 1]), 3, 1.0, seed=0)
    with pytest.raises(ConfigurationError):
        partition_indices(np.array([0, 1]), 1, 0.0, seed=0)


def test_every_client_nonempty_under_extreme_skew():
    labels = np.array([0] * 10 + [1] * 10)
    for seed in range(20):
        parts = partition_indices(labels, 8, 0.01, seed)
        assert all(p.size >= 1 for p in parts)
        assert np.concatenate(parts).size == 20


def _max_deviation(labels, parts):
    glob = np.bincount(labels, minlength=2) / labels.size
    return max(np.abs(np.bincount(labels[p], minlength=2) / p.size - glob).sum() for p in parts)


def test_smaller_alpha_gives_more_skew():
    labels = make_synthetic(1000, 2, seed=0).labels
    low = [_max_deviation(labels, partition_indices(labels, 5, 0.1, s)) for s in range(20)]
    high = [_max_deviation(labels, partition_indices(labels, 5, 100.0, s)) for s in range(20)]
    assert np.mean(low) > np.mean(high)
    assert min(low) > max(high)
