"""Desk-scale client model: a binary classifier trained with mini-batch SGD.

Two architectures share one flat parameter vector:

* logistic regression, layer sizes ``(n_features, 1)``
* one-hidden-layer MLP with tanh units, layer sizes ``(n_features, hidden, 1)``

Parameters are stored layer by layer as ``W`` (row-major, shape in x out)
followed by ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation, NumericalDivergenceError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise ContractViolation("features must be a 2-D matrix")
        if y.shape != (x.shape[0],):
            raise ContractViolation("labels must have one entry per sample")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ContractViolation("labels must be 0 or 1")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y.astype(np.int64)))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx])

    @staticmethod
    def concat(parts) -> "Dataset":
        parts = list(parts)
        return Dataset(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
        )


@dataclass(frozen=True)
class Model:
    weights: np.ndarray
    layers: tuple[int, ...]

    def __post_init__(self):
        layers = tuple(int(v) for v in self.layers)
        if len(layers) not in (2, 3) or layers[-1] != 1 or min(layers) < 1:
            raise ConfigurationError(f"unsupported architecture {layers}")
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if w.size != param_count(layers):
            raise ContractViolation(
                f"expected {param_count(layers)} weights for {layers}, got {w.size}"
            )
        if not np.isfinite(w).all():
            raise ContractViolation("model weights must be finite")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def d(self) -> int:
        return self.weights.size

    def with_weights(self, weights) -> "Model":
        return Model(weights, self.layers)


@dataclass(frozen=True)
class GradientVector:
    """Flat model update ``after - before`` in parameter units."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.isfinite(v).all():
            raise ContractViolation("gradient entries must be finite")
        object.__setattr__(self, "values", _frozen(v))

    def __len__(self) -> int:
        return self.values.size


def param_count(layers) -> int:
    return sum(a * b + b for a, b in zip(layers[:-1], layers[1:]))


def init_model(n_features: int, hidden: int | None = None, seed: int = 0) -> Model:
    """Small random init; logistic regression starts at zero."""
    if hidden is None:
        layers = (n_features, 1)
        return Model(np.zeros(param_count(layers)), layers)
    layers = (n_features, hidden, 1)
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, 1.0 / np.sqrt(n_features), size=(n_features, hidden))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, 1))
    return Model(
        np.concatenate([w1.ravel(), np.zeros(hidden), w2.ravel(), np.zeros(1)]), layers
    )


def _unflatten(w: np.ndarray, layers):
    out, pos = [], 0
    for a, b in zip(layers[:-1], layers[1:]):
        W = w[pos : pos + a * b].reshape(a, b)
        pos += a * b
        out.append((W, w[pos : pos + b]))
        pos += b
    return out


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def predict_proba(model: Model, x: np.ndarray) -> np.ndarray:
    """Probability of class 1 for each row of ``x``."""
    z = _logits(model.weights, model.layers, np.asarray(x, dtype=np.float64))[0]
    return np.exp(_log_sigmoid(z))


def _logits(w, layers, x):
    params = _unflatten(w, layers)
    if len(params) == 1:
        W, b = params[0]
        return (x @ W + b).ravel(), None
    (W1, b1), (W2, b2) = params
    h = np.tanh(x @ W1 + b1)
    return (h @ W2 + b2).ravel(), h


def loss_and_grad(w, layers, x, y, weight_decay: float = 0.0):
    """Mean binary cross-entropy plus ``weight_decay / 2 * |w|^2`` and its gradient."""
    w = np.asarray(w, dtype=np.float64)
    n = x.shape[0]
    z, h = _logits(w, layers, x)
    loss = -np.mean(y * _log_sigmoid(z) + (1 - y) * _log_sigmoid(-z))
    loss += 0.5 * weight_decay * float(w @ w)
    dz = (np.exp(_log_sigmoid(z)) - y) / n
    params = _unflatten(w, layers)
    if h is None:
        W, _ = params[0]
        grad = np.concatenate([(x.T @ dz), [dz.sum()]])
    else:
        (W1, _), (W2, _) = params
        gW2 = h.T @ dz
        dh = np.outer(dz, W2.ravel()) * (1.0 - h * h)
        grad = np.concatenate([(x.T @ dh).ravel(), dh.sum(axis=0), gW2, [dz.sum()]])
    return float(loss), grad + weight_decay * w


def make_synthetic(
    n_samples: int,
    n_features: int,
    separation: float = 2.0,
    seed: int = 0,
    positive_fraction: float = 0.5,
) -> Dataset:
    """Two isotropic Gaussian clusters whose means are ``separation`` apart."""
    rng = np.random.default_rng(seed)
    y = (rng.random(n_samples) < positive_fraction).astype(np.int64)
    # guarantee both classes are present
    if n_samples >= 4:
        y[0], y[1] = 0, 1
    direction = rng.normal(size=n_features)
    direction /= np.linalg.norm(direction)
    x = rng.normal(size=(n_samples, n_features))
    x += np.outer(y - 0.5, direction) * separation
    return Dataset(x, y)


def train_test_split(data: Dataset, test_fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(data))
    n_test = int(round(test_fraction * len(data)))
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))


def partition_indices(labels, n_clients: int, alpha: float, seed: int) -> list[np.ndarray]:
    """Dirichlet(alpha) label-skew split of sample indices across clients."""
    labels = np.asarray(labels)
    if n_clients < 1:
        raise ConfigurationError("n_clients must be >= 1")
    if not alpha > 0:
        raise ConfigurationError("alpha must be > 0")
    if labels.size < n_clients:
        raise ConfigurationError(
            f"{labels.size} samples cannot cover {n_clients} clients"
        )
    rng = np.random.default_rng(seed)
    shards: list[list[int]] = [[] for _ in range(n_clients)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        props = rng.dirichlet(np.full(n_clients, alpha))
        cuts = (np.cumsum(props)[:-1] * idx.size).astype(np.int64)
        for client, part in enumerate(np.split(idx, cuts)):
            shards[client].extend(part.tolist())
    # empty clients take a random sample from the currently largest shard
    for client in range(n_clients):
        if not shards[client]:
            donor = max(range(n_clients), key=lambda c: (len(shards[c]), -c))
            pick = int(rng.integers(len(shards[donor])))
            shards[client].append(shards[donor].pop(pick))
    return [np.sort(np.asarray(s, dtype=np.int64)) for s in shards]


def partition_dirichlet(dataset: Dataset, n_clients: int, alpha: float, seed: int) -> list[Dataset]:
    return [dataset.subset(i) for i in partition_indices(dataset.labels, n_clients, alpha, seed)]


def local_train(
    model: Model,
    data: Dataset,
    lr: float,
    epochs: int,
    batch_size: int,
    seed: int,
    weight_decay: float = 0.0,
) -> Model:
    """Plain mini-batch SGD over a fresh seeded shuffle each epoch."""
    if not lr >= 0:
        raise ConfigurationError("lr must be non-negative")
    if epochs < 1 or batch_size < 1:
        raise ConfigurationError("epochs and batch_size must be >= 1")
    if len(data) == 0:
        raise ContractViolation("cannot train on an empty dataset")
    rng = np.random.default_rng(seed)
    w = model.weights.copy()
    x, y = data.features, data.labels
    # overflow surfaces as a divergence error below, not as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        _sgd_epochs(w, model.layers, x, y, lr, epochs, batch_size, weight_decay, rng)
    return model.with_weights(w)


def _sgd_epochs(w, layers, x, y, lr, epochs, batch_size, weight_decay, rng):
    """In-place mini-batch SGD on the flat weight vector ``w``."""
    batch_index = 0
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            sel = order[start : start + batch_size]
            loss, grad = loss_and_grad(w, layers, x[sel], y[sel], weight_decay)
            if not np.isfinite(loss) or not np.isfinite(grad).all():
                raise NumericalDivergenceError(
                    f"non-finite loss at batch {batch_index}", batch_index=batch_index
                )
            w -= lr * grad
            batch_index += 1


def compute_update(before: Model, after: Model) -> GradientVector:
    if before.layers != after.layers:
        raise ContractViolation(
            f"architecture mismatch: {before.layers} vs {after.layers}"
        )
    return GradientVector(after.weights - before.weights)


def f1_binary(y_true, y_pred) -> float:
    """F1 for class 1; 1.0 when there are neither positive labels nor predictions."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    n_pred, n_true = int(np.sum(y_pred == 1)), int(np.sum(y_true == 1))
    if n_pred == 0 and n_true == 0:
        return 1.0
    if n_pred == 0 or n_true == 0:
        return 0.0
    return 2.0 * tp / (n_pred + n_true)


def evaluate(model: Model, data: Dataset) -> tuple[float, float, float]:
    """Return ``(accuracy, f1, mean cross-entropy)`` on ``data``."""
    if len(data) == 0:
        raise ContractViolation("cannot evaluate on an empty dataset")
    proba = predict_proba(model, data.features)
    pred = (proba >= 0.5).astype(np.int64)
    acc = float(np.mean(pred == data.labels))
    loss, _ = loss_and_grad(model.weights, model.layers, data.features, data.labels)
    return acc, f1_binary(data.labels, pred), loss
