"""Sparse SGD on separable quadratics with known optimum.

``f(w) = 0.5 * sum(h_i * (w_i - w*_i)**2)`` so ``f* = 0`` and the smoothness
constant is ``max(h)``. Stochastic gradients add isotropic Gaussian noise.
Each step's update ``lr_t * g_t`` goes through the sparsifier, mirroring the
federated pipeline where parameter deltas, not raw gradients, are compressed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .sparsifier import SparsifierConfig, SparsifierState, sparsify

DIVERGENCE_LOSS = 1e12


@dataclass(frozen=True)
class QuadraticProblem:
    hessian: np.ndarray = field(repr=False)
    optimum: np.ndarray = field(repr=False)
    grad_noise: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=np.float64).ravel()
        w = np.asarray(self.optimum, dtype=np.float64).ravel()
        if h.shape != w.shape or not (h > 0).all():
            raise ConfigurationError("hessian diagonal must be positive and match the optimum")
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "optimum", w)

    @property
    def dim(self) -> int:
        return self.hessian.size

    @property
    def smoothness(self) -> float:
        return float(self.hessian.max())

    def loss(self, w) -> float:
        diff = np.asarray(w) - self.optimum
        return 0.5 * float(np.sum(self.hessian * diff * diff))

    def gradient(self, w, rng: np.random.Generator | None = None) -> np.ndarray:
        g = self.hessian * (np.asarray(w) - self.optimum)
        if self.grad_noise and rng is not None:
            g = g + rng.normal(0.0, self.grad_noise, size=g.size)
        return g

    @classmethod
    def random(cls, dim: int, condition: float, grad_noise: float, seed: int) -> "QuadraticProblem":
        """Log-spaced curvatures in [1/condition, 1] and a unit-scale optimum."""
        rng = np.random.default_rng(seed)
        h = np.logspace(-np.log10(condition), 0.0, dim)
        rng.shuffle(h)
        return cls(h, rng.normal(size=dim), grad_noise)


def standard_suite(grad_noise: float = 0.05) -> list[QuadraticProblem]:
    return [
        QuadraticProblem.random(100, 10.0, grad_noise, seed=0),
        QuadraticProblem.random(200, 30.0, grad_noise, seed=1),
        QuadraticProblem.random(500, 10.0, grad_noise, seed=2),
    ]


@dataclass
class Trajectory:
    suboptimality: np.ndarray
    diverged: bool = False
    error_norms: np.ndarray | None = None
    transmitted: np.ndarray | None = None
    true_updates: np.ndarray | None = None
    final_error: np.ndarray | None = None

    @property
    def final(self) -> float:
        return float(self.suboptimality[-1])


def run_sparse_sgd(
    problem: QuadraticProblem,
    s: float,
    use_error_feedback: bool,
    T: int,
    lr: float,
    seed: int,
    alpha: float = 0.7,
    schedule: str = "inv_sqrt",
    track_sums: bool = False,
) -> Trajectory:
    """``T`` steps from ``w = 0``; returns ``f(w_t) - f*`` after each step.

    ``schedule="inv_sqrt"`` uses ``lr / sqrt(t)``; ``"constant"`` keeps ``lr``.
    """
    if lr > 1.0 / problem.smoothness + 1e-12:
        raise ConfigurationError("lr must not exceed 1/L")
    if schedule not in ("inv_sqrt", "constant"):
        raise ConfigurationError(f"unknown schedule {schedule!r}")
    rng = np.random.default_rng(seed)
    config = SparsifierConfig(sparsity=s, alpha=alpha, error_feedback=use_error_feedback)
    state = SparsifierState.initial(problem.dim)
    w = np.zeros(problem.dim)
    out = np.empty(T)
    norms = np.empty(T)
    sent = np.zeros(problem.dim) if track_sums else None
    true = np.zeros(problem.dim) if track_sums else None
    for t in range(1, T + 1):
        step = lr / np.sqrt(t) if schedule == "inv_sqrt" else lr
        update = -step * problem.gradient(w, rng)
        sparse, state = sparsify(update, config, state)
        if track_sums:
            sent = sent + sparse.values
            true = true + update
        w = w + sparse.values
        out[t - 1] = problem.loss(w)
        norms[t - 1] = float(np.linalg.norm(state.error))
        if not np.isfinite(out[t - 1]) or out[t - 1] > DIVERGENCE_LOSS:
            return Trajectory(out[:t], True, norms[:t], sent, true, state.error)
    return Trajectory(out, False, norms, sent, true, state.error)


def run_dense_gd(problem: QuadraticProblem, T: int, lr: float, seed: int, schedule: str = "inv_sqrt") -> Trajectory:
    """Uncompressed baseline with the same noise stream."""
    rng = np.random.default_rng(seed)
    w = np.zeros(problem.dim)
    out = np.empty(T)
    for t in range(1, T + 1):
        step = lr / np.sqrt(t) if schedule == "inv_sqrt" else lr
        w = w - step * problem.gradient(w, rng)
        out[t - 1] = problem.loss(w)
    return Trajectory(out)


def fit_convergence_rate(trajectory, tail_fraction: float = 0.9) -> float | None:
    """Least-squares slope of log(loss) against log(t) over the trailing fraction.

    Returns ``None`` when the series is too short or has non-positive entries.
    """
    y = np.asarray(trajectory, dtype=np.float64)
    if y.size < 100 or not (y > 0).all() or not np.isfinite(y).all():
        return None
    t = np.arange(1, y.size + 1, dtype=np.float64)
    start = int(y.size * (1.0 - tail_fraction))
    slope, _ = np.polyfit(np.log(t[start:]), np.log(y[start:]), 1)
    return float(slope)
