"""Adaptive top-k sparsification with error feedback and an EMA threshold."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .model import GradientVector

THRESHOLD_MODES = ("ema", "per_round", "fixed")


@dataclass(frozen=True)
class SparsifierConfig:
    """Sparsity level ``s`` (fraction zeroed) and EMA rate ``alpha``.

    ``threshold_mode`` selects how the round threshold is formed:
    ``"ema"`` smooths the per-round cutoff (the default), ``"per_round"`` uses
    the exact top-k cutoff of the current round, and ``"fixed"`` keeps the
    first round's cutoff forever.
    """

    sparsity: float = 0.9
    alpha: float = 0.7
    error_feedback: bool = True
    threshold_mode: str = "ema"

    def __post_init__(self):
        if not 0.0 <= self.sparsity <= 1.0:
            raise ConfigurationError(f"sparsity must be in [0, 1], got {self.sparsity}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigurationError(f"unknown threshold_mode {self.threshold_mode!r}")

    def k(self, d: int) -> int:
        return retained_count(d, self.sparsity)


@dataclass(frozen=True)
class SparsifierState:
    tau: float
    error: np.ndarray = field(repr=False)
    round_index: int = 0

    @classmethod
    def initial(cls, d: int) -> "SparsifierState":
        return cls(0.0, np.zeros(d), 0)

    def __post_init__(self):
        e = np.array(self.error, dtype=np.float64).ravel()
        e.flags.writeable = False
        object.__setattr__(self, "error", e)
        if self.tau < 0 or self.round_index < 0:
            raise ContractViolation("tau and round_index must be non-negative")


@dataclass(frozen=True)
class SparseGradient:
    """Dense-layout sparse gradient; ``mask`` marks the retained coordinates."""

    values: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        m = np.array(self.mask, dtype=bool).ravel()
        if v.shape != m.shape:
            raise ContractViolation("values and mask must have the same length")
        v[~m] = 0.0
        v.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    @property
    def dense_dim(self) -> int:
        return self.values.size

    @property
    def nnz(self) -> int:
        return int(self.mask.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @classmethod
    def dense(cls, values) -> "SparseGradient":
        values = np.asarray(values, dtype=np.float64).ravel()
        return cls(values, np.ones(values.size, dtype=bool))


def retained_count(d: int, s: float) -> int:
    """``floor((1 - s) * d)`` evaluated on the decimal value of ``s``.

    Plain float arithmetic gives ``(1 - 0.9) * 10 == 0.999...``; going through
    the shortest decimal repr keeps the count exact for settings like 0.9.
    """
    k = math.floor((1 - Fraction(repr(float(s)))) * d)
    return max(0, min(d, k))


def select_kth_magnitude(values, k: int, seed: int = 0) -> float:
    """k-th largest absolute value (1-based) by randomized quickselect."""
    mags = np.abs(np.asarray(values, dtype=np.float64).ravel())
    n = mags.size
    if not 1 <= k <= n:
        raise ContractViolation(f"k must be in [1, {n}], got {k}")
    if not np.isfinite(mags).all():
        raise ContractViolation("values must be finite")
    rng = np.random.default_rng(seed)
    while True:
        pivot = mags[rng.integers(mags.size)]
        above = mags[mags > pivot]
        if k <= above.size:
            mags = above
            continue
        n_equal = int(np.count_nonzero(mags == pivot))
        if k <= above.size + n_equal:
            return float(pivot)
        k -= above.size + n_equal
        mags = mags[mags < pivot]


def sparsify(
    grad: GradientVector | np.ndarray,
    config: SparsifierConfig,
    state: SparsifierState,
) -> tuple[SparseGradient, SparsifierState]:
    """One round of adaptive top-k selection.

    Returns the sparse gradient and the next state. With error feedback on,
    ``sparse.values + next.error == grad + state.error`` holds exactly.
    """
    g = grad.values if isinstance(grad, GradientVector) else np.asarray(grad, dtype=np.float64)
    if g.shape != state.error.shape:
        raise ContractViolation(
            f"gradient length {g.size} does not match error memory {state.error.size}"
        )
    comp = g + state.error if config.error_feedback else g.copy()
    d = comp.size
    k = config.k(d)
    t = state.round_index + 1

    if k == 0:
        mask = np.zeros(d, dtype=bool)
        tau = math.inf
    elif k == d:
        # nothing is pruned, so the threshold cannot matter
        mask = np.ones(d, dtype=bool)
        tau = select_kth_magnitude(comp, k) if t == 1 else state.tau
    else:
        current = select_kth_magnitude(comp, k)
        if t == 1 or config.threshold_mode == "per_round":
            tau = current
        elif config.threshold_mode == "fixed":
            tau = state.tau
        else:
            tau = config.alpha * state.tau + (1.0 - config.alpha) * current
        mask = np.abs(comp) >= tau

    values = np.where(mask, comp, 0.0)
    error = comp - values if config.error_feedback else np.zeros(d)
    return SparseGradient(values, mask), SparsifierState(tau, error, t)
