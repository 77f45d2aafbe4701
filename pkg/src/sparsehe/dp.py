"""Gaussian mechanism on sparse updates and its (epsilon, delta) bound.

The composed bound is

    eps <= (1 - s) * [D * sqrt(2 T log(1/delta)) / sigma + D**2 T / (2 sigma**2)]

(``variant="statement"``). ``variant="proof"`` keeps the squared sparsity
factor on the quadratic term instead:

    eps <= (1 - s) D / sigma * sqrt(2 T log(1/delta)) + (1 - s)**2 D**2 T / sigma**2

``log`` is natural by default; ``log_convention="base10"`` swaps in log10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .sparsifier import SparseGradient

LOG_CONVENTIONS = {"natural": math.log, "base10": math.log10}
VARIANTS = ("statement", "proof")


@dataclass(frozen=True)
class DpConfig:
    sensitivity: float = 1.0
    sigma: float = 1.0
    delta: float = 1e-5
    rounds: int = 1
    sparsity: float = 0.9
    log_convention: str = "natural"
    variant: str = "statement"

    def __post_init__(self):
        if not self.sensitivity > 0:
            raise ConfigurationError("sensitivity must be positive")
        if not self.sigma >= 0:
            raise ConfigurationError("sigma must be non-negative")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError("delta must be in (0, 1)")
        if self.rounds < 1:
            raise ConfigurationError("rounds must be >= 1")
        if not 0.0 <= self.sparsity <= 1.0:
            raise ConfigurationError("sparsity must be in [0, 1]")
        if self.log_convention not in LOG_CONVENTIONS:
            raise ConfigurationError(f"log_convention must be one of {sorted(LOG_CONVENTIONS)}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}")

    def with_rounds(self, rounds: int) -> "DpConfig":
        return DpConfig(
            self.sensitivity, self.sigma, self.delta, rounds,
            self.sparsity, self.log_convention, self.variant,
        )


@dataclass(frozen=True)
class PrivacySpend:
    epsilon: float
    delta: float
    per_round_epsilon: float
    per_round_delta: float
    log_convention: str
    variant: str

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "per_round_epsilon": self.per_round_epsilon,
            "per_round_delta": self.per_round_delta,
            "log_convention": self.log_convention,
            "variant": self.variant,
        }


def clip_gradient(grad: SparseGradient, bound: float) -> SparseGradient:
    """Scale ``grad`` down to L2 norm ``bound`` if it is longer."""
    if not bound > 0:
        raise ConfigurationError("clip bound must be positive")
    norm = float(np.linalg.norm(grad.values))
    if norm <= bound:
        return grad
    return SparseGradient(grad.values * (bound / norm), grad.mask)


def add_gaussian_noise(grad: SparseGradient, sigma: float, seed) -> SparseGradient:
    """Add N(0, sigma^2) to the retained coordinates only."""
    if not sigma >= 0:
        raise ConfigurationError("sigma must be non-negative")
    if sigma == 0:
        return grad
    noise = np.random.default_rng(seed).normal(0.0, sigma, size=grad.nnz)
    values = grad.values.copy()
    values[grad.mask] += noise
    return SparseGradient(values, grad.mask)


def split_delta(delta: float, rounds: int) -> tuple[float, float]:
    """``(delta_0, delta')`` with ``rounds * delta_0 + delta' == delta``."""
    return delta / (2 * rounds), delta / 2


def epsilon_for(config: DpConfig) -> PrivacySpend:
    """Evaluate the composed bound; ``sigma == 0`` yields ``inf``, ``s == 1`` yields 0."""
    log = LOG_CONVENTIONS[config.log_convention]
    s, d2, sigma, t, delta = (
        config.sparsity, config.sensitivity, config.sigma, config.rounds, config.delta,
    )
    delta0, _ = split_delta(delta, t)
    if s == 1.0:
        eps = eps0 = 0.0
    elif sigma == 0:
        eps = eps0 = math.inf
    else:
        eps0 = d2 / sigma * math.sqrt(2.0 * log(1.25 / delta0))
        first, second = composition_terms(config)
        eps = first + second
    return PrivacySpend(eps, delta, eps0, delta0, config.log_convention, config.variant)


def composition_terms(config: DpConfig) -> tuple[float, float]:
    """The square-root and linear-in-T terms of the bound, each with its sparsity factor."""
    log = LOG_CONVENTIONS[config.log_convention]
    s, d2, sigma, t = config.sparsity, config.sensitivity, config.sigma, config.rounds
    if sigma == 0:
        return math.inf, math.inf
    first = (1 - s) * d2 * math.sqrt(2.0 * t * log(1.0 / config.delta)) / sigma
    if config.variant == "statement":
        second = (1 - s) * d2 * d2 * t / (2.0 * sigma * sigma)
    else:
        second = (1 - s) ** 2 * d2 * d2 * t / (sigma * sigma)
    return first, second


def sigma_for_epsilon(epsilon: float, sparsity: float, sensitivity: float, rounds: int) -> float:
    """Smallest sigma allowed by the privacy-utility trade-off for a target epsilon."""
    if not epsilon > 0:
        raise ConfigurationError("target epsilon must be positive")
    return (1 - sparsity) * sensitivity * math.sqrt(rounds) / math.sqrt(2.0 * epsilon)


def tradeoff_epsilon(sigma: float, sparsity: float, sensitivity: float, rounds: int) -> float:
    """Epsilon implied by inverting ``sigma_for_epsilon``."""
    if sigma == 0:
        return 0.0 if sparsity == 1.0 else math.inf
    return ((1 - sparsity) * sensitivity) ** 2 * rounds / (2.0 * sigma * sigma)


def worked_example_report() -> dict:
    """The T=3, s=0.9, D=1, sigma=1, delta=1e-5 example under each log base.

    The reported intermediate value 4.2 for sqrt(6 log 1e5) matches none of
    the natural (8.31), base-10 (5.48) or base-2 (9.97) readings.
    """
    root_terms = {
        "natural": math.sqrt(6 * math.log(1e5)),
        "base10": math.sqrt(6 * math.log10(1e5)),
        "base2": math.sqrt(6 * math.log2(1e5)),
    }
    eps = {
        name: epsilon_for(DpConfig(1.0, 1.0, 1e-5, 3, 0.9, name)).epsilon
        for name in LOG_CONVENTIONS
    }
    eps["reported"] = 0.57
    return {
        "sqrt_term": root_terms,
        "reported_sqrt_term": 4.2,
        "reported_sqrt_term_reproducible": any(
            abs(v - 4.2) < 0.05 for v in root_terms.values()
        ),
        "epsilon": eps,
        "sigma_for_epsilon_1": sigma_for_epsilon(1.0, 0.9, 1.0, 3),
        "reported_sigma": 0.12,
    }
