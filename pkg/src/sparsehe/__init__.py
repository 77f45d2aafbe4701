"""Sparse, encrypted, differentially private federated learning at desk scale."""

from .accounting import CommBreakdown, communication_breakdown, full_report
from .attacks import MiaResult, mia_attack, mia_experiment
from .convergence import QuadraticProblem, fit_convergence_rate, run_dense_gd, run_sparse_sgd
from .dp import DpConfig, PrivacySpend, epsilon_for, sigma_for_epsilon
from .errors import (
    ConfigurationError,
    ContractViolation,
    DecryptionOverflowError,
    EncodingOverflowError,
    NumericalDivergenceError,
    ScaleMismatchError,
    SparseHEError,
)
from .model import Dataset, GradientVector, Model, partition_dirichlet
from .orchestrator import ABLATIONS, FlConfig, Mechanisms, desk_config, run_experiment, run_round
from .sparsifier import SparseGradient, SparsifierConfig, SparsifierState, sparsify
from .stats import paired_ttest

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS",
    "CommBreakdown",
    "ConfigurationError",
    "ContractViolation",
    "Dataset",
    "DecryptionOverflowError",
    "DpConfig",
    "EncodingOverflowError",
    "FlConfig",
    "GradientVector",
    "Mechanisms",
    "MiaResult",
    "Model",
    "NumericalDivergenceError",
    "PrivacySpend",
    "QuadraticProblem",
    "ScaleMismatchError",
    "SparseGradient",
    "SparseHEError",
    "SparsifierConfig",
    "SparsifierState",
    "communication_breakdown",
    "desk_config",
    "epsilon_for",
    "fit_convergence_rate",
    "full_report",
    "mia_attack",
    "mia_experiment",
    "paired_ttest",
    "partition_dirichlet",
    "run_dense_gd",
    "run_experiment",
    "run_round",
    "run_sparse_sgd",
    "sigma_for_epsilon",
    "sparsify",
]
