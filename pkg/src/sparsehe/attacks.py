"""Confidence-threshold membership inference.

The adversary scores every sample by the model's top-class probability and
predicts "member" above a threshold. The threshold is the one that maximizes
balanced accuracy on the evaluation pairs themselves, i.e. the strongest
possible threshold adversary; reported success rates are upper bounds for
this attack family.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .model import Dataset, Model, init_model, local_train, predict_proba
from .orchestrator import FlConfig, Mechanisms, run_experiment

THRESHOLD_RULE = "best balanced accuracy on the evaluation set"


@dataclass(frozen=True)
class MiaResult:
    attack_success_rate: float
    auc: float
    n_members: int
    n_nonmembers: int
    threshold: float
    threshold_rule: str = THRESHOLD_RULE

    def to_dict(self) -> dict:
        return asdict(self)


def confidence(model: Model, data: Dataset) -> np.ndarray:
    p = predict_proba(model, data.features)
    return np.maximum(p, 1.0 - p)


def rank_auc(member_scores, nonmember_scores) -> float:
    """Probability a random member outscores a random non-member (ties count half)."""
    m = np.asarray(member_scores, dtype=np.float64)
    n = np.asarray(nonmember_scores, dtype=np.float64)
    allv = np.concatenate([m, n])
    order = np.argsort(allv, kind="mergesort")
    ranks = np.empty(allv.size)
    sorted_v = allv[order]
    # average ranks over tie groups
    _, first, counts = np.unique(sorted_v, return_index=True, return_counts=True)
    avg = first + (counts + 1) / 2.0
    ranks[order] = np.repeat(avg, counts)
    u = ranks[: m.size].sum() - m.size * (m.size + 1) / 2.0
    return float(u / (m.size * n.size))


def best_threshold(member_scores, nonmember_scores) -> tuple[float, float]:
    """(balanced accuracy, threshold) maximizing balanced accuracy of ``score >= t``."""
    m = np.sort(np.asarray(member_scores, dtype=np.float64))
    n = np.sort(np.asarray(nonmember_scores, dtype=np.float64))
    candidates = np.unique(np.concatenate([m, n, [np.inf]]))
    tpr = 1.0 - np.searchsorted(m, candidates, side="left") / m.size
    tnr = np.searchsorted(n, candidates, side="left") / n.size
    bal = 0.5 * (tpr + tnr)
    best = int(np.argmax(bal))
    return float(bal[best]), float(candidates[best])


def attack_scores(member_scores, nonmember_scores) -> MiaResult:
    m = np.asarray(member_scores)
    n = np.asarray(nonmember_scores)
    if m.size == 0 or n.size == 0:
        raise ConfigurationError("member and non-member sets must be non-empty")
    success, thr = best_threshold(m, n)
    return MiaResult(success, rank_auc(m, n), int(m.size), int(n.size), thr)


def balance(members: Dataset, nonmembers: Dataset, seed) -> tuple[Dataset, Dataset]:
    """Subsample the larger set so both have the same size."""
    rng = np.random.default_rng(seed)
    size = min(len(members), len(nonmembers))

    def take(ds):
        if len(ds) == size:
            return ds
        return ds.subset(np.sort(rng.choice(len(ds), size=size, replace=False)))

    return take(members), take(nonmembers)


def mia_attack(model: Model, members: Dataset, nonmembers: Dataset, seed: int = 0) -> MiaResult:
    if len(members) == 0 or len(nonmembers) == 0:
        raise ConfigurationError("member and non-member sets must be non-empty")
    members, nonmembers = balance(members, nonmembers, seed)
    return attack_scores(confidence(model, members), confidence(model, nonmembers))


def permutation_null(member_scores, nonmember_scores, n_shuffles: int, seed: int) -> np.ndarray:
    """Success rates after randomly reassigning membership labels."""
    pooled = np.concatenate([member_scores, nonmember_scores])
    k = len(member_scores)
    rng = np.random.default_rng(seed)
    out = np.empty(n_shuffles)
    for i in range(n_shuffles):
        perm = rng.permutation(pooled.size)
        out[i] = best_threshold(pooled[perm[:k]], pooled[perm[k:]])[0]
    return out


OVERFIT_MEMBERS = 50
OVERFIT_EPOCHS = 500
OVERFIT_LR = 0.5


@dataclass(frozen=True)
class MiaComparison:
    seed: int
    medhe: MiaResult
    standard_fl: MiaResult
    overfit: MiaResult

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "medhe": self.medhe.to_dict(),
            "standard_fl": self.standard_fl.to_dict(),
            "overfit": self.overfit.to_dict(),
        }


def overfit_baseline(members: Dataset, n_features: int, seed: int) -> Model:
    """Full-batch training for many epochs, no regularization, no privacy."""
    model = init_model(n_features, None, seed=seed)
    return local_train(model, members, OVERFIT_LR, OVERFIT_EPOCHS, len(members), seed=seed)


def mia_experiment(cfg: FlConfig, seed: int) -> MiaComparison:
    """Attack the federated model, its plain-FedAvg twin and an overfit model on one split.

    Members of the federated models are their whole training pool; the overfit
    model's members are the first ``OVERFIT_MEMBERS`` samples of that pool.
    Non-members are always the held-out test set.
    """
    cfg = replace(cfg, seed=seed)
    medhe = run_experiment(cfg)
    fed = medhe.federation
    plain = run_experiment(replace(cfg, mechanisms=Mechanisms.none()))
    members = fed.train.subset(np.arange(min(OVERFIT_MEMBERS, len(fed.train))))
    overfit = overfit_baseline(members, cfg.data.n_features, seed)
    return MiaComparison(
        seed,
        mia_attack(medhe.model, fed.train, fed.test, seed),
        mia_attack(plain.model, fed.train, fed.test, seed),
        mia_attack(overfit, members, fed.test, seed),
    )
