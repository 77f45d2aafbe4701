"""Round-based federated simulation: train, sparsify, privatize, encrypt, aggregate.

One round, for every participating client in client-index order:

1. start from the broadcast global weights and train locally;
2. take the update ``after - before`` and sparsify it (error feedback state
   stays on the client);
3. clip to the L2 sensitivity bound and add Gaussian noise to the retained
   coordinates;
4. announce the retained indices and the local max magnitude in the clear;
   the server answers with the union of indices and the global max, which
   every client uses as its quantization range;
5. quantize, lane-pack and encrypt the values at the union positions.

The server sums the ciphertexts, decrypts, unpacks, divides by the number of
contributions and adds the mean update to the global weights.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dp as dpm
from .errors import (
    ConfigurationError,
    DecryptionOverflowError,
    ScaleMismatchError,
)
from .he import ckks
from .he.ckks import CkksParams
from .he.packing import PackingConfig, pack_lanes, unpack_sum
from .he.wire import HEADER_BYTES, encode_indices
from .model import (
    Dataset,
    Model,
    compute_update,
    evaluate,
    init_model,
    local_train,
    make_synthetic,
    partition_indices,
    train_test_split,
)
from .sparsifier import SparseGradient, SparsifierConfig, SparsifierState, sparsify

FLOAT_BYTES = 4
META_BYTES = 8


@dataclass(frozen=True)
class Mechanisms:
    """Switches for each pipeline stage; all off is plain FedAvg."""

    sparsification: bool = True
    error_feedback: bool = True
    adaptive_threshold: bool = True
    packing: bool = True
    encryption: bool = True
    differential_privacy: bool = True

    @classmethod
    def none(cls) -> "Mechanisms":
        return cls(False, False, False, False, False, False)


@dataclass(frozen=True)
class DataConfig:
    n_samples: int = 2000
    n_features: int = 20
    separation: float = 2.0
    test_fraction: float = 0.25
    dirichlet_alpha: float = 0.1
    hidden: int | None = None


@dataclass(frozen=True)
class OpCosts:
    """Simulated seconds per operation, used for machine-independent wall time."""

    train_per_sample_epoch: float = 2e-5
    sparsify_per_param: float = 1e-8
    encrypt_per_ciphertext: float = 0.02
    add_per_ciphertext: float = 1e-3
    decrypt_per_ciphertext: float = 0.01
    bytes_per_second: float = 1.25e8


@dataclass(frozen=True)
class FlConfig:
    n_clients: int = 5
    rounds: int = 3
    lr: float = 0.1
    local_epochs: int = 2
    batch_size: int = 16
    weight_decay: float = 0.0
    data: DataConfig = field(default_factory=DataConfig)
    sparsifier: SparsifierConfig = field(default_factory=SparsifierConfig)
    dp: dpm.DpConfig = field(default_factory=lambda: dpm.DpConfig(sensitivity=1.0, sigma=0.0))
    he: CkksParams = field(default_factory=lambda: CkksParams(scale_log2=24))
    packing: PackingConfig = field(default_factory=PackingConfig)
    mechanisms: Mechanisms = field(default_factory=Mechanisms)
    min_quorum: int = 1
    dropout_prob: float = 0.0
    latency_mean: float = 0.0
    client_timeout: float = 300.0
    staleness_limit: int = 2
    seed: int = 42
    costs: OpCosts = field(default_factory=OpCosts)
    measure_time: bool = False
    client_scale_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigurationError("n_clients must be >= 1")
        if self.rounds < 1:
            raise ConfigurationError("rounds must be >= 1")
        if not 1 <= self.min_quorum <= self.n_clients:
            raise ConfigurationError("min_quorum must be in [1, n_clients]")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ConfigurationError("dropout_prob must be in [0, 1]")
        if not self.lr > 0:
            raise ConfigurationError("lr must be positive")
        if self.staleness_limit < 0 or not self.client_timeout > 0:
            raise ConfigurationError("staleness_limit >= 0 and client_timeout > 0 required")
        m = self.mechanisms
        if m.encryption and m.packing:
            self.packing.validate(self.he, self.n_clients)

    @property
    def effective_sparsifier(self) -> SparsifierConfig:
        m = self.mechanisms
        mode = self.sparsifier.threshold_mode if m.adaptive_threshold else "per_round"
        return replace(self.sparsifier, error_feedback=m.error_feedback, threshold_mode=mode)

    @property
    def privacy_sparsity(self) -> float:
        return self.sparsifier.sparsity if self.mechanisms.sparsification else 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["client_scale_overrides"] = {str(k): v for k, v in self.client_scale_overrides.items()}
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "FlConfig":
        raw = dict(raw)
        nested = {
            "data": DataConfig,
            "sparsifier": SparsifierConfig,
            "dp": dpm.DpConfig,
            "he": CkksParams,
            "packing": PackingConfig,
            "mechanisms": Mechanisms,
            "costs": OpCosts,
        }
        for key, kind in nested.items():
            if key in raw:
                raw[key] = kind(**raw[key])
        if "client_scale_overrides" in raw:
            raw["client_scale_overrides"] = {
                int(k): int(v) for k, v in raw["client_scale_overrides"].items()
            }
        return cls(**raw)


@dataclass(frozen=True)
class PendingUpdate:
    client: int
    origin_round: int
    deliver_round: int
    update: SparseGradient


@dataclass(frozen=True)
class FlState:
    model: Model
    sparsifiers: tuple
    pending: tuple = ()
    completed_rounds: int = 0


@dataclass
class RoundReport:
    round: int
    global_accuracy: float
    f1: float
    loss: float
    bytes_up_per_client: dict
    bytes_up_total: int
    bytes_down_total: int
    epsilon_cumulative: float
    participating_clients: list
    wall_time: float
    he_decryption_ok: bool = True
    quorum_met: bool = True
    skipped: bool = False
    stale_used: int = 0
    stale_discarded: int = 0
    ciphertexts: int = 0
    union_size: int = 0
    mean_nnz: float = 0.0
    note: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bytes_up_per_client"] = {str(k): v for k, v in self.bytes_up_per_client.items()}
        return out

    CSV_FIELDS = (
        "round", "global_accuracy", "f1", "loss", "bytes_up_mean_per_client",
        "bytes_up_total", "bytes_down_total", "epsilon_cumulative", "n_participants",
        "wall_time", "he_decryption_ok", "quorum_met", "skipped", "ciphertexts",
        "union_size", "mean_nnz",
    )

    def csv_row(self) -> dict:
        per = list(self.bytes_up_per_client.values())
        return {
            "round": self.round,
            "global_accuracy": self.global_accuracy,
            "f1": self.f1,
            "loss": self.loss,
            "bytes_up_mean_per_client": (sum(per) / len(per)) if per else 0,
            "bytes_up_total": self.bytes_up_total,
            "bytes_down_total": self.bytes_down_total,
            "epsilon_cumulative": self.epsilon_cumulative,
            "n_participants": len(self.participating_clients),
            "wall_time": self.wall_time,
            "he_decryption_ok": self.he_decryption_ok,
            "quorum_met": self.quorum_met,
            "skipped": self.skipped,
            "ciphertexts": self.ciphertexts,
            "union_size": self.union_size,
            "mean_nnz": self.mean_nnz,
        }


@dataclass(frozen=True)
class Federation:
    """Everything fixed for a whole run: data shards, test set and keys."""

    cfg: FlConfig
    train: Dataset
    test: Dataset
    shards: tuple
    keys: ckks.KeyPair | None

    @classmethod
    def build(cls, cfg: FlConfig) -> "Federation":
        dc = cfg.data
        data = make_synthetic(dc.n_samples, dc.n_features, dc.separation, seed=_seed(cfg, "data"))
        train, test = train_test_split(data, dc.test_fraction, seed=_seed(cfg, "split"))
        parts = partition_indices(
            train.labels, cfg.n_clients, dc.dirichlet_alpha, _seed(cfg, "partition")
        )
        keys = None
        if cfg.mechanisms.encryption:
            keys = ckks.keygen(cfg.he, seed=_seed(cfg, "keygen"))
        return cls(cfg, train, test, tuple(train.subset(p) for p in parts), keys)

    def initial_state(self) -> FlState:
        dc = self.cfg.data
        model = init_model(dc.n_features, dc.hidden, seed=_seed(self.cfg, "init"))
        return FlState(model, tuple(SparsifierState.initial(model.d) for _ in self.shards))


_TAGS = {
    "data": 1, "split": 2, "partition": 3, "keygen": 4, "init": 5,
    "dropout": 6, "latency": 7, "train": 8, "noise": 9, "encrypt": 10,
}


def _seed(cfg: FlConfig, tag: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.seed, _TAGS[tag], *extra])


def _int_seed(cfg: FlConfig, tag: str, *extra: int) -> int:
    return int(_seed(cfg, tag, *extra).generate_state(1, np.uint64)[0])


def simulate_dropout(cfg: FlConfig, round_index: int, rng: np.random.Generator | None = None) -> list[int]:
    """Clients that stay online this round; each drops independently."""
    if rng is None:
        rng = np.random.default_rng(_seed(cfg, "dropout", round_index))
    online = rng.random(cfg.n_clients) >= cfg.dropout_prob
    return [int(i) for i in np.flatnonzero(online)]


def _delays(cfg: FlConfig, round_index: int, clients) -> dict[int, int]:
    """Rounds late each client's update arrives (0 = within the timeout)."""
    if cfg.latency_mean <= 0:
        return {c: 0 for c in clients}
    rng = np.random.default_rng(_seed(cfg, "latency", round_index))
    latency = rng.exponential(cfg.latency_mean, size=cfg.n_clients)
    return {c: int(latency[c] // cfg.client_timeout) for c in clients}


def client_update(fed: Federation, state: FlState, client: int, round_index: int):
    """Local training through noising for one client; returns (update, new sparsifier state)."""
    cfg = fed.cfg
    m = cfg.mechanisms
    before = state.model
    after = local_train(
        before,
        fed.shards[client],
        cfg.lr,
        cfg.local_epochs,
        cfg.batch_size,
        seed=_int_seed(cfg, "train", round_index, client),
        weight_decay=cfg.weight_decay,
    )
    grad = compute_update(before, after)
    sp_state = state.sparsifiers[client]
    if m.sparsification:
        update, sp_state = sparsify(grad, cfg.effective_sparsifier, sp_state)
    else:
        update = SparseGradient.dense(grad.values)
    if m.differential_privacy:
        update = dpm.clip_gradient(update, cfg.dp.sensitivity)
        update = dpm.add_gaussian_noise(update, cfg.dp.sigma, _seed(cfg, "noise", round_index, client))
    return update, sp_state


@dataclass
class Aggregate:
    mean: np.ndarray
    bytes_up: dict
    bytes_down: int
    ciphertexts: int
    union_size: int
    server_ops: int


def plaintext_aggregate(contribs, d: int, sparse: bool) -> Aggregate:
    """Mean of updates summed left to right in the given order."""
    total = np.zeros(d)
    up = {}
    for client, upd in contribs:
        total = total + upd.values
        if sparse:
            up[client] = up.get(client, 0) + upd.nnz * FLOAT_BYTES + len(encode_indices(upd.indices))
        else:
            up[client] = up.get(client, 0) + d * FLOAT_BYTES
    return Aggregate(total / len(contribs), up, 0, 0, d, 0)


def encrypted_aggregate(fed: Federation, contribs, round_index: int) -> Aggregate:
    """Aggregate through CKKS; raises ScaleMismatchError / DecryptionOverflowError."""
    cfg = fed.cfg
    params = cfg.he
    m = cfg.mechanisms
    n = len(contribs)
    d = contribs[0][1].dense_dim
    up: dict[int, int] = {}
    down = 0

    if m.sparsification:
        union_mask = np.zeros(d, dtype=bool)
        for client, upd in contribs:
            union_mask |= upd.mask
            up[client] = up.get(client, 0) + len(encode_indices(upd.indices)) + META_BYTES
        union = np.flatnonzero(union_mask)
        down = len(encode_indices(union)) + META_BYTES
    else:
        union = np.arange(d)
        for client, _ in contribs:
            up[client] = up.get(client, 0) + META_BYTES
        down = META_BYTES

    vectors = [upd.values[union] for _, upd in contribs]
    clip = max((float(np.max(np.abs(v))) for v in vectors if v.size), default=0.0) or 1.0
    pc = cfg.packing.with_clip(clip)
    if m.packing:
        pc.validate(params, n)

    frame = params.ciphertext_bytes + HEADER_BYTES
    summed = None
    n_ct = 0
    for j, (client, _) in enumerate(contribs):
        payload = vectors[j]
        if m.packing:
            payload = np.array([float(p) for p in pack_lanes(payload, pc, n)])
        scale_log2 = cfg.client_scale_overrides.get(client)
        cts = _encrypt_chunks(
            payload, fed.keys, params, scale_log2, _seed(cfg, "encrypt", round_index, client, j)
        )
        n_ct = max(n_ct, len(cts))
        up[client] += len(cts) * frame
        summed = cts if summed is None else [ckks.add_ciphertexts(a, b) for a, b in zip(summed, cts)]

    slots = ckks.decrypt_vector(summed, fed.keys, len(payload) if union.size else 0)
    if m.packing:
        ints = [int(v) for v in np.rint(slots)]
        lane_sums = unpack_sum(ints, pc, union.size, n) if union.size else np.zeros(0, dtype=np.int64)
        sums = lane_sums / pc.quant_scale
    else:
        sums = slots
    mean = np.zeros(d)
    mean[union] = sums / n
    return Aggregate(mean, up, down, n_ct, int(union.size), n_ct * (n - 1))


def _encrypt_chunks(values, keys, params: CkksParams, scale_log2, seed) -> list:
    slots = params.slot_count
    count = max(1, -(-values.size // slots))
    seeds = seed.spawn(count)
    return [
        ckks.encrypt(ckks.encode(values[i * slots : (i + 1) * slots], params, scale_log2), keys, params, seeds[i])
        for i in range(count)
    ]


def _epsilon(cfg: FlConfig, completed: int) -> float:
    if completed == 0:
        return 0.0
    if not cfg.mechanisms.differential_privacy:
        return math.inf
    dpc = replace(cfg.dp, rounds=completed, sparsity=cfg.privacy_sparsity)
    return dpm.epsilon_for(dpc).epsilon


def run_round(state: FlState, fed: Federation, round_index: int) -> tuple[FlState, RoundReport]:
    cfg = fed.cfg
    costs = cfg.costs
    t_start = time.perf_counter()
    online = simulate_dropout(cfg, round_index)
    delays = _delays(cfg, round_index, online)
    on_time = [c for c in online if delays[c] == 0]
    arriving = [p for p in state.pending if p.deliver_round == round_index]
    usable = [p for p in arriving if round_index - p.origin_round <= cfg.staleness_limit]
    discarded = len(arriving) - len(usable)
    n_contrib = len(on_time) + len(usable)

    def skipped(note, ok=True, quorum=False):
        acc, f1, loss = evaluate(state.model, fed.test)
        keep = tuple(p for p in state.pending if p.deliver_round > round_index)
        return replace(state, pending=keep), RoundReport(
            round=round_index, global_accuracy=acc, f1=f1, loss=loss,
            bytes_up_per_client={}, bytes_up_total=0, bytes_down_total=0,
            epsilon_cumulative=_epsilon(cfg, state.completed_rounds),
            participating_clients=[], wall_time=0.0, he_decryption_ok=ok,
            quorum_met=quorum, skipped=True, stale_discarded=discarded, note=note,
        )

    if n_contrib < cfg.min_quorum:
        # no client data leaves the clients, so nothing is trained or spent
        return skipped(f"quorum not met: {n_contrib} < {cfg.min_quorum}")

    sparsifiers = list(state.sparsifiers)
    fresh, train_time = [], {}
    for client in online:
        update, sparsifiers[client] = client_update(fed, state, client, round_index)
        train_time[client] = (
            costs.train_per_sample_epoch * len(fed.shards[client]) * cfg.local_epochs
            + costs.sparsify_per_param * state.model.d
        )
        if delays[client] == 0:
            fresh.append((client, update))
        else:
            fresh_pending = PendingUpdate(client, round_index, round_index + delays[client], update)
            state = replace(state, pending=state.pending + (fresh_pending,))
    contribs = sorted(fresh + [(p.client, p.update) for p in usable], key=lambda cu: cu[0])

    m = cfg.mechanisms
    d = state.model.d
    try:
        if m.encryption:
            agg = encrypted_aggregate(fed, contribs, round_index)
        else:
            agg = plaintext_aggregate(contribs, d, m.sparsification)
    except (ScaleMismatchError, DecryptionOverflowError) as exc:
        new_state, report = skipped(f"aggregation aborted: {exc}", ok=False, quorum=True)
        return new_state, report

    participants = [c for c, _ in contribs]
    model = state.model.with_weights(state.model.weights + agg.mean)
    pending = tuple(p for p in state.pending if p.deliver_round > round_index)
    completed = state.completed_rounds + 1
    new_state = FlState(model, tuple(sparsifiers), pending, completed)
    acc, f1, loss = evaluate(model, fed.test)

    bytes_down = len(online) * (d * FLOAT_BYTES + agg.bytes_down)
    upload = {c: b / costs.bytes_per_second for c, b in agg.bytes_up.items()}
    client_ct_time = agg.ciphertexts * costs.encrypt_per_ciphertext
    client_time = max(train_time.get(c, 0.0) + client_ct_time + upload.get(c, 0.0) for c in participants)
    server_time = agg.server_ops * costs.add_per_ciphertext + agg.ciphertexts * costs.decrypt_per_ciphertext
    wall = time.perf_counter() - t_start if cfg.measure_time else client_time + server_time

    report = RoundReport(
        round=round_index,
        global_accuracy=acc,
        f1=f1,
        loss=loss,
        bytes_up_per_client=dict(sorted(agg.bytes_up.items())),
        bytes_up_total=int(sum(agg.bytes_up.values())),
        bytes_down_total=int(bytes_down),
        epsilon_cumulative=_epsilon(cfg, completed),
        participating_clients=participants,
        wall_time=wall,
        stale_used=len(usable),
        stale_discarded=discarded,
        ciphertexts=agg.ciphertexts,
        union_size=agg.union_size,
        mean_nnz=float(np.mean([u.nnz for _, u in contribs])),
    )
    return new_state, report


@dataclass
class ExperimentResult:
    config: FlConfig
    reports: list
    model: Model
    federation: Federation = field(repr=False)

    @property
    def final(self) -> RoundReport:
        return self.reports[-1]

    @property
    def all_skipped(self) -> bool:
        return all(r.skipped for r in self.reports)

    def summary(self) -> dict:
        done = [r for r in self.reports if not r.skipped]
        return {
            "seed": self.config.seed,
            "final_accuracy": self.final.global_accuracy,
            "final_f1": self.final.f1,
            "final_loss": self.final.loss,
            "epsilon": self.final.epsilon_cumulative,
            "completed_rounds": len(done),
            "bytes_up_total": sum(r.bytes_up_total for r in self.reports),
            "bytes_down_total": sum(r.bytes_down_total for r in self.reports),
            "mb_up_per_round": (
                sum(r.bytes_up_total for r in done) / len(done) / 2**20 if done else 0.0
            ),
            "wall_time": sum(r.wall_time for r in self.reports),
            "he_decryption_failures": sum(not r.he_decryption_ok for r in self.reports),
            "security_claim": self.config.he.security_claim if self.config.mechanisms.encryption else None,
        }


def run_experiment(cfg: FlConfig) -> ExperimentResult:
    fed = Federation.build(cfg)
    state = fed.initial_state()
    reports = []
    for r in range(1, cfg.rounds + 1):
        state, report = run_round(state, fed, r)
        reports.append(report)
    return ExperimentResult(cfg, reports, state.model, fed)


def run_trials(cfg: FlConfig, seeds, threads: int = 1) -> list[ExperimentResult]:
    """One experiment per seed; results come back in seed order."""
    cfgs = [replace(cfg, seed=int(s)) for s in seeds]
    if threads <= 1:
        return [run_experiment(c) for c in cfgs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_experiment, cfgs))


ABLATIONS = {
    "full": Mechanisms(),
    "no_error_feedback": Mechanisms(error_feedback=False),
    "no_adaptive_threshold": Mechanisms(adaptive_threshold=False),
    "no_packing": Mechanisms(packing=False),
    "no_he": Mechanisms(encryption=False, packing=False),
    "no_sparsity": Mechanisms(sparsification=False, error_feedback=False, adaptive_threshold=False),
    "standard_fl": Mechanisms.none(),
}


def ablation_configs(base: FlConfig, names=None) -> dict[str, FlConfig]:
    names = list(ABLATIONS) if names is None else names
    return {name: replace(base, mechanisms=ABLATIONS[name]) for name in names}


DESK_TARGET_EPSILON = 1.0


def desk_config(**overrides) -> FlConfig:
    """Logistic regression, 5 clients, Dirichlet 0.1, 10 rounds, s=0.9.

    Noise is the trade-off sigma for a unit target epsilon at unit sensitivity.
    """
    base = FlConfig(rounds=10)
    sigma = dpm.sigma_for_epsilon(
        DESK_TARGET_EPSILON, base.sparsifier.sparsity, 1.0, base.rounds
    )
    base = replace(base, dp=dpm.DpConfig(sensitivity=1.0, sigma=sigma))
    return replace(base, **overrides)
