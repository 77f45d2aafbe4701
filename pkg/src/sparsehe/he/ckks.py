"""Additive-only CKKS over a single NTT-friendly prime.

Only what secure aggregation needs is here: key generation, canonical
embedding encode/decode, public-key encryption, ciphertext addition and
decryption. There is no multiplication, rescaling or rotation.

Every ciphertext carries a high-probability bound on its noise measured in
the slot domain (units of ``scale * value``). Adding ciphertexts adds their
bounds; decryption refuses once the bound reaches half the scale, at which
point rounding to the nearest quantization step is no longer guaranteed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..errors import (
    ConfigurationError,
    DecryptionOverflowError,
    EncodingOverflowError,
    ScaleMismatchError,
)
from .ntt import NegacyclicNTT, as_ring, find_ntt_prime

SLOT_MODELS = ("paper_N", "standard_N_half")
MAX_SINGLE_PRIME_BITS = 62


@dataclass(frozen=True)
class CkksParams:
    ring_dim: int = 1024
    q_bits: int = 61
    scale_log2: int = 40
    noise_stddev: float = 3.2
    slot_model: str = "paper_N"

    def __post_init__(self):
        n = self.ring_dim
        if n < 8 or n & (n - 1):
            raise ConfigurationError(f"ring_dim must be a power of two >= 8, got {n}")
        if self.q_bits < self.scale_log2 + 20:
            raise ConfigurationError(
                f"q_bits={self.q_bits} leaves less than 20 bits above scale 2^{self.scale_log2}"
            )
        if not self.noise_stddev > 0:
            raise ConfigurationError("noise_stddev must be positive")
        if self.slot_model not in SLOT_MODELS:
            raise ConfigurationError(f"slot_model must be one of {SLOT_MODELS}")

    @classmethod
    def full_scale(cls) -> "CkksParams":
        """N=8192 with a 240-bit modulus and scale 2^40 (size accounting only)."""
        return cls(ring_dim=8192, q_bits=240, scale_log2=40)

    @property
    def slot_count(self) -> int:
        return self.ring_dim // 2

    @property
    def scale(self) -> float:
        return float(2**self.scale_log2)

    @property
    def security_claim(self) -> str:
        if self.ring_dim == 8192 and self.q_bits == 240:
            return "paper_128bit"
        return "desk_insecure"

    @property
    def usable_bits(self) -> int:
        """Integer bits a slot can carry at this scale without wrapping mod q."""
        return self.q_bits - self.scale_log2 - 2

    @property
    def ciphertext_bytes(self) -> int:
        return ciphertext_size_bytes(self)

    @property
    def fresh_noise_bound(self) -> float:
        """Six-sigma slot-domain bound on fresh encryption plus encoding noise."""
        n, sd = self.ring_dim, self.noise_stddev
        coeff_var = sd * sd * (4.0 * n / 3.0 + 1.0)
        return 6.0 * math.sqrt(n * coeff_var) + 0.5 * n


def ciphertext_size_bytes(params: CkksParams) -> int:
    """Serialized payload bytes, ``2 * N * q_bits / 8``."""
    return 2 * params.ring_dim * params.q_bits // 8


@lru_cache(maxsize=None)
def _context(params: CkksParams):
    if params.q_bits > MAX_SINGLE_PRIME_BITS:
        raise ConfigurationError(
            f"q_bits={params.q_bits} needs an RNS chain; only sizes are supported for it"
        )
    q = find_ntt_prime(params.q_bits, params.ring_dim)
    if q.bit_length() != params.q_bits:
        raise ConfigurationError("no prime of the requested width")
    return q, NegacyclicNTT(params.ring_dim, q)


def modulus(params: CkksParams) -> int:
    return _context(params)[0]


@dataclass(frozen=True)
class Plaintext:
    coeffs: np.ndarray = field(repr=False)
    scale_log2: int
    params: CkksParams


@dataclass(frozen=True)
class KeyPair:
    secret: np.ndarray = field(repr=False)
    public_b: np.ndarray = field(repr=False)
    public_a: np.ndarray = field(repr=False)
    params: CkksParams

    @property
    def public_key(self) -> tuple[np.ndarray, np.ndarray]:
        return self.public_b, self.public_a


@dataclass(frozen=True)
class Ciphertext:
    c0: np.ndarray = field(repr=False)
    c1: np.ndarray = field(repr=False)
    scale_log2: int
    level: int
    params: CkksParams
    noise_bound: float

    @property
    def scale(self) -> float:
        return float(2**self.scale_log2)

    @property
    def slot_count(self) -> int:
        return self.params.slot_count


def _rng(seed):
    return np.random.default_rng(seed)


def _ternary(rng, n):
    return rng.integers(-1, 2, size=n)


def _gaussian(rng, n, sd):
    bound = math.floor(6.0 * sd)
    return np.clip(np.rint(rng.normal(0.0, sd, size=n)), -bound, bound).astype(np.int64)


def keygen(params: CkksParams, seed=None) -> KeyPair:
    """Ternary secret s and public key ``(b, a)`` with ``b = -a*s + e``."""
    q, ntt = _context(params)
    rng = _rng(seed)
    n = params.ring_dim
    s = _ternary(rng, n)
    a = as_ring(rng.integers(0, q, size=n, dtype=np.uint64), q)
    e = _gaussian(rng, n, params.noise_stddev)
    b = (as_ring(e, q) - ntt.multiply(a, as_ring(s, q))) % q
    return KeyPair(s, b, a, params)


def centered(coeffs, q: int) -> list[int]:
    half = q // 2
    return [int(c) - q if int(c) > half else int(c) for c in coeffs]


def _roots(n: int) -> np.ndarray:
    return np.exp(1j * np.pi * np.arange(n) / n)


def encode(values, params: CkksParams, scale_log2: int | None = None) -> Plaintext:
    """Canonical-embedding encode of up to N/2 real values at scale 2**scale_log2."""
    q, _ = _context(params)
    n = params.ring_dim
    scale_log2 = params.scale_log2 if scale_log2 is None else scale_log2
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size > n // 2:
        raise ConfigurationError(f"{v.size} values exceed {n // 2} slots")
    limit = q / (2.0 * 2.0**scale_log2)
    if v.size and np.max(np.abs(v)) >= limit:
        raise EncodingOverflowError(
            f"max |value| {np.max(np.abs(v)):.3g} exceeds encoding range {limit:.3g}"
        )
    z = np.zeros(n, dtype=np.complex128)
    z[: v.size] = v
    z[n - 1 - np.arange(n // 2)] = np.conj(z[: n // 2])
    coeffs = (np.fft.fft(z) / n / _roots(n)).real * 2.0**scale_log2
    ints = [int(c) for c in np.rint(coeffs)]
    return Plaintext(as_ring(ints, q), scale_log2, params)


def decode(plaintext: Plaintext) -> np.ndarray:
    params = plaintext.params
    q, _ = _context(params)
    n = params.ring_dim
    c = np.array(centered(plaintext.coeffs, q), dtype=np.float64) / 2.0**plaintext.scale_log2
    slots = n * np.fft.ifft(c * _roots(n))
    return slots[: n // 2].real.copy()


def encrypt(plaintext: Plaintext, keys: KeyPair | tuple, params: CkksParams, seed=None) -> Ciphertext:
    """Public-key encryption; ``seed=None`` draws OS entropy."""
    q, ntt = _context(params)
    if plaintext.params != params:
        raise ConfigurationError("plaintext was encoded under different parameters")
    b, a = keys.public_key if isinstance(keys, KeyPair) else keys
    rng = _rng(seed)
    n = params.ring_dim
    u_hat = ntt.forward(as_ring(_ternary(rng, n), q))
    e0 = as_ring(_gaussian(rng, n, params.noise_stddev), q)
    e1 = as_ring(_gaussian(rng, n, params.noise_stddev), q)
    c0 = (ntt.inverse(ntt.forward(b) * u_hat % q) + e0 + plaintext.coeffs) % q
    c1 = (ntt.inverse(ntt.forward(a) * u_hat % q) + e1) % q
    return Ciphertext(c0, c1, plaintext.scale_log2, 0, params, params.fresh_noise_bound)


def add_ciphertexts(x: Ciphertext, y: Ciphertext) -> Ciphertext:
    if x.params != y.params:
        raise ScaleMismatchError("ciphertexts use different parameter sets")
    if x.scale_log2 != y.scale_log2 or x.level != y.level:
        raise ScaleMismatchError(
            f"cannot add scale 2^{x.scale_log2}/level {x.level} "
            f"to scale 2^{y.scale_log2}/level {y.level}"
        )
    q = modulus(x.params)
    return Ciphertext(
        (x.c0 + y.c0) % q,
        (x.c1 + y.c1) % q,
        x.scale_log2,
        x.level,
        x.params,
        x.noise_bound + y.noise_bound,
    )


def sum_ciphertexts(cts) -> Ciphertext:
    """Left-to-right sum in the given order."""
    cts = list(cts)
    total = cts[0]
    for ct in cts[1:]:
        total = add_ciphertexts(total, ct)
    return total


def decrypt_plaintext(ct: Ciphertext, secret) -> Plaintext:
    q, ntt = _context(ct.params)
    s = secret.secret if isinstance(secret, KeyPair) else secret
    if ct.noise_bound >= ct.scale / 2:
        raise DecryptionOverflowError(
            f"noise bound {ct.noise_bound:.3g} exceeds half the scale {ct.scale / 2:.3g}"
        )
    m = (ct.c0 + ntt.multiply(ct.c1, as_ring(s, q))) % q
    return Plaintext(m, ct.scale_log2, ct.params)


def decrypt(ct: Ciphertext, secret) -> np.ndarray:
    """Decrypt and decode to the N/2 real slot values."""
    return decode(decrypt_plaintext(ct, secret))


def encrypt_vector(values, keys: KeyPair, params: CkksParams, seed=None) -> list[Ciphertext]:
    """Encrypt an arbitrary-length vector as consecutive N/2-slot chunks."""
    v = np.asarray(values, dtype=np.float64).ravel()
    slots = params.slot_count
    seeds = np.random.SeedSequence(seed).spawn(max(1, -(-v.size // slots)))
    return [
        encrypt(encode(v[i : i + slots], params), keys, params, seed=sq)
        for sq, i in zip(seeds, range(0, max(v.size, 1), slots))
    ]


def decrypt_vector(cts, secret, length: int) -> np.ndarray:
    if not cts:
        return np.zeros(0)
    return np.concatenate([decrypt(ct, secret) for ct in cts])[:length]


def ciphertext_count(k: int, params: CkksParams, lanes_per_slot: int, slot_model: str | None = None) -> int:
    """Ciphertexts needed for ``k`` values at ``lanes_per_slot`` values per slot.

    ``slot_model="paper_N"`` counts N slots per ciphertext; ``"standard_N_half"``
    counts the N/2 slots CKKS actually provides.
    """
    if k < 0:
        raise ConfigurationError("k must be non-negative")
    slot_model = slot_model or params.slot_model
    if slot_model not in SLOT_MODELS:
        raise ConfigurationError(f"slot_model must be one of {SLOT_MODELS}")
    slots = params.ring_dim if slot_model == "paper_N" else params.ring_dim // 2
    per_ct = slots * lanes_per_slot
    return -(-k // per_ct)
