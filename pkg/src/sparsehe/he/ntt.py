"""Negacyclic number-theoretic transform over Z_q[X]/(X^N + 1).

Coefficients live in numpy object arrays of Python ints so a 61-bit modulus
multiplies without overflow.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from sympy import isprime

from ..errors import ConfigurationError


@lru_cache(maxsize=None)
def find_ntt_prime(bits: int, ring_dim: int) -> int:
    """Largest prime below ``2**bits`` with ``q = 1 (mod 2N)``."""
    step = 2 * ring_dim
    q = ((1 << bits) - 1) // step * step + 1
    while q > step:
        if isprime(q):
            return q
        q -= step
    raise ConfigurationError(f"no NTT prime with {bits} bits for N={ring_dim}")


def primitive_2n_root(q: int, ring_dim: int) -> int:
    """Smallest-base primitive 2N-th root of unity mod q (psi**N == -1)."""
    exp = (q - 1) // (2 * ring_dim)
    for base in range(2, q):
        psi = pow(base, exp, q)
        if pow(psi, ring_dim, q) == q - 1:
            return psi
    raise ConfigurationError("no primitive 2N-th root")


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def as_ring(values, q: int) -> np.ndarray:
    """Object array of Python ints reduced into [0, q)."""
    return np.array([int(v) % q for v in np.asarray(values).ravel()], dtype=object)


class NegacyclicNTT:
    def __init__(self, ring_dim: int, q: int):
        if ring_dim < 2 or ring_dim & (ring_dim - 1):
            raise ConfigurationError("ring dimension must be a power of two")
        if (q - 1) % (2 * ring_dim):
            raise ConfigurationError("q must be 1 mod 2N")
        self.n = ring_dim
        self.q = q
        psi = primitive_2n_root(q, ring_dim)
        psi_inv = pow(psi, -1, q)
        omega, omega_inv = psi * psi % q, psi_inv * psi_inv % q
        self._psi_pow = self._powers(psi, ring_dim)
        self._psi_inv_pow = self._powers(psi_inv, ring_dim)
        self._n_inv = pow(ring_dim, -1, q)
        self._rev = _bit_reverse(ring_dim)
        self._fwd_tw = self._stage_twiddles(omega)
        self._inv_tw = self._stage_twiddles(omega_inv)

    def _powers(self, base: int, count: int) -> np.ndarray:
        out = [1] * count
        for i in range(1, count):
            out[i] = out[i - 1] * base % self.q
        return np.array(out, dtype=object)

    def _stage_twiddles(self, omega: int) -> list[np.ndarray]:
        stages, length = [], 2
        while length <= self.n:
            stages.append(self._powers(pow(omega, self.n // length, self.q), length // 2))
            length *= 2
        return stages

    def _cyclic(self, a: np.ndarray, twiddles) -> np.ndarray:
        q = self.q
        a = a[self._rev]
        length = 2
        for tw in twiddles:
            half = length // 2
            blocks = a.reshape(-1, length)
            u = blocks[:, :half]
            v = blocks[:, half:] * tw % q
            a = np.concatenate([(u + v) % q, (u - v) % q], axis=1).ravel()
            length *= 2
        return a

    def forward(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=object)
        return self._cyclic(a * self._psi_pow % self.q, self._fwd_tw)

    def inverse(self, a_hat) -> np.ndarray:
        a = self._cyclic(np.asarray(a_hat, dtype=object), self._inv_tw)
        return a * self._n_inv % self.q * self._psi_inv_pow % self.q

    def multiply(self, a, b) -> np.ndarray:
        return self.inverse(self.forward(a) * self.forward(b) % self.q)
