"""Byte formats: ciphertext frames and varint delta-coded index lists.

A ciphertext frame is a 32-byte little-endian header followed by the payload,
``c0`` then ``c1``, each a bit-packed array of N coefficients of ``q_bits``
bits. The payload is exactly ``2 * N * q_bits / 8`` bytes.

Header layout::

    0   4s  magic b"SHEC"
    4   H   format version
    6   H   reserved (0)
    8   I   ring dimension N
    12  H   q_bits
    14  H   scale_log2
    16  H   level
    18  B   slot model (0 = paper_N, 1 = standard_N_half)
    19  B   reserved (0)
    20  d   noise bound
    28  I   reserved (0)
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import ContractViolation
from .ckks import SLOT_MODELS, Ciphertext, CkksParams, ciphertext_size_bytes

MAGIC = b"SHEC"
VERSION = 1
HEADER = struct.Struct("<4sHHIHHHBBdI")
HEADER_BYTES = HEADER.size
assert HEADER_BYTES == 32


def _pack_poly(coeffs, q_bits: int) -> bytes:
    acc = 0
    for i, c in enumerate(coeffs):
        acc |= int(c) << (i * q_bits)
    return acc.to_bytes(len(coeffs) * q_bits // 8, "little")


def _unpack_poly(raw: bytes, n: int, q_bits: int) -> np.ndarray:
    acc = int.from_bytes(raw, "little")
    mask = (1 << q_bits) - 1
    return np.array([(acc >> (i * q_bits)) & mask for i in range(n)], dtype=object)


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    p = ct.params
    header = HEADER.pack(
        MAGIC, VERSION, 0, p.ring_dim, p.q_bits, ct.scale_log2, ct.level,
        SLOT_MODELS.index(p.slot_model), 0, float(ct.noise_bound), 0,
    )
    return header + _pack_poly(ct.c0, p.q_bits) + _pack_poly(ct.c1, p.q_bits)


def deserialize_ciphertext(blob: bytes, params: CkksParams) -> Ciphertext:
    magic, version, _, n, q_bits, scale_log2, level, slot_model, _, noise, _ = HEADER.unpack_from(blob)
    if magic != MAGIC or version != VERSION:
        raise ContractViolation("not a ciphertext frame of a supported version")
    if (n, q_bits, SLOT_MODELS[slot_model]) != (params.ring_dim, params.q_bits, params.slot_model):
        raise ContractViolation("ciphertext frame does not match the parameter set")
    half = ciphertext_size_bytes(params) // 2
    body = blob[HEADER_BYTES:]
    if len(body) != 2 * half:
        raise ContractViolation(f"payload is {len(body)} bytes, expected {2 * half}")
    return Ciphertext(
        _unpack_poly(body[:half], n, q_bits),
        _unpack_poly(body[half:], n, q_bits),
        scale_log2,
        level,
        params,
        noise,
    )


def encode_varint(value: int) -> bytes:
    if value < 0:
        raise ContractViolation("varints are unsigned")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def encode_indices(indices) -> bytes:
    """Sorted unique indices as a varint count followed by varint gaps."""
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
        raise ContractViolation("indices must be sorted, unique and non-negative")
    out = bytearray(encode_varint(idx.size))
    prev = -1
    for i in idx.tolist():
        out += encode_varint(i - prev - 1)
        prev = i
    return bytes(out)


def decode_indices(raw: bytes) -> np.ndarray:
    values, cur, shift = [], 0, 0
    for byte in raw:
        cur |= (byte & 0x7F) << shift
        if byte & 0x80:
            shift += 7
        else:
            values.append(cur)
            cur, shift = 0, 0
    if not values or values[0] != len(values) - 1:
        raise ContractViolation("malformed index list")
    return np.cumsum(np.asarray(values[1:], dtype=np.int64) + 1) - 1
