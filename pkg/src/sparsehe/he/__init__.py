"""Additive CKKS engine, lane packing and wire formats."""

from .ckks import (
    Ciphertext,
    CkksParams,
    KeyPair,
    Plaintext,
    add_ciphertexts,
    ciphertext_count,
    ciphertext_size_bytes,
    decode,
    decrypt,
    decrypt_vector,
    encode,
    encrypt,
    encrypt_vector,
    keygen,
    sum_ciphertexts,
)
from .packing import PackingConfig, dequantize, pack_lanes, quantize, unpack_lanes, unpack_sum
from .wire import decode_indices, deserialize_ciphertext, encode_indices, serialize_ciphertext

__all__ = [
    "Ciphertext",
    "CkksParams",
    "KeyPair",
    "PackingConfig",
    "Plaintext",
    "add_ciphertexts",
    "ciphertext_count",
    "ciphertext_size_bytes",
    "decode",
    "decode_indices",
    "decrypt",
    "decrypt_vector",
    "dequantize",
    "deserialize_ciphertext",
    "encode",
    "encode_indices",
    "encrypt",
    "encrypt_vector",
    "keygen",
    "pack_lanes",
    "quantize",
    "serialize_ciphertext",
    "sum_ciphertexts",
    "unpack_lanes",
    "unpack_sum",
]
