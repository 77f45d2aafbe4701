import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsehe.errors import (
    ConfigurationError,
    ContractViolation,
    DecryptionOverflowError,
    EncodingOverflowError,
    ScaleMismatchError,
)
from sparsehe.he import ckks
from sparsehe.he.ckks import CkksParams
from sparsehe.he.ntt import NegacyclicNTT, as_ring, find_ntt_prime
from sparsehe.he.packing import (
    PackingConfig,
    max_lanes,
    pack_lanes,
    quantize,
    unpack_lanes,
    unpack_sum,
)
from sparsehe.he.wire import (
    HEADER_BYTES,
    decode_indices,
    deserialize_ciphertext,
    encode_indices,
    serialize_ciphertext,
)

DESK = CkksParams()


@pytest.fixture(scope="module")
def keys():
    return ckks.keygen(DESK, seed=1)


def schoolbook(a, b, q):
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += int(a[i]) * int(b[j])
            else:
                out[k - n] -= int(a[i]) * int(b[j])
    return [c % q for c in out]


@pytest.mark.parametrize("n", [8, 64, 256])
def test_ntt_matches_schoolbook(n):
    q = find_ntt_prime(61, n)
    assert (q - 1) % (2 * n) == 0 and q.bit_length() == 61
    ntt = NegacyclicNTT(n, q)
    rng = np.random.default_rng(n)
    for _ in range(3):
        a = [int(x) for x in rng.integers(0, 2**62, size=n)]
        b = [int(x) for x in rng.integers(0, 2**62, size=n)]
        a = [x % q for x in a]
        b = [x % q for x in b]
        got = ntt.multiply(as_ring(a, q), as_ring(b, q))
        assert [int(x) for x in got] == schoolbook(a, b, q)


def test_ntt_round_trip():
    q = find_ntt_prime(61, 128)
    ntt = NegacyclicNTT(128, q)
    a = as_ring(np.random.default_rng(0).integers(0, 2**40, size=128), q)
    assert list(ntt.inverse(ntt.forward(a))) == list(a)


def test_param_validation_and_tags():
    with pytest.raises(ConfigurationError):
        CkksParams(ring_dim=1000)
    with pytest.raises(ConfigurationError):
        CkksParams(q_bits=50, scale_log2=40)
    assert DESK.security_claim == "desk_insecure"
    assert CkksParams.full_scale().security_claim == "paper_128bit"
    assert DESK.slot_count == 512


def test_full_scale_is_accounting_only():
    with pytest.raises(ConfigurationError):
        ckks.keygen(CkksParams.full_scale(), seed=0)


def test_keygen_deterministic_and_small_error(keys):
    again = ckks.keygen(DESK, seed=1)
    assert list(again.public_b) == list(keys.public_b)
    assert set(np.unique(keys.secret)) <= {-1, 0, 1}
    q, ntt = ckks._context(DESK)
    e = (keys.public_b + ntt.multiply(keys.public_a, as_ring(keys.secret, q))) % q
    assert max(abs(c) for c in ckks.centered(e, q)) <= 6 * DESK.noise_stddev


def test_encode_decode():
    assert np.max(np.abs(ckks.decode(ckks.encode(np.zeros(512), DESK)))) < 1e-9
    v = np.random.default_rng(0).uniform(-1, 1, size=512)
    assert np.max(np.abs(ckks.decode(ckks.encode(v, DESK)) - v)) <= 1e-9
    assert abs(ckks.decode(ckks.encode([1.0], DESK))[0] - 1.0) <= 2.0**-28
    with pytest.raises(EncodingOverflowError):
        ckks.encode([2.0**21], DESK)
    with pytest.raises(ConfigurationError):
        ckks.encode(np.zeros(513), DESK)


def test_encrypt_decrypt_and_probabilistic(keys):
    v = np.random.default_rng(2).uniform(-1, 1, size=512)
    pt = ckks.encode(v, DESK)
    a = ckks.encrypt(pt, keys, DESK, seed=10)
    b = ckks.encrypt(pt, keys, DESK, seed=11)
    assert list(a.c0) != list(b.c0)
    assert np.max(np.abs(ckks.decrypt(a, keys) - v)) <= 1e-6
    assert np.max(np.abs(ckks.decrypt(b, keys) - v)) <= 1e-6
    zero = ckks.decrypt(ckks.encrypt(ckks.encode(np.zeros(4), DESK), keys, DESK, seed=3), keys)
    assert np.max(np.abs(zero)) <= 2.0 ** -(DESK.scale_log2 - 20)


def test_homomorphic_sum(keys):
    rng = np.random.default_rng(5)
    vs = [rng.uniform(-1, 1, size=512) for _ in range(5)]
    cts = [ckks.encrypt(ckks.encode(v, DESK), keys, DESK, seed=i) for i, v in enumerate(vs)]
    two = ckks.decrypt(ckks.add_ciphertexts(cts[0], cts[1]), keys)
    assert np.max(np.abs(two - (vs[0] + vs[1]))) <= 1e-5
    zero = ckks.encrypt(ckks.encode(np.zeros(512), DESK), keys, DESK, seed=99)
    assert np.max(np.abs(ckks.decrypt(ckks.add_ciphertexts(cts[0], zero), keys) - vs[0])) <= 1e-5
    total = ckks.sum_ciphertexts(cts)
    assert np.max(np.abs(ckks.decrypt(total, keys) - np.sum(vs, axis=0))) <= 5e-5
    assert total.noise_bound == pytest.approx(5 * DESK.fresh_noise_bound)


def test_scale_mismatch_is_refused(keys):
    a = ckks.encrypt(ckks.encode([1.0], DESK, 30), keys, DESK, seed=0)
    b = ckks.encrypt(ckks.encode([1.0], DESK, 31), keys, DESK, seed=1)
    with pytest.raises(ScaleMismatchError):
        ckks.add_ciphertexts(a, b)


def test_noise_budget_overflow(keys):
    small = CkksParams(ring_dim=1024, q_bits=61, scale_log2=12)
    k = ckks.keygen(small, seed=0)
    ct = ckks.encrypt(ckks.encode([0.5], small), k, small, seed=0)
    assert ct.noise_bound >= ct.scale / 2
    with pytest.raises(DecryptionOverflowError):
        ckks.decrypt(ct, k)


def test_vector_helpers(keys):
    v = np.random.default_rng(1).uniform(-1, 1, size=1300)
    cts = ckks.encrypt_vector(v, keys, DESK, seed=4)
    assert len(cts) == 3
    assert np.max(np.abs(ckks.decrypt_vector(cts, keys, v.size) - v)) <= 1e-6


def test_ciphertext_count_boundaries():
    p = CkksParams.full_scale()
    assert ckks.ciphertext_count(6_695_501, p, 64) == 13
    assert ckks.ciphertext_count(0, p, 64) == 0
    assert ckks.ciphertext_count(524_288, p, 64) == 1
    assert ckks.ciphertext_count(524_289, p, 64) == 2
    assert ckks.ciphertext_count(6_695_501, p, 64, "standard_N_half") == 26


def test_size_formula():
    assert ckks.ciphertext_size_bytes(CkksParams.full_scale()) == 491_520
    assert DESK.ciphertext_bytes == 2 * 1024 * 61 // 8


def test_serialization_round_trip(keys):
    ct = ckks.encrypt(ckks.encode([0.25, -0.5], DESK), keys, DESK, seed=8)
    blob = serialize_ciphertext(ct)
    assert len(blob) == HEADER_BYTES + DESK.ciphertext_bytes
    back = deserialize_ciphertext(blob, DESK)
    assert list(back.c0) == list(ct.c0) and list(back.c1) == list(ct.c1)
    assert back.noise_bound == ct.noise_bound and back.scale_log2 == ct.scale_log2
    with pytest.raises(ContractViolation):
        deserialize_ciphertext(blob[:-1], DESK)
    with pytest.raises(ContractViolation):
        deserialize_ciphertext(b"XXXX" + blob[4:], DESK)


def test_index_varints():
    idx = np.array([0, 1, 5, 300, 100_000])
    raw = encode_indices(idx)
    assert np.array_equal(decode_indices(raw), idx)
    assert np.array_equal(decode_indices(encode_indices([])), [])
    with pytest.raises(ContractViolation):
        encode_indices([3, 1])


def test_packing_hand_examples():
    pc = PackingConfig(lanes_per_slot=1, lane_bits=8, guard_bits=8)
    assert int(pack_lanes([0.0], pc, 1)[0]) == 128
    assert unpack_sum(pack_lanes([0.0], pc, 1), pc, 1, 1)[0] == 0
    pc2 = PackingConfig(lanes_per_slot=2, lane_bits=8, guard_bits=8)
    packed = pack_lanes([1.0, -1.0], pc2, 1)
    assert int(packed[0]) == 255 * 2 ** (8 + 8) + 0
    assert list(unpack_lanes(packed, pc2, 2)) == [255, 0]


def test_packing_validation():
    pc = PackingConfig(lanes_per_slot=2, lane_bits=8, guard_bits=2)
    with pytest.raises(ConfigurationError):
        pack_lanes([0.1], pc, 5)
    with pytest.raises(ConfigurationError):
        PackingConfig(lanes_per_slot=64, lane_bits=8, guard_bits=8).check_params(CkksParams(scale_log2=24))
    assert max_lanes(CkksParams(scale_log2=24), 8, 8) == 2


def test_five_client_lane_sums_exact():
    pc = PackingConfig(lanes_per_slot=3, lane_bits=8, guard_bits=3, clip_range=1.0)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        size = int(rng.integers(1, 12))
        vecs = [rng.uniform(-1.2, 1.2, size=size) for _ in range(5)]
        packed = [pack_lanes(v, pc, 5) for v in vecs]
        total = [sum(int(p[i]) for p in packed) for i in range(len(packed[0]))]
        oracle = np.sum([quantize(v, pc) for v in vecs], axis=0)
        assert np.array_equal(unpack_sum(total, pc, size, 5), oracle)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 4),
    st.integers(2, 12),
    st.integers(0, 6),
    st.data(),
)
def test_lane_packing_exact_up_to_guard_capacity(lanes, lane_bits, guard_bits, data):
    pc = PackingConfig(lanes, lane_bits, guard_bits, clip_range=1.0)
    n = data.draw(st.integers(1, 2**guard_bits))
    size = data.draw(st.integers(1, 9))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    vecs = [rng.uniform(-1, 1, size=size) for _ in range(n)]
    packed = [pack_lanes(v, pc, n) for v in vecs]
    total = [sum(int(p[i]) for p in packed) for i in range(len(packed[0]))]
    oracle = np.sum([quantize(v, pc) for v in vecs], axis=0)
    assert np.array_equal(unpack_sum(total, pc, size, n), oracle)


def test_packed_sum_through_encryption():
    params = CkksParams(scale_log2=24)
    keys24 = ckks.keygen(params, seed=0)
    pc = PackingConfig(lanes_per_slot=2, lane_bits=8, guard_bits=8)
    rng = np.random.default_rng(4)
    vecs = [rng.uniform(-1, 1, size=100) for _ in range(5)]
    cts = []
    for i, v in enumerate(vecs):
        packed = np.array([float(p) for p in pack_lanes(v, pc, 5)])
        cts.append(ckks.encrypt(ckks.encode(packed, params), keys24, params, seed=i))
    slots = ckks.decrypt(ckks.sum_ciphertexts(cts), keys24)[:50]
    sums = unpack_sum([int(v) for v in np.rint(slots)], pc, 100, 5)
    assert np.array_equal(sums, np.sum([quantize(v, pc) for v in vecs], axis=0))
