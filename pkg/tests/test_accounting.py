import time
from fractions import Fraction

import pytest

from sparsehe.accounting import (
    communication_breakdown,
    full_report,
    he_only_modes,
    index_overhead_estimate,
    varint_len,
)
from sparsehe.he.ckks import CkksParams

PAPER = CkksParams.full_scale()
D = 66_955_010


def test_paper_breakdown():
    t0 = time.perf_counter()
    b = communication_breakdown(D, 0.9, 5, PAPER, 64)
    disp = b.display()
    assert time.perf_counter() - t0 < 1.0
    assert b.k == 6_695_501
    assert b.slots_effective == 524_288
    assert b.ciphertexts == 13
    assert b.ciphertext_bytes == 491_520
    assert disp["ciphertext_mb"] == "0.47"
    assert disp["per_client_mb"] == "6.1"
    assert disp["baseline_per_client_mb"] == "255.4"
    assert disp["reduction_pct"] == "97.6"
    assert disp["total_mb"] == "30.5"
    assert disp["baseline_total_mb"] == "1277"
    assert disp["compression_ratio"] == "42"
    assert isinstance(b.per_client_mb, Fraction)


def test_half_slot_model():
    b = communication_breakdown(D, 0.9, 5, PAPER, 64, "standard_N_half")
    assert b.ciphertexts == 26
    assert b.display()["per_client_mb"] == "12.2"


def test_he_only_modes_flag_the_gap():
    modes = he_only_modes(D, 5, PAPER)
    packed = modes["modes"]["packed_paper_N"]
    assert packed["ciphertexts_per_client"] == 128
    assert packed["total_mb"] == pytest.approx(300, abs=1)
    assert modes["closest_mode"] == "expansion_5x_plaintext"


def test_report_flags_both_figures():
    rep = full_report(D, 0.9, 5, PAPER, 64)
    assert rep["reported_total_mb"]["sparse_he"] == 32
    assert any("30.5" in f and "32" in f for f in rep["flags"])
    assert rep["security_claim"] == "paper_128bit"


def test_varints():
    assert varint_len(0) == 1 and varint_len(127) == 1 and varint_len(128) == 2
    assert index_overhead_estimate(10, 0) == 1
    assert index_overhead_estimate(100, 10) == 1 + 10


def test_monotone_in_sparsity():
    sizes = [communication_breakdown(D, s, 5, PAPER, 64).per_client_bytes for s in (0.5, 0.8, 0.9, 0.95, 0.99)]
    assert all(a > b for a, b in zip(sizes, sizes[1:]))
