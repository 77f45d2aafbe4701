"""Fixed-point lane packing so several quantized values share one slot.

A value ``v`` is clipped to ``[-clip, clip]`` and quantized to the signed
integer ``round(v * 2**(lane_bits-1) / clip)`` saturated to ``lane_bits``
bits, then offset by ``2**(lane_bits-1)`` so every code is non-negative.
``B`` codes form one integer in base ``2**(lane_bits + guard_bits)``, the
first value in the most significant lane. The guard bits absorb carries, so
the sum of up to ``2**guard_bits`` packed integers unpacks lane by lane
without any lane spilling into its neighbour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, ContractViolation
from .ckks import CkksParams


@dataclass(frozen=True)
class PackingConfig:
    lanes_per_slot: int = 2
    lane_bits: int = 8
    guard_bits: int = 8
    clip_range: float = 1.0

    def __post_init__(self):
        if self.lanes_per_slot < 1 or self.lane_bits < 2 or self.guard_bits < 0:
            raise ConfigurationError("need lanes_per_slot >= 1, lane_bits >= 2, guard_bits >= 0")
        if not self.clip_range > 0:
            raise ConfigurationError("clip_range must be positive")

    @property
    def lane_width(self) -> int:
        return self.lane_bits + self.guard_bits

    @property
    def slot_bits(self) -> int:
        return self.lanes_per_slot * self.lane_width

    @property
    def offset(self) -> int:
        return 1 << (self.lane_bits - 1)

    @property
    def quant_scale(self) -> float:
        return self.offset / self.clip_range

    @property
    def step(self) -> float:
        """Value represented by one quantization level."""
        return self.clip_range / self.offset

    @property
    def max_summands(self) -> int:
        return 1 << self.guard_bits

    def with_clip(self, clip_range: float) -> "PackingConfig":
        return PackingConfig(self.lanes_per_slot, self.lane_bits, self.guard_bits, clip_range)

    def check_clients(self, n_clients: int) -> None:
        need = math.ceil(math.log2(n_clients)) if n_clients > 1 else 0
        if self.guard_bits < need:
            raise ConfigurationError(
                f"guard_bits={self.guard_bits} cannot absorb {n_clients} summands (need {need})"
            )

    def check_params(self, params: CkksParams) -> None:
        if self.slot_bits > params.usable_bits:
            raise ConfigurationError(
                f"{self.lanes_per_slot} lanes x {self.lane_width} bits = {self.slot_bits} bits "
                f"exceed the {params.usable_bits} usable bits of a slot at scale 2^{params.scale_log2}"
            )

    def validate(self, params: CkksParams, n_clients: int) -> None:
        self.check_clients(n_clients)
        self.check_params(params)


def max_lanes(params: CkksParams, lane_bits: int, guard_bits: int) -> int:
    return max(0, params.usable_bits // (lane_bits + guard_bits))


def quantize(values, pc: PackingConfig) -> np.ndarray:
    """Signed integer codes in ``[-2**(lane_bits-1), 2**(lane_bits-1) - 1]``."""
    v = np.clip(np.asarray(values, dtype=np.float64).ravel(), -pc.clip_range, pc.clip_range)
    return np.clip(np.rint(v * pc.quant_scale), -pc.offset, pc.offset - 1).astype(np.int64)


def dequantize(codes, pc: PackingConfig) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) / pc.quant_scale


def pack_codes(offset_codes, pc: PackingConfig) -> np.ndarray:
    """Positional packing of non-negative lane codes; pads the tail with offset codes."""
    codes = [int(c) for c in np.asarray(offset_codes).ravel()]
    b = pc.lanes_per_slot
    codes += [pc.offset] * (-len(codes) % b)
    out = []
    for i in range(0, len(codes), b):
        acc = 0
        for c in codes[i : i + b]:
            acc = (acc << pc.lane_width) | c
        out.append(acc)
    return np.array(out, dtype=object)


def pack_lanes(values, pc: PackingConfig, n_clients: int) -> np.ndarray:
    """Clip, quantize, offset and pack ``values`` into ``ceil(len / B)`` integers."""
    pc.check_clients(n_clients)
    return pack_codes(quantize(values, pc) + pc.offset, pc)


def unpack_lanes(packed, pc: PackingConfig, count: int) -> np.ndarray:
    """Split packed integers back into ``count`` raw lane values (no de-offset)."""
    mask = (1 << pc.lane_width) - 1
    lanes = []
    for p in np.asarray(packed, dtype=object).ravel():
        p = int(p)
        if p < 0:
            raise ContractViolation("packed values must be non-negative")
        chunk = [(p >> (pc.lane_width * j)) & mask for j in range(pc.lanes_per_slot)]
        lanes.extend(reversed(chunk))
    if count > len(lanes):
        raise ContractViolation(f"asked for {count} lanes, only {len(lanes)} packed")
    return np.array(lanes[:count], dtype=object)


def unpack_sum(packed_sum, pc: PackingConfig, count: int, n_summands: int) -> np.ndarray:
    """Lane-wise signed integer sums from the sum of ``n_summands`` packed vectors."""
    if n_summands > pc.max_summands:
        raise ContractViolation(f"{n_summands} summands overflow {pc.guard_bits} guard bits")
    lanes = unpack_lanes(packed_sum, pc, count)
    return np.array([int(v) - n_summands * pc.offset for v in lanes], dtype=np.int64)
