"""Fixed-point encoding of reals into Z_t.

A value is stored as an integer mantissa mod t together with a power-of-two
scale; the represented real is ``centered(mantissa) / 2**scale_log2``.
Scales only grow through a circuit, so decoding happens once, on the client.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "FixedPointValue",
    "ScaleTracker",
    "ScaleMismatchError",
    "PlaintextOverflowError",
    "centered",
    "round_half_away",
    "encode_real",
    "decode_real",
    "scale_after",
]


class PlaintextOverflowError(ValueError):
    pass


class ScaleMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class FixedPointValue:
    mantissa: int
    scale_log2: int

    def __post_init__(self):
        if self.scale_log2 < 0:
            raise ValueError("scale_log2 must be non-negative")


def centered(v: int, t: int) -> int:
    """Map [0, t) onto (-t/2, t/2]."""
    v %= t
    return v - t if v > t // 2 else v


def round_half_away(x: float) -> int:
    r = math.floor(abs(x) + 0.5)
    return int(r) if x >= 0 else -int(r)


def encode_real(x: float, scale_log2: int, t: int) -> FixedPointValue:
    scaled = x * 2.0 ** scale_log2
    if not math.isfinite(scaled) or abs(scaled) >= t / 2:
        raise PlaintextOverflowError(f"plaintext overflow: {x} at scale 2^{scale_log2} does not fit t={t}")
    r = round_half_away(scaled)
    if not -t / 2 < r <= t / 2:
        raise PlaintextOverflowError(f"plaintext overflow: {x} rounds to {r} outside centered Z_{t}")
    return FixedPointValue(r % t, scale_log2)


def decode_real(v: FixedPointValue, t: int) -> float:
    return centered(v.mantissa, t) / 2.0 ** v.scale_log2


def scale_after(op: str, s_a: int, s_b: int) -> int:
    if op == "add":
        if s_a != s_b:
            raise ScaleMismatchError(f"scale mismatch: 2^{s_a} vs 2^{s_b}; align with a plaintext multiply")
        return s_a
    if op == "mul":
        return s_a + s_b
    raise ValueError(f"unknown op {op!r}")


@dataclass
class ScaleTracker:
    """Per-wire scale bookkeeping for circuit construction."""

    scales: dict = field(default_factory=dict)

    def set(self, wire, scale_log2: int) -> None:
        self.scales[wire] = scale_log2

    def __getitem__(self, wire) -> int:
        return self.scales[wire]

    def combine(self, op: str, out, a, b) -> int:
        s = scale_after(op, self.scales[a], self.scales[b])
        self.scales[out] = s
        return s
