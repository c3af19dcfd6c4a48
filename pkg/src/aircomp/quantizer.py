"""Fixed-length parameter quantization and sum-digit reconstruction.

Model parameters are mapped to k-bit words before transmission.  Two codebooks
are supported:

* ``SIGN_MAGNITUDE``: bit 0 is the sign, bits 1..k-1 are the truncated binary
  expansion of |p| (weights 2^-1 .. 2^-(k-1)).
* ``OFFSET_BINARY``: the k-bit unsigned integer round((p + 1) * 2^(k-1)).
  Positional weighting is linear, so per-position digit sums from two users
  reconstruct the exact sum of the dequantized values.

The receiver never sees individual users' bits, only per-position digit sums
in {0, 1, 2}; ``reconstruct_sum`` maps those back to a real value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class QuantMode(Enum):
    SIGN_MAGNITUDE = "sign-magnitude"
    OFFSET_BINARY = "offset-binary"


@dataclass(frozen=True)
class QuantizerConfig:
    bit_length: int = 13
    mode: QuantMode = QuantMode.OFFSET_BINARY

    def __post_init__(self):
        if self.bit_length < 2:
            raise ValueError(f"bit_length must be >= 2, got {self.bit_length}")

    @property
    def step(self) -> float:
        return 2.0 ** (1 - self.bit_length)

    @property
    def clamp_range(self) -> tuple[float, float]:
        if self.mode is QuantMode.SIGN_MAGNITUDE:
            return (-1.0 + self.step, 1.0 - self.step)
        return (-1.0, 1.0 - self.step)


@dataclass
class ParameterBlock:
    """Parameter values alongside their quantized k-bit words."""

    values: np.ndarray
    bits: np.ndarray  # shape (n_params, k), entries in {0, 1}
    clip_count: int = 0


@dataclass
class PackedParameters:
    """Parameter bits laid out into fixed-length packet payloads.

    Each packet payload is exactly ``n_source_bits`` long and holds
    ``params_per_packet`` whole k-bit slots; trailing bits that cannot hold a
    whole slot, and slots beyond the parameter count, are zero padding and are
    dropped again on unpack.
    """

    packets: list[np.ndarray]
    num_params: int
    bit_length: int
    n_source_bits: int
    params_per_packet: int
    clip_count: int = 0


def _check_finite(p: float) -> None:
    if not math.isfinite(p):
        raise ValueError(f"non-finite parameter value {p!r}: corrupt model state")


def quantize(p: float, cfg: QuantizerConfig) -> np.ndarray:
    """Quantize one value to a k-bit word (uint8 array, MSB first)."""
    _check_finite(p)
    return quantize_many(np.asarray([p], dtype=np.float64), cfg)[0]


def quantize_many(values: np.ndarray, cfg: QuantizerConfig) -> np.ndarray:
    """Vectorized quantize -> (n, k) bit matrix."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite parameter values: corrupt model state")
    k = cfg.bit_length
    lo, hi = cfg.clamp_range
    p = np.clip(values, lo, hi)
    if cfg.mode is QuantMode.SIGN_MAGNITUDE:
        # s_0 sign, s_i = i-th fractional binary digit of |p| (truncation).
        mag = np.floor(np.abs(p) * 2.0 ** (k - 1)).astype(np.int64)
        bits = np.empty((len(p), k), dtype=np.uint8)
        bits[:, 0] = (np.asarray(values) < 0).astype(np.uint8)
        for i in range(1, k):
            bits[:, i] = (mag >> (k - 1 - i)) & 1
        return bits
    q = np.rint((p + 1.0) * 2.0 ** (k - 1)).astype(np.int64)
    q = np.clip(q, 0, (1 << k) - 1)
    bits = np.empty((len(p), k), dtype=np.uint8)
    for i in range(k):
        bits[:, i] = (q >> (k - 1 - i)) & 1
    return bits


def dequantize(bits: np.ndarray, cfg: QuantizerConfig) -> float:
    """Inverse map of quantize; bits must be a length-k word."""
    bits = np.asarray(bits)
    if bits.shape != (cfg.bit_length,):
        raise ValueError(f"expected {cfg.bit_length} bits, got shape {bits.shape}")
    return float(dequantize_many(bits[None, :], cfg)[0])


def dequantize_many(bits: np.ndarray, cfg: QuantizerConfig) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    k = cfg.bit_length
    if bits.ndim != 2 or bits.shape[1] != k:
        raise ValueError(f"expected (n, {k}) bit matrix, got shape {bits.shape}")
    if cfg.mode is QuantMode.SIGN_MAGNITUDE:
        weights = 2.0 ** -np.arange(1, k)
        mag = bits[:, 1:] @ weights
        return (1.0 - 2.0 * bits[:, 0]) * mag
    weights = 2.0 ** np.arange(k - 1, -1, -1)
    return (bits @ weights) / 2.0 ** (k - 1) - 1.0


def reconstruct_sum(digits: np.ndarray, cfg: QuantizerConfig, num_users: int = 2) -> float:
    """Map per-position digit sums back to the real-valued parameter sum."""
    vals, _ = reconstruct_sum_many(np.asarray(digits)[None, :], cfg, num_users)
    return float(vals[0])


def reconstruct_sum_many(
    digits: np.ndarray, cfg: QuantizerConfig, num_users: int = 2
) -> tuple[np.ndarray, int]:
    """Vectorized reconstruct -> (values, sign_ambiguous_count).

    Offset-binary reconstruction is exact by linearity.  Sign-magnitude sums
    are exact when the sign digit is 0 (both positive) or ``num_users`` (both
    negative); a mixed sign digit does not determine the sum, so the value is
    reported as 0 and counted.
    """
    digits = np.asarray(digits, dtype=np.int64)
    k = cfg.bit_length
    if digits.ndim != 2 or digits.shape[1] != k:
        raise ValueError(f"expected (n, {k}) digit matrix, got shape {digits.shape}")
    if np.any(digits < 0) or np.any(digits > num_users):
        raise ValueError(f"sum digit outside 0..{num_users}: decoder fault")
    if cfg.mode is QuantMode.OFFSET_BINARY:
        weights = 2.0 ** np.arange(k - 1, -1, -1)
        return (digits @ weights) / 2.0 ** (k - 1) - num_users, 0
    weights = 2.0 ** -np.arange(1, k)
    mag = digits[:, 1:] @ weights
    sign_digit = digits[:, 0]
    sign = np.zeros(len(digits))
    sign[sign_digit == 0] = 1.0
    sign[sign_digit == num_users] = -1.0
    ambiguous = int(np.sum((sign_digit > 0) & (sign_digit < num_users)))
    return sign * mag, ambiguous


def pack_parameters(values, n_source_bits: int, cfg: QuantizerConfig) -> PackedParameters:
    """Quantize values and lay the bits into n_source_bits-long packets."""
    k = cfg.bit_length
    if n_source_bits < k:
        raise ValueError(f"packet payload {n_source_bits} shorter than one {k}-bit slot")
    values = np.asarray(values, dtype=np.float64)
    lo, hi = cfg.clamp_range
    clip_count = int(np.sum((values < lo) | (values > hi)))
    bits = quantize_many(values, cfg)
    per_packet = n_source_bits // k
    num_packets = max(1, -(-len(values) // per_packet))
    packets = []
    for ip in range(num_packets):
        payload = np.zeros(n_source_bits, dtype=np.uint8)
        chunk = bits[ip * per_packet : (ip + 1) * per_packet]
        payload[: chunk.size] = chunk.reshape(-1)
        packets.append(payload)
    return PackedParameters(
        packets=packets,
        num_params=len(values),
        bit_length=k,
        n_source_bits=n_source_bits,
        params_per_packet=per_packet,
        clip_count=clip_count,
    )


def unpack_sum_digits(
    digit_packets: list[np.ndarray], packed: PackedParameters, cfg: QuantizerConfig,
    num_users: int = 2,
) -> tuple[np.ndarray, int]:
    """Slice per-packet digit payloads into slots and reconstruct sums.

    Padding slots (beyond ``num_params``) are dropped, never averaged in.
    """
    k = cfg.bit_length
    per_packet = packed.params_per_packet
    rows = []
    remaining = packed.num_params
    for payload in digit_packets:
        n_here = min(per_packet, remaining)
        if n_here <= 0:
            break
        rows.append(np.asarray(payload[: n_here * k]).reshape(n_here, k))
        remaining -= n_here
    if remaining > 0:
        raise ValueError("digit packets do not cover all packed parameters")
    if not rows:
        return np.zeros(0), 0
    digit_matrix = np.concatenate(rows, axis=0)
    return reconstruct_sum_many(digit_matrix, cfg, num_users)
