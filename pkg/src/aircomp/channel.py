"""Asynchronous two-user uplink: phase offsets, sample delays, CFO, AWGN.

Each user's stream is delayed by an integer number of samples, rotated by a
static carrier phase plus a per-sample CFO ramp, then superimposed; complex
white Gaussian noise calibrated against the measured superposed-signal power
is added at the receiver.  Channel gain per user is unity (single path); all
impairments are relative phase/timing/frequency terms.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np



class ScenarioKind(Enum):
    BAD = "bad"  # aligned phases, worst superposition geometry
    GOOD = "good"  # quadrature phases, best superposition geometry
    NEAR_REALISTIC = "near-realistic"  # random phase/delay/CFO per packet


@dataclass(frozen=True)
class ChannelScenario:
    phase: tuple[float, float]  # radians per user
    delay: tuple[int, int]  # samples per user
    cfo: tuple[float, float]  # Hz per user
    snr_db: float

    def __post_init__(self):
        for tau in self.delay:
            if tau < 0:
                raise ValueError(f"negative delay {tau}")


PHASE_RANGE = (0.0, 2.0 * np.pi)
DELAY_RANGE = (0, 5)  # samples, inclusive
CFO_RANGE = (-2000.0, 2000.0)  # Hz


def draw_scenario(kind: ScenarioKind, snr_db: float, rng: np.random.Generator) -> ChannelScenario:
    """Deterministic scenario draw for one packet."""
    if kind is ScenarioKind.BAD:
        return ChannelScenario((0.0, 0.0), (0, 0), (0.0, 0.0), snr_db)
    if kind is ScenarioKind.GOOD:
        return ChannelScenario((0.0, np.pi / 2), (0, 0), (0.0, 0.0), snr_db)
    phase = tuple(rng.uniform(*PHASE_RANGE, 2))
    delay = tuple(int(d) for d in rng.integers(DELAY_RANGE[0], DELAY_RANGE[1] + 1, 2))
    cfo = tuple(rng.uniform(*CFO_RANGE, 2))
    return ChannelScenario(phase, delay, cfo, snr_db)


def snr_calibrate(signal_power: float, snr_db: float) -> float:
    """Total complex noise variance for the requested SNR."""
    if not signal_power > 0:
        raise ValueError(f"signal power must be positive, got {signal_power}")
    return signal_power / 10.0 ** (snr_db / 10.0)


@dataclass
class ChannelOutput:
    rx: np.ndarray
    noise_var: float
    signal_power: float


def apply_channel(
    tx_a: np.ndarray,
    tx_b: np.ndarray,
    scen: ChannelScenario,
    rng: np.random.Generator,
    sample_rate: float = 20e6,
    cp_len: int = 16,
    power_window: slice | None = None,
    pad: int = 8,
) -> ChannelOutput:
    """Superimpose the two delayed/rotated streams and add calibrated noise.

    rx[m] = tx_a[m - tau_a] e^{j(phi_a + 2 pi f_a m / fs)}
          + tx_b[m - tau_b] e^{j(phi_b + 2 pi f_b m / fs)} + noise[m]

    Noise power is set against the mean power of the noiseless superposition
    over power_window (the data section; defaults to the whole stream), split
    evenly between real and imaginary parts.
    """
    tx_a = np.asarray(tx_a, dtype=np.complex128)
    tx_b = np.asarray(tx_b, dtype=np.complex128)
    if len(tx_a) != len(tx_b):
        raise ValueError("user streams must have equal nominal length")
    for tau in scen.delay:
        if tau > cp_len - 1:
            raise ValueError(f"delay {tau} exceeds the cyclic-prefix guard ({cp_len - 1})")
    n = len(tx_a) + pad
    m = np.arange(n)
    clean = np.zeros(n, dtype=np.complex128)
    for tx, phi, tau, f in zip((tx_a, tx_b), scen.phase, scen.delay, scen.cfo):
        shifted = np.zeros(n, dtype=np.complex128)
        shifted[tau : tau + len(tx)] = tx
        clean += shifted * np.exp(1j * (phi + 2.0 * np.pi * f * m / sample_rate))
    window = clean[power_window] if power_window is not None else clean
    signal_power = float(np.mean(np.abs(window) ** 2))
    if signal_power == 0.0:
        # Both users silent: calibrate against unit power by convention.
        signal_power = 1.0
    noise_var = snr_calibrate(signal_power, scen.snr_db)
    noise = rng.normal(size=n) + 1j * rng.normal(size=n)
    rx = clean + noise * np.sqrt(noise_var / 2.0)
    return ChannelOutput(rx=rx, noise_var=noise_var, signal_power=signal_power)
