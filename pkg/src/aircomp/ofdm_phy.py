"""OFDM modulation, framing, channel estimation, and phase tracking.

The grid geometry copies 802.11a: 64-point FFT at 20 MHz, 16-sample cyclic
prefix, 48 data subcarriers, pilots on -21, -7, +7, +21.  Two users share the
air: their data symbols overlap, their preambles are time-orthogonal (one
training slot each before the data section), and the four pilot tones are
split between them (-21/-7 vs +7/+21) so each user's common phase can be
tracked per symbol without interference from the other.

Subcarriers are addressed by logical index n in [-32, 31]; FFT bin = n mod 64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convcodec import SoftObservation
from .rng import substream

_PREAMBLE_SEED = 0x0FD5


def _default_data_carriers() -> tuple[int, ...]:
    pilots = {-21, -7, 7, 21}
    return tuple(n for n in range(-26, 27) if n != 0 and n not in pilots)


@dataclass(frozen=True)
class OfdmConfig:
    fft_size: int = 64
    cp_len: int = 16
    sample_rate: float = 20e6
    data_carriers: tuple[int, ...] = field(default_factory=_default_data_carriers)
    pilot_carriers: tuple[int, ...] = (-21, -7, 7, 21)
    pilot_assignment: tuple[tuple[int, ...], ...] = ((-21, -7), (7, 21))
    num_users: int = 2

    def __post_init__(self):
        data = set(self.data_carriers)
        pilots = set(self.pilot_carriers)
        if data & pilots:
            raise ValueError("data and pilot subcarrier sets overlap")
        assigned: set[int] = set()
        for user_pilots in self.pilot_assignment:
            if not user_pilots:
                raise ValueError("each user needs a non-empty pilot set")
            if assigned & set(user_pilots):
                raise ValueError("pilot assignment must be disjoint across users")
            assigned |= set(user_pilots)
        if assigned != pilots:
            raise ValueError("pilot assignment must cover the pilot set")

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def symbol_duration(self) -> float:
        return self.symbol_len / self.sample_rate

    @property
    def num_preamble_slots(self) -> int:
        return self.num_users

    @property
    def occupied_carriers(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.data_carriers) | set(self.pilot_carriers)))

    def bins(self, carriers) -> np.ndarray:
        return np.asarray([n % self.fft_size for n in carriers], dtype=np.int64)

    def preamble_sequence(self, user: int) -> np.ndarray:
        """Fixed known BPSK training values over the occupied subcarriers."""
        rng = substream(_PREAMBLE_SEED, "preamble", user)
        return 1.0 - 2.0 * rng.integers(0, 2, len(self.occupied_carriers)).astype(float)


@dataclass
class OfdmFrame:
    """Per-user frequency grid: preamble slots then data symbols.

    grid[k] is the 64-bin symbol k in FFT-bin order; the user transmits zeros
    during the other user's preamble slot and on the other user's pilots.
    """

    grid: np.ndarray  # (num_preamble_slots + num_symbols, fft_size) complex
    user: int
    num_symbols: int
    num_pad_cells: int


@dataclass
class ChannelEstimate:
    """Preamble-referenced response plus per-symbol tracked phases."""

    h0: np.ndarray  # (num_users, fft_size) complex, zeros on unoccupied bins
    theta: np.ndarray  # (num_symbols, num_users) radians

    def effective(self, user: int, symbol: int) -> np.ndarray:
        return self.h0[user] * np.exp(1j * self.theta[symbol, user])


def bits_to_bpsk(bits: np.ndarray) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def num_data_symbols(n_coded_bits: int, cfg: OfdmConfig) -> int:
    return -(-n_coded_bits // len(cfg.data_carriers))


def build_frame(coded_bits, user: int, cfg: OfdmConfig,
                num_symbols: int | None = None) -> OfdmFrame:
    """Map coded bits onto the user's data cells; bit 0 -> +1, 1 -> -1.

    Pilots carry +1 on the user's own pilot tones every symbol; pad cells in
    the final symbol carry bit 0.
    """
    coded_bits = np.asarray(coded_bits, dtype=np.uint8).reshape(-1)
    per_symbol = len(cfg.data_carriers)
    needed = num_data_symbols(len(coded_bits), cfg)
    if num_symbols is None:
        num_symbols = needed
    elif num_symbols < needed:
        raise ValueError(
            f"{len(coded_bits)} coded bits need {needed} symbols, frame has {num_symbols}"
        )
    capacity = num_symbols * per_symbol
    padded = np.zeros(capacity, dtype=np.uint8)
    padded[: len(coded_bits)] = coded_bits
    cells = bits_to_bpsk(padded).reshape(num_symbols, per_symbol)

    n_slots = cfg.num_preamble_slots + num_symbols
    grid = np.zeros((n_slots, cfg.fft_size), dtype=np.complex128)
    grid[user, cfg.bins(cfg.occupied_carriers)] = cfg.preamble_sequence(user)
    data_bins = cfg.bins(cfg.data_carriers)
    own_pilot_bins = cfg.bins(cfg.pilot_assignment[user])
    for k in range(num_symbols):
        grid[cfg.num_preamble_slots + k, data_bins] = cells[k]
        grid[cfg.num_preamble_slots + k, own_pilot_bins] = 1.0
    return OfdmFrame(
        grid=grid,
        user=user,
        num_symbols=num_symbols,
        num_pad_cells=capacity - len(coded_bits),
    )


def ofdm_modulate(frame: OfdmFrame, cfg: OfdmConfig) -> np.ndarray:
    """Unitary IFFT per symbol with a 16-sample cyclic prefix prepended."""
    time_syms = np.fft.ifft(frame.grid, axis=1, norm="ortho")
    with_cp = np.concatenate([time_syms[:, -cfg.cp_len :], time_syms], axis=1)
    return with_cp.reshape(-1)


def ofdm_demodulate(samples: np.ndarray, symbol_start: int, cfg: OfdmConfig,
                    num_slots: int) -> np.ndarray:
    """FFT num_slots consecutive symbols, windows cut past each CP.

    symbol_start points at the first symbol's CP; with relative arrival
    offsets under the CP length the nominal (trigger-referenced) start is a
    safe cut and per-user delays appear as linear phase across subcarriers.
    """
    samples = np.asarray(samples)
    end = symbol_start + num_slots * cfg.symbol_len
    if end > len(samples):
        raise ValueError(f"stream of {len(samples)} samples shorter than {end} expected")
    blocks = samples[symbol_start:end].reshape(num_slots, cfg.symbol_len)
    return np.fft.fft(blocks[:, cfg.cp_len :], axis=1, norm="ortho")


def estimate_channels(preamble_grid: np.ndarray, cfg: OfdmConfig) -> np.ndarray:
    """Least-squares per-user response from the time-orthogonal preambles.

    preamble_grid: (num_users, fft_size) demodulated preamble slots, slot u
    belonging to user u.  Returns (num_users, fft_size) with zeros on
    unoccupied bins.
    """
    h0 = np.zeros((cfg.num_users, cfg.fft_size), dtype=np.complex128)
    bins = cfg.bins(cfg.occupied_carriers)
    for user in range(cfg.num_users):
        p = cfg.preamble_sequence(user)
        if np.any(p == 0):
            raise ValueError("training sequence has a zero cell")
        h0[user, bins] = preamble_grid[user, bins] / p
    return h0


def track_phase(data_grid: np.ndarray, h0: np.ndarray, cfg: OfdmConfig) -> ChannelEstimate:
    """Per-symbol common-phase estimate from each user's own pilot tones."""
    num_symbols = data_grid.shape[0]
    theta = np.zeros((num_symbols, cfg.num_users))
    for user in range(cfg.num_users):
        pbins = cfg.bins(cfg.pilot_assignment[user])
        if len(pbins) == 0:
            raise ValueError("empty pilot set")
        ref = np.conj(h0[user, pbins])  # pilot value is +1
        corr = data_grid[:, pbins] @ ref
        theta[:, user] = np.angle(corr)
    return ChannelEstimate(h0=h0, theta=theta)


def extract_observation(data_grid: np.ndarray, est: ChannelEstimate,
                        cfg: OfdmConfig, n_coded_bits: int,
                        noise_var: float) -> SoftObservation:
    """Flatten the data cells and matching effective gains in bit order."""
    data_bins = cfg.bins(cfg.data_carriers)
    y = data_grid[:, data_bins].reshape(-1)[:n_coded_bits]
    rot = np.exp(1j * est.theta)  # (num_symbols, num_users)
    h_a = (rot[:, [0]] * est.h0[0, data_bins]).reshape(-1)[:n_coded_bits]
    h_b = (rot[:, [1]] * est.h0[1, data_bins]).reshape(-1)[:n_coded_bits]
    return SoftObservation(y=y, h_a=h_a, h_b=h_b, noise_var=noise_var)
