"""One aggregation round end to end, digital and analog.

Digital round: quantize -> pack -> encode -> frame -> modulate per user,
superimpose through the asynchronous channel, estimate/track at the receiver,
decode per-position bit sums with the configured decoder, reconstruct the
parameter sums, divide by the user count.

Analog baseline: parameters ride directly on subcarrier I/Q (two per cell),
modeled at the per-subcarrier reception level with exactly known effective
gains; the receiver applies the composite gain's conjugate normalized by its
squared magnitude.  Repeats redraw the channel and an oracle picks the
minimum-MSE repeat, mirroring the airtime-parity comparison setup.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from . import convcodec as cc
from . import ofdm_phy as phy
from . import quantizer as qz
from .rng import substream

_GAIN_FLOOR = 1e-12  # |H_a+H_b|^2 below this counts as fully destructive


@dataclass(frozen=True)
class RoundConfig:
    decoder: str = "rsjd"  # fsjd | rsjd | psud
    rsjd_states: int = 512
    quantizer: qz.QuantizerConfig = field(default_factory=qz.QuantizerConfig)
    ofdm: phy.OfdmConfig = field(default_factory=phy.OfdmConfig)
    code: cc.CodeSpec = field(default_factory=lambda: cc.WIFI_CODE)
    scenario: chan.ScenarioKind = chan.ScenarioKind.NEAR_REALISTIC
    snr_db: float = 10.0
    n_source_bits: int = 1300
    num_selected: int = 2

    def __post_init__(self):
        if self.num_selected != 2:
            raise ValueError("decoders are implemented for exactly two users")
        if self.decoder not in ("fsjd", "rsjd", "psud"):
            raise ValueError(f"unknown decoder {self.decoder!r}")


@dataclass
class RoundDiagnostics:
    sum_bit_errors: int
    total_sum_bits: int
    path_metrics: list
    sign_ambiguity_count: int
    clip_count: int


@dataclass
class RoundResult:
    sum_digits: list[np.ndarray]  # per packet, payload positions only
    aggregated: np.ndarray
    diagnostics: RoundDiagnostics


@dataclass
class AnalogRoundResult:
    aggregated: np.ndarray
    mse: float
    best_repeat: int
    repeats: int


def decode_observation(obs: cc.SoftObservation, cfg: RoundConfig) -> cc.DecodeResult:
    if cfg.decoder == "fsjd":
        return cc.fsjd_decode(obs, cfg.code)
    if cfg.decoder == "rsjd":
        return cc.rsjd_decode(obs, cfg.code, cfg.rsjd_states)
    return cc.psud_decode(obs, cfg.code)


def run_packet(
    bits_a: np.ndarray,
    bits_b: np.ndarray,
    cfg: RoundConfig,
    scen_rng: np.random.Generator,
    noise_rng: np.random.Generator,
) -> tuple[cc.DecodeResult, cc.SoftObservation, chan.ChannelScenario]:
    """Carry one payload pair through the full PHY chain and decode it."""
    if len(bits_a) != len(bits_b):
        raise ValueError("payloads must have equal length")
    ofdm = cfg.ofdm
    coded_a = cc.conv_encode(bits_a, cfg.code, append_tail=True)
    coded_b = cc.conv_encode(bits_b, cfg.code, append_tail=True)
    nsym = phy.num_data_symbols(len(coded_a), ofdm)
    tx_a = phy.ofdm_modulate(phy.build_frame(coded_a, 0, ofdm, nsym), ofdm)
    tx_b = phy.ofdm_modulate(phy.build_frame(coded_b, 1, ofdm, nsym), ofdm)
    scen = chan.draw_scenario(cfg.scenario, cfg.snr_db, scen_rng)
    data_start = ofdm.num_preamble_slots * ofdm.symbol_len
    out = chan.apply_channel(
        tx_a, tx_b, scen, noise_rng,
        sample_rate=ofdm.sample_rate, cp_len=ofdm.cp_len,
        power_window=slice(data_start, data_start + nsym * ofdm.symbol_len),
    )
    grid = phy.ofdm_demodulate(out.rx, 0, ofdm, ofdm.num_preamble_slots + nsym)
    h0 = phy.estimate_channels(grid[: ofdm.num_preamble_slots], ofdm)
    est = phy.track_phase(grid[ofdm.num_preamble_slots :], h0, ofdm)
    obs = phy.extract_observation(
        grid[ofdm.num_preamble_slots :], est, ofdm, len(coded_a), out.noise_var
    )
    return decode_observation(obs, cfg), obs, scen


def run_digital_round(
    params_a, params_b, cfg: RoundConfig, seed: int
) -> RoundResult:
    """Quantized upload of both models and sum-decoded aggregation."""
    params_a = np.asarray(params_a, dtype=np.float64)
    params_b = np.asarray(params_b, dtype=np.float64)
    if params_a.shape != params_b.shape:
        raise ValueError("both users must upload the same parameter count")
    packed_a = qz.pack_parameters(params_a, cfg.n_source_bits, cfg.quantizer)
    packed_b = qz.pack_parameters(params_b, cfg.n_source_bits, cfg.quantizer)
    sum_digits: list[np.ndarray] = []
    metrics = []
    errors = 0
    total = 0
    for i, (pa, pb) in enumerate(zip(packed_a.packets, packed_b.packets)):
        try:
            res, _, _ = run_packet(
                pa, pb, cfg, substream(seed, "scenario", i), substream(seed, "noise", i)
            )
        except Exception as exc:
            raise RuntimeError(f"digital round failed at packet {i}: {exc}") from exc
        digits = res.sum_bits[: cfg.n_source_bits].astype(np.int64)
        truth = pa.astype(np.int64) + pb.astype(np.int64)
        errors += int(np.sum(digits != truth))
        total += cfg.n_source_bits
        metrics.append(res.metric)
        sum_digits.append(digits)
    values, ambiguous = qz.unpack_sum_digits(sum_digits, packed_a, cfg.quantizer)
    aggregated = aggregate_models(values, cfg.num_selected)
    return RoundResult(
        sum_digits=sum_digits,
        aggregated=aggregated,
        diagnostics=RoundDiagnostics(
            sum_bit_errors=errors,
            total_sum_bits=total,
            path_metrics=metrics,
            sign_ambiguity_count=ambiguous,
            clip_count=packed_a.clip_count + packed_b.clip_count,
        ),
    )


def _analog_effective_gains(
    scen: chan.ChannelScenario, nsym: int, carriers, ofdm: phy.OfdmConfig
) -> np.ndarray:
    """(num_users, nsym, n_carriers) gains: phase, delay slope, CFO ramp."""
    n = np.asarray(carriers, dtype=np.float64)
    k = np.arange(nsym)[:, None]
    gains = np.empty((2, nsym, len(n)), dtype=np.complex128)
    for u in range(2):
        slope = np.exp(-2j * np.pi * n * scen.delay[u] / ofdm.fft_size)
        ramp = np.exp(2j * np.pi * scen.cfo[u] * ofdm.symbol_duration * k)
        gains[u] = np.exp(1j * scen.phase[u]) * ramp * slope[None, :]
    return gains


def run_analog_round(
    params_a,
    params_b,
    repeats: int,
    aligned: bool,
    scenario: chan.ScenarioKind,
    snr_db: float,
    seed: int,
    ofdm: phy.OfdmConfig | None = None,
    num_selected: int = 2,
    scenario_override: chan.ChannelScenario | None = None,
) -> AnalogRoundResult:
    """Uncoded analog aggregation with min-MSE repeat selection.

    Parameters load pairwise onto subcarrier I/Q.  aligned=True models
    perfect phase precoding (unit gains); otherwise each repeat draws a fresh
    asynchronous channel.  Repeat selection compares against ground truth, so
    this baseline is oracle-aided by construction.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    ofdm = ofdm or phy.OfdmConfig()
    params_a = np.asarray(params_a, dtype=np.float64)
    params_b = np.asarray(params_b, dtype=np.float64)
    if params_a.shape != params_b.shape:
        raise ValueError("both users must upload the same parameter count")
    n_params = len(params_a)
    n_cells = -(-n_params // 2)
    per_symbol = len(ofdm.data_carriers)
    nsym = max(1, -(-n_cells // per_symbol))

    def load(params):
        padded = np.zeros(2 * nsym * per_symbol)
        padded[:n_params] = params
        return (padded[0::2] + 1j * padded[1::2]).reshape(nsym, per_symbol)

    x_a, x_b = load(params_a), load(params_b)
    truth_sum = params_a + params_b
    best = None
    for r in range(repeats):
        rng = substream(seed, "analog", r)
        if aligned:
            gains = np.ones((2, nsym, per_symbol), dtype=np.complex128)
        else:
            scen = scenario_override or chan.draw_scenario(scenario, snr_db, rng)
            gains = _analog_effective_gains(scen, nsym, ofdm.data_carriers, ofdm)
        clean = gains[0] * x_a + gains[1] * x_b
        sig_power = float(np.mean(np.abs(clean) ** 2))
        noise_var = chan.snr_calibrate(max(sig_power, 1e-30), snr_db)
        noise = substream(seed, "analog-noise", r)
        y = clean + (noise.normal(size=clean.shape) + 1j * noise.normal(size=clean.shape)) * np.sqrt(noise_var / 2.0)
        comp = gains[0] + gains[1]
        comp_pow = np.abs(comp) ** 2
        est_cells = np.where(
            comp_pow < _GAIN_FLOOR, 0.0, num_selected * y * np.conj(comp) / np.maximum(comp_pow, _GAIN_FLOOR)
        )
        flat = np.empty(2 * nsym * per_symbol)
        flat[0::2] = est_cells.reshape(-1).real
        flat[1::2] = est_cells.reshape(-1).imag
        est_sum = flat[:n_params]
        mse = float(np.mean((est_sum - truth_sum) ** 2))
        if best is None or mse < best[0]:
            best = (mse, r, est_sum)
    mse, r, est_sum = best
    return AnalogRoundResult(
        aggregated=aggregate_models(est_sum, num_selected),
        mse=mse,
        best_repeat=r,
        repeats=repeats,
    )


def aggregate_models(sums, num_selected: int) -> np.ndarray:
    """Element-wise average of the summed models."""
    if num_selected < 1:
        raise ValueError("need at least one model to aggregate")
    return np.asarray(sums, dtype=np.float64) / num_selected
