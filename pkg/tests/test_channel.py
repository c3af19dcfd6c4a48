import numpy as np
import pytest

from aircomp import channel as ch
from aircomp import ofdm_phy as phy
from aircomp.rng import substream

CFG = phy.OfdmConfig()


def bpsk_stream(bits, user=0, cfg=CFG):
    frame = phy.build_frame(np.asarray(bits, dtype=np.uint8), user, cfg)
    return phy.ofdm_modulate(frame, cfg), frame


class TestSnrCalibrate:
    def test_zero_db(self):
        assert ch.snr_calibrate(1.0, 0.0) == 1.0

    def test_ten_db(self):
        assert ch.snr_calibrate(1.0, 10.0) == pytest.approx(0.1)

    def test_two_users_three_db(self):
        assert ch.snr_calibrate(2.0, 3.0) == pytest.approx(2.0 / 10**0.3)

    def test_nonpositive_power(self):
        with pytest.raises(ValueError):
            ch.snr_calibrate(0.0, 10.0)
        with pytest.raises(ValueError):
            ch.snr_calibrate(-1.0, 10.0)


class TestDrawScenario:
    def test_bad_is_aligned(self):
        s = ch.draw_scenario(ch.ScenarioKind.BAD, 5.0, substream(0, "x"))
        assert s.phase == (0.0, 0.0) and s.delay == (0, 0) and s.cfo == (0.0, 0.0)

    def test_good_is_quadrature(self):
        s = ch.draw_scenario(ch.ScenarioKind.GOOD, 5.0, substream(0, "x"))
        assert s.phase[1] - s.phase[0] == pytest.approx(np.pi / 2)

    def test_near_realistic_ranges_and_replay(self):
        s1 = ch.draw_scenario(ch.ScenarioKind.NEAR_REALISTIC, 5.0, substream(3, "s"))
        s2 = ch.draw_scenario(ch.ScenarioKind.NEAR_REALISTIC, 5.0, substream(3, "s"))
        assert s1 == s2
        for u in range(2):
            assert 0.0 <= s1.phase[u] < 2 * np.pi
            assert 0 <= s1.delay[u] <= 5
            assert -2000.0 <= s1.cfo[u] <= 2000.0

    def test_draws_vary_across_streams(self):
        draws = {ch.draw_scenario(ch.ScenarioKind.NEAR_REALISTIC, 5.0, substream(3, "s", i)).phase
                 for i in range(8)}
        assert len(draws) == 8


class TestApplyChannel:
    def test_silent_users_pure_noise(self):
        scen = ch.ChannelScenario((0.0, 0.0), (0, 0), (0.0, 0.0), snr_db=7.0)
        zeros = np.zeros(50000, dtype=complex)
        out = ch.apply_channel(zeros, zeros, scen, substream(1, "n"))
        assert out.noise_var == pytest.approx(10 ** -0.7)
        assert np.mean(np.abs(out.rx) ** 2) == pytest.approx(out.noise_var, rel=0.05)

    def test_bad_scenario_coherent_doubling(self):
        rng = np.random.default_rng(2)
        samples, _ = bpsk_stream(rng.integers(0, 2, 96))
        scen = ch.ChannelScenario((0.0, 0.0), (0, 0), (0.0, 0.0), snr_db=300.0)
        out = ch.apply_channel(samples, samples, scen, substream(2, "n"))
        np.testing.assert_allclose(out.rx[: len(samples)], 2.0 * samples, atol=1e-10)

    def test_good_scenario_quadrature_constellation(self):
        rng = np.random.default_rng(3)
        ta, fa = bpsk_stream(rng.integers(0, 2, 96), user=0)
        tb, fb = bpsk_stream(rng.integers(0, 2, 96), user=1)
        scen = ch.ChannelScenario((0.0, np.pi / 2), (0, 0), (0.0, 0.0), snr_db=300.0)
        out = ch.apply_channel(ta, tb, scen, substream(3, "n"))
        grid = phy.ofdm_demodulate(out.rx, 0, CFG, fa.grid.shape[0])
        cells = grid[CFG.num_preamble_slots:, CFG.bins(CFG.data_carriers)].reshape(-1)
        # every data cell sits on one of the four quadrature points +-1 +-1j
        np.testing.assert_allclose(np.abs(cells.real), 1.0, atol=1e-9)
        np.testing.assert_allclose(np.abs(cells.imag), 1.0, atol=1e-9)

    def test_superposition_linearity(self):
        # at negligible noise the received stream is additive in the two users
        rng = np.random.default_rng(4)
        ta, _ = bpsk_stream(rng.integers(0, 2, 96), user=0)
        tb, _ = bpsk_stream(rng.integers(0, 2, 96), user=1)
        zeros = np.zeros_like(ta)
        scen = ch.ChannelScenario((0.4, 2.2), (1, 4), (900.0, -1300.0), snr_db=300.0)
        both = ch.apply_channel(ta, tb, scen, substream(5, "n")).rx
        only_a = ch.apply_channel(ta, zeros, scen, substream(5, "n")).rx
        only_b = ch.apply_channel(zeros, tb, scen, substream(5, "n")).rx
        np.testing.assert_allclose(both, only_a + only_b, atol=2e-9)

    def test_measured_snr_calibration(self):
        rng = np.random.default_rng(6)
        n = 120000
        ta = (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2)
        tb = (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2)
        scen = ch.ChannelScenario((1.0, 2.0), (0, 3), (500.0, -500.0), snr_db=9.0)
        out = ch.apply_channel(ta, tb, scen, substream(6, "n"))
        noise_only = ch.apply_channel(ta, tb, scen, substream(6, "n"))
        # identical substream: subtracting reproduces the clean part exactly
        np.testing.assert_allclose(out.rx, noise_only.rx, atol=0)
        clean = ch.apply_channel(ta, tb, ch.ChannelScenario(scen.phase, scen.delay, scen.cfo, 300.0),
                                 substream(99, "quiet")).rx
        noise = out.rx - clean
        measured = 10 * np.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2))
        assert abs(measured - 9.0) < 0.1

    def test_cfo_phase_increment_exact(self):
        # single user, repeated symbol content: successive demodulated symbols
        # are exact rotations by 2 pi f T_sym even with per-sample CFO
        nsym = 30
        samples, frame = bpsk_stream(np.zeros(48 * nsym, dtype=np.uint8))
        scen = ch.ChannelScenario((0.3, 0.0), (2, 0), (1700.0, 0.0), snr_db=300.0)
        out = ch.apply_channel(samples, np.zeros_like(samples), scen, substream(7, "n"))
        grid = phy.ofdm_demodulate(out.rx, 0, CFG, 2 + nsym)
        data = grid[2:]
        steps = np.angle(np.sum(data[1:] * np.conj(data[:-1]), axis=1))
        expect = 2 * np.pi * 1700.0 * CFG.symbol_duration
        np.testing.assert_allclose(steps, expect, atol=1e-9)

    def test_replay_determinism(self):
        rng = np.random.default_rng(8)
        ta, _ = bpsk_stream(rng.integers(0, 2, 48))
        scen = ch.ChannelScenario((0.2, 1.0), (1, 2), (100.0, -100.0), snr_db=10.0)
        r1 = ch.apply_channel(ta, ta, scen, substream(11, "noise"))
        r2 = ch.apply_channel(ta, ta, scen, substream(11, "noise"))
        assert np.array_equal(r1.rx, r2.rx)

    def test_delay_exceeding_guard_rejected(self):
        scen = ch.ChannelScenario((0.0, 0.0), (0, 16), (0.0, 0.0), snr_db=10.0)
        z = np.zeros(100, dtype=complex)
        with pytest.raises(ValueError):
            ch.apply_channel(z, z, scen, substream(0, "n"))

    def test_length_mismatch_rejected(self):
        scen = ch.ChannelScenario((0.0, 0.0), (0, 0), (0.0, 0.0), snr_db=10.0)
        with pytest.raises(ValueError):
            ch.apply_channel(np.zeros(10, dtype=complex), np.zeros(11, dtype=complex),
                             scen, substream(0, "n"))
