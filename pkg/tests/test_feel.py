import dataclasses

import numpy as np
import pytest

from aircomp import channel as ch
from aircomp import feel_sim as fs
from aircomp import protocol as proto
from aircomp.rng import substream


class TestPartition:
    def test_eighty_twenty_split(self):
        labels = np.repeat(np.arange(10), 50)  # 500 samples
        parts = fs.make_noniid_partition(labels, 10, seed=0)
        assert len(parts) == 10
        for p in parts:
            assert len(p) == 50
        # the sorted tail gives each device a contiguous label block: the last
        # 10 indices of each device hit at most 2 distinct labels
        for p in parts:
            tail_labels = np.sort(labels[p[-10:]])
            assert len(np.unique(tail_labels)) <= 2
        all_idx = np.sort(np.concatenate(parts))
        np.testing.assert_array_equal(all_idx, np.arange(500))

    def test_single_device_gets_everything(self):
        labels = np.repeat(np.arange(5), 20)
        parts = fs.make_noniid_partition(labels, 1, seed=1)
        assert len(parts) == 1
        assert len(parts[0]) == 100

    def test_replay_deterministic(self):
        labels = np.repeat(np.arange(10), 50)
        p1 = fs.make_noniid_partition(labels, 10, seed=7)
        p2 = fs.make_noniid_partition(labels, 10, seed=7)
        for a, b in zip(p1, p2):
            np.testing.assert_array_equal(a, b)

    def test_indivisible_rejected(self):
        with pytest.raises(ValueError):
            fs.make_noniid_partition(np.zeros(500, dtype=int), 40, seed=0)


class TestLocalTrain:
    def test_zero_epochs_unchanged(self):
        model = fs.TinyModel.zeros(3, 4)
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(20, 4)), rng.integers(0, 3, 20)
        out = fs.local_train(model, x, y, 0, 0.5)
        np.testing.assert_array_equal(out.weights, model.weights)

    def test_separable_task_learned(self):
        rng = np.random.default_rng(1)
        x0 = rng.normal(size=(60, 4)) + np.array([3.0, 0, 0, 0])
        x1 = rng.normal(size=(60, 4)) - np.array([3.0, 0, 0, 0])
        x = np.vstack([x0, x1])
        y = np.array([0] * 60 + [1] * 60)
        model = fs.local_train(fs.TinyModel.zeros(2, 4), x, y, 50, 0.5)
        assert model.accuracy(x, y) >= 0.95

    def test_replay_identical(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(30, 4)), rng.integers(0, 3, 30)
        m1 = fs.local_train(fs.TinyModel.zeros(3, 4), x, y, 5, 0.3)
        m2 = fs.local_train(fs.TinyModel.zeros(3, 4), x, y, 5, 0.3)
        np.testing.assert_array_equal(m1.weights, m2.weights)
        np.testing.assert_array_equal(m1.bias, m2.bias)


class TestModelFlattening:
    def test_round_trip(self):
        rng = np.random.default_rng(3)
        m = fs.TinyModel(rng.normal(size=(10, 16)), rng.normal(size=10))
        back = fs.TinyModel.from_flat(m.flatten(), 10, 16)
        np.testing.assert_array_equal(back.weights, m.weights)
        np.testing.assert_array_equal(back.bias, m.bias)
        assert len(m.flatten()) == 170


class TestRunFeel:
    def test_trace_deterministic(self):
        cfg = fs.FeelConfig(iterations=5)
        r1 = fs.run_feel(cfg, seed=42)
        r2 = fs.run_feel(cfg, seed=42)
        assert r1.accuracy_trace == r2.accuracy_trace

    def test_ideal_uplink_is_plain_fedavg(self):
        # independent re-implementation of the aggregation loop
        cfg = fs.FeelConfig(iterations=4)
        got = fs.run_feel(cfg, seed=9)
        ds = fs.make_synthetic_dataset(cfg.dataset, 9)
        parts = fs.make_noniid_partition(ds.train_y, cfg.num_devices, 9,
                                         cfg.dataset.noniid_fraction)
        model = fs.TinyModel.zeros(10, 16)
        trace = []
        for it in range(4):
            sel = substream(9, "select", it)
            da, db = sel.choice(cfg.num_devices, size=2, replace=False)
            ma = fs.local_train(model, ds.train_x[parts[da]], ds.train_y[parts[da]], 5, cfg.learning_rate)
            mb = fs.local_train(model, ds.train_x[parts[db]], ds.train_y[parts[db]], 5, cfg.learning_rate)
            flat = (ma.flatten() + mb.flatten()) / 2.0
            model = fs.TinyModel.from_flat(flat, 10, 16)
            trace.append(model.accuracy(ds.test_x, ds.test_y))
        assert got.accuracy_trace == trace

    def test_noiseless_digital_differs_only_by_quantization(self):
        base = fs.FeelConfig(iterations=12)
        ideal = fs.run_feel(base, seed=5)
        digital = fs.run_feel(dataclasses.replace(
            base, uplink="digital",
            round_cfg=proto.RoundConfig(scenario=ch.ScenarioKind.GOOD, snr_db=60.0),
        ), seed=5)
        assert digital.sum_bit_errors == 0
        diffs = np.abs(np.array(ideal.accuracy_trace) - np.array(digital.accuracy_trace))
        assert diffs.max() <= 0.02

    def test_low_snr_stays_near_chance(self):
        cfg = fs.FeelConfig(iterations=10, uplink="digital",
                            round_cfg=proto.RoundConfig(snr_db=0.0))
        res = fs.run_feel(cfg, seed=6)
        assert res.final_accuracy <= 0.35  # chance level is 0.1

    def test_high_snr_approaches_ideal(self):
        base = fs.FeelConfig(iterations=12)
        ideal = fs.run_feel(base, seed=7)
        high = fs.run_feel(dataclasses.replace(
            base, uplink="digital", round_cfg=proto.RoundConfig(snr_db=30.0)), seed=7)
        assert abs(high.final_accuracy - ideal.final_accuracy) <= 0.05

    def test_selection_validates(self):
        with pytest.raises(ValueError):
            fs.FeelConfig(num_devices=1)
        with pytest.raises(ValueError):
            fs.FeelConfig(uplink="carrier-pigeon")


def test_high_snr_digital_matches_aligned_analog():
    base = fs.FeelConfig(iterations=12)
    digital = fs.run_feel(dataclasses.replace(
        base, uplink="digital", round_cfg=proto.RoundConfig(snr_db=30.0)), seed=8)
    analog = fs.run_feel(dataclasses.replace(
        base, uplink="analog-aligned", round_cfg=proto.RoundConfig(snr_db=30.0)), seed=8)
    assert abs(digital.final_accuracy - analog.final_accuracy) <= 0.05
