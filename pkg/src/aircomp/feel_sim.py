"""Desk-scale federated learning loop over the simulated uplink.

A multinomial logistic-regression model (~170 parameters) is trained on
synthetic Gaussian class clusters split non-i.i.d. across devices.  Each
iteration two devices train locally and upload their models through the
configured link (ideal bypass, digital sum-decoded round, or the analog
baseline); the server averages and evaluates test accuracy.  Everything is
deterministic given (config, seed).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import protocol as proto
from .rng import substream


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int = 10
    dim: int = 16
    train_size: int = 600
    test_size: int = 200
    cluster_scale: float = 1.35  # class-mean spread relative to unit noise
    noniid_fraction: float = 0.2


@dataclass(frozen=True)
class FeelConfig:
    num_devices: int = 40
    devices_per_round: int = 2
    iterations: int = 100
    local_epochs: int = 5
    learning_rate: float = 0.25
    uplink: str = "ideal"  # ideal | digital | analog-aligned | analog-misaligned
    round_cfg: proto.RoundConfig = field(default_factory=proto.RoundConfig)
    analog_repeats: int = 13
    dataset: DatasetSpec = field(default_factory=DatasetSpec)

    def __post_init__(self):
        if self.devices_per_round > self.num_devices:
            raise ValueError("cannot select more devices than exist")
        if self.devices_per_round != 2:
            raise ValueError("aggregation uplink is implemented for two devices per round")
        if self.uplink not in ("ideal", "digital", "analog-aligned", "analog-misaligned"):
            raise ValueError(f"unknown uplink {self.uplink!r}")


@dataclass
class TinyModel:
    """Multinomial logistic regression: weight (c, d) and bias (c)."""

    weights: np.ndarray
    bias: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int, dim: int) -> "TinyModel":
        return cls(np.zeros((num_classes, dim)), np.zeros(num_classes))

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.weights.reshape(-1), self.bias])

    @classmethod
    def from_flat(cls, flat: np.ndarray, num_classes: int, dim: int) -> "TinyModel":
        flat = np.asarray(flat, dtype=np.float64)
        w = flat[: num_classes * dim].reshape(num_classes, dim)
        return cls(w.copy(), flat[num_classes * dim :].copy())

    def logits(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(x) == y))


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


def make_synthetic_dataset(spec: DatasetSpec, seed: int) -> Dataset:
    """Balanced Gaussian clusters, unit within-class noise."""
    rng = substream(seed, "dataset")
    means = rng.normal(size=(spec.num_classes, spec.dim)) * spec.cluster_scale

    def draw(count):
        y = np.tile(np.arange(spec.num_classes), -(-count // spec.num_classes))[:count]
        x = means[y] + rng.normal(size=(count, spec.dim))
        perm = rng.permutation(count)
        return x[perm], y[perm]

    train_x, train_y = draw(spec.train_size)
    test_x, test_y = draw(spec.test_size)
    return Dataset(train_x, train_y, test_x, test_y)


def make_noniid_partition(
    labels: np.ndarray, num_devices: int, seed: int, noniid_fraction: float = 0.2
) -> list[np.ndarray]:
    """Split sample indices across devices: uniform bulk plus label-sorted tail.

    The first (1 - noniid_fraction) of the samples is dealt uniformly at
    random; the rest is sorted by label and dealt in contiguous equal blocks,
    skewing every device's class mix.
    """
    labels = np.asarray(labels)
    n = len(labels)
    n_sorted = round(n * noniid_fraction)
    n_uniform = n - n_sorted
    if n_uniform % num_devices or n_sorted % num_devices:
        raise ValueError(
            f"{n_uniform} uniform + {n_sorted} sorted samples do not divide "
            f"evenly across {num_devices} devices"
        )
    rng = substream(seed, "partition")
    perm = rng.permutation(n)
    uniform_part = perm[:n_uniform].reshape(num_devices, -1)
    tail = perm[n_uniform:]
    tail_sorted = tail[np.argsort(labels[tail], kind="stable")]
    sorted_part = tail_sorted.reshape(num_devices, -1)
    return [np.concatenate([uniform_part[d], sorted_part[d]]) for d in range(num_devices)]


def local_train(model: TinyModel, x: np.ndarray, y: np.ndarray, epochs: int,
                learning_rate: float) -> TinyModel:
    """Full-batch gradient descent on softmax cross-entropy."""
    w = model.weights.copy()
    b = model.bias.copy()
    n = len(x)
    onehot = np.zeros((n, len(b)))
    onehot[np.arange(n), y] = 1.0
    for _ in range(epochs):
        z = x @ w.T + b
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        w -= learning_rate * (g.T @ x)
        b -= learning_rate * g.sum(axis=0)
    return TinyModel(w, b)


@dataclass
class FeelResult:
    accuracy_trace: list[float]
    clip_events: int
    sum_bit_errors: int

    @property
    def final_accuracy(self) -> float:
        return self.accuracy_trace[-1]


def run_feel(cfg: FeelConfig, seed: int) -> FeelResult:
    """Iterate broadcast -> local train -> upload -> aggregate -> evaluate."""
    ds = make_synthetic_dataset(cfg.dataset, seed)
    parts = make_noniid_partition(
        ds.train_y, cfg.num_devices, seed, cfg.dataset.noniid_fraction
    )
    spec = cfg.dataset
    model = TinyModel.zeros(spec.num_classes, spec.dim)
    lo, hi = cfg.round_cfg.quantizer.clamp_range
    trace: list[float] = []
    clip_events = 0
    sum_bit_errors = 0
    for it in range(cfg.iterations):
        sel = substream(seed, "select", it)
        dev_a, dev_b = sel.choice(cfg.num_devices, size=2, replace=False)
        locals_ = []
        for dev in (dev_a, dev_b):
            idx = parts[dev]
            locals_.append(
                local_train(model, ds.train_x[idx], ds.train_y[idx],
                            cfg.local_epochs, cfg.learning_rate)
            )
        flat_a = locals_[0].flatten()
        flat_b = locals_[1].flatten()
        if cfg.uplink == "ideal":
            agg = (flat_a + flat_b) / 2.0
        elif cfg.uplink == "digital":
            clip_events += int(np.sum((flat_a < lo) | (flat_a > hi)))
            clip_events += int(np.sum((flat_b < lo) | (flat_b > hi)))
            res = proto.run_digital_round(flat_a, flat_b, cfg.round_cfg, substream(seed, "round", it).integers(2**63))
            sum_bit_errors += res.diagnostics.sum_bit_errors
            agg = res.aggregated
        else:
            res = proto.run_analog_round(
                flat_a, flat_b, cfg.analog_repeats,
                aligned=(cfg.uplink == "analog-aligned"),
                scenario=cfg.round_cfg.scenario,
                snr_db=cfg.round_cfg.snr_db,
                seed=int(substream(seed, "round", it).integers(2**63)),
                ofdm=cfg.round_cfg.ofdm,
            )
            agg = res.aggregated
        model = TinyModel.from_flat(agg, spec.num_classes, spec.dim)
        trace.append(model.accuracy(ds.test_x, ds.test_y))
    return FeelResult(trace, clip_events, sum_bit_errors)
