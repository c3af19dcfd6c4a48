"""Convolutional coding and the sum-recovering channel decoders.

Two users encode independently with the same rate-1/2 code; the receiver sees
one superimposed BPSK observation per coded bit and wants the per-position
arithmetic sum of the users' source bits.  Three decoders are provided:

* ``fsjd_decode``: Viterbi search over the product (joint) trellis of both
  encoders, 2^(2(L-1)) states, minimizing the summed Euclidean distance
  between the observation and the four-point superposition constellation.
* ``rsjd_decode``: the same search keeping only the R best states per stage.
* ``psud_decode``: marginalizes the observation per user (exact log-sum-exp
  over the other user's BPSK symbol), then runs two independent single-user
  Viterbi decoders and sums their outputs.

A brute-force pair-enumeration oracle is included for testing on short
packets; it is exponential in the payload length and refuses anything big.

Conventions: state = last L-1 input bits, newest at the MSB; generator masks
are read with the MSB as the tap on the current input bit, so 0o133/0o171
with L=7 is the usual 802.11 code.  All decoders assume packets terminated
with L-1 zero tail bits and force the all-zero start and end state.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class CodeSpec:
    constraint_length: int = 7
    generators: tuple[int, int] = (0o133, 0o171)
    rate_inverse: int = 2

    def __post_init__(self):
        L = self.constraint_length
        if L < 2:
            raise ValueError(f"constraint length must be >= 2, got {L}")
        if self.rate_inverse != len(self.generators):
            raise ValueError("rate_inverse must equal the generator count")
        for g in self.generators:
            if not 0 < g < (1 << L):
                raise ValueError(f"generator {g:o} out of range for L={L}")
            if not (g & 1) or not (g >> (L - 1)) & 1:
                raise ValueError(f"generator {g:o} must have lowest and highest taps set")

    @property
    def num_states(self) -> int:
        return 1 << (self.constraint_length - 1)

    @property
    def num_joint_states(self) -> int:
        return 1 << (2 * (self.constraint_length - 1))

    @property
    def tail_bits(self) -> int:
        return self.constraint_length - 1


#: L=7 code used by 802.11 and by all full-scale experiments.
WIFI_CODE = CodeSpec(7, (0o133, 0o171))
#: Small L=3 code for exhaustive cross-checks.
TEST_CODE = CodeSpec(3, (0o7, 0o5))


@dataclass
class DecodeResult:
    """Joint decode output: per-position source-bit sums plus per-user bits."""

    sum_bits: np.ndarray  # int8, entries in {0, 1, 2}, length = stages
    bits_a: np.ndarray
    bits_b: np.ndarray
    metric: float | tuple[float, float]


@dataclass
class SoftObservation:
    """Per-coded-bit received samples and effective channel gains."""

    y: np.ndarray
    h_a: np.ndarray
    h_b: np.ndarray
    noise_var: float

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.complex128)
        self.h_a = np.asarray(self.h_a, dtype=np.complex128)
        self.h_b = np.asarray(self.h_b, dtype=np.complex128)
        if not (len(self.y) == len(self.h_a) == len(self.h_b)):
            raise ValueError("observation and channel arrays must share one length")

    def __len__(self) -> int:
        return len(self.y)


# ---------------------------------------------------------------------------
# Encoder and trellis tables


def conv_encode(source, spec: CodeSpec, append_tail: bool = False) -> np.ndarray:
    """Rate-1/2 convolutional encoding, outputs interleaved [g0, g1, g0, ...]."""
    bits = np.asarray(source, dtype=np.uint8).reshape(-1)
    if append_tail:
        bits = np.concatenate([bits, np.zeros(spec.tail_bits, dtype=np.uint8)])
    L = spec.constraint_length
    out = np.empty((len(bits), len(spec.generators)), dtype=np.uint8)
    for j, g in enumerate(spec.generators):
        taps = np.array([(g >> (L - 1 - i)) & 1 for i in range(L)], dtype=np.uint8)
        out[:, j] = np.convolve(bits, taps)[: len(bits)] % 2
    return out.reshape(-1)


@dataclass(frozen=True)
class SingleTrellis:
    next_state: np.ndarray  # (S, 2) int32
    out_bits: np.ndarray  # (S, 2, 2) uint8: per state, input bit -> two coded bits
    pred_state: np.ndarray  # (S, 2) int32, rows ascending
    pred_bit: np.ndarray  # (S, 2) uint8
    pred_o0: np.ndarray  # (S, 2) uint8
    pred_o1: np.ndarray  # (S, 2) uint8


@dataclass(frozen=True)
class JointTrellis:
    """Product trellis of two identical single-user encoders.

    Joint state = state_a * S1 + state_b; edge index e encodes the input pair
    (bit_a, bit_b) = (e >> 1, e & 1).  ``succ_ii`` packs the two constellation
    indices of the edge's coded cells (4*u0 + u1, u = 2*bit_a + bit_b).
    """

    num_states: int
    next_state: np.ndarray  # (S2, 4) int32
    succ_ii: np.ndarray  # (S2, 4) uint8
    out_a: np.ndarray  # (S2, 4, 2) uint8
    out_b: np.ndarray  # (S2, 4, 2) uint8
    pred_state: np.ndarray  # (S2, 4) int32, rows ascending
    pred_edge: np.ndarray  # (S2, 4) uint8
    pred_ii: np.ndarray  # (S2, 4) uint8


@lru_cache(maxsize=8)
def single_trellis(spec: CodeSpec) -> SingleTrellis:
    L = spec.constraint_length
    S = spec.num_states
    next_state = np.empty((S, 2), dtype=np.int32)
    out_bits = np.empty((S, 2, 2), dtype=np.uint8)
    for s in range(S):
        for b in (0, 1):
            reg = (b << (L - 1)) | s
            next_state[s, b] = reg >> 1
            for j, g in enumerate(spec.generators):
                out_bits[s, b, j] = bin(reg & g).count("1") & 1
    pred_state = np.empty((S, 2), dtype=np.int32)
    pred_bit = np.empty((S, 2), dtype=np.uint8)
    pred_o0 = np.empty((S, 2), dtype=np.uint8)
    pred_o1 = np.empty((S, 2), dtype=np.uint8)
    fill = np.zeros(S, dtype=np.int64)
    for s in range(S):
        for b in (0, 1):
            t = next_state[s, b]
            j = fill[t]
            pred_state[t, j] = s
            pred_bit[t, j] = b
            pred_o0[t, j] = out_bits[s, b, 0]
            pred_o1[t, j] = out_bits[s, b, 1]
            fill[t] += 1
    assert np.all(fill == 2)
    return SingleTrellis(next_state, out_bits, pred_state, pred_bit, pred_o0, pred_o1)


@lru_cache(maxsize=8)
def joint_trellis(spec: CodeSpec) -> JointTrellis:
    st = single_trellis(spec)
    S1 = spec.num_states
    S2 = spec.num_joint_states
    next_state = np.empty((S2, 4), dtype=np.int32)
    succ_ii = np.empty((S2, 4), dtype=np.uint8)
    out_a = np.empty((S2, 4, 2), dtype=np.uint8)
    out_b = np.empty((S2, 4, 2), dtype=np.uint8)
    sa = np.arange(S2) // S1
    sb = np.arange(S2) % S1
    for e in range(4):
        ba, bb = e >> 1, e & 1
        next_state[:, e] = st.next_state[sa, ba] * S1 + st.next_state[sb, bb]
        a0 = st.out_bits[sa, ba, 0]
        a1 = st.out_bits[sa, ba, 1]
        b0 = st.out_bits[sb, bb, 0]
        b1 = st.out_bits[sb, bb, 1]
        out_a[:, e, 0], out_a[:, e, 1] = a0, a1
        out_b[:, e, 0], out_b[:, e, 1] = b0, b1
        succ_ii[:, e] = 4 * (2 * a0 + b0) + (2 * a1 + b1)
    # Invert to predecessor tables, each row sorted by predecessor state.
    src = np.repeat(np.arange(S2, dtype=np.int64), 4)
    edge = np.tile(np.arange(4, dtype=np.int64), S2)
    dst = next_state.reshape(-1)
    order = np.lexsort((src, dst))
    assert np.array_equal(dst[order], np.repeat(np.arange(S2), 4))  # 4 incoming edges each
    pred_state = src[order].reshape(S2, 4).astype(np.int32)
    pred_edge = edge[order].reshape(S2, 4).astype(np.uint8)
    pred_ii = succ_ii.reshape(-1)[order].reshape(S2, 4)
    return JointTrellis(
        num_states=S2,
        next_state=next_state,
        succ_ii=succ_ii,
        out_a=out_a,
        out_b=out_b,
        pred_state=pred_state,
        pred_edge=pred_edge,
        pred_ii=pred_ii,
    )


# ---------------------------------------------------------------------------
# Branch metrics


def branch_metric(y: complex, h_a: complex, h_b: complex, x_a: int, x_b: int) -> float:
    """Squared Euclidean distance to one superposition constellation point."""
    return abs(y - h_a * x_a - h_b * x_b) ** 2


def cell_distances(obs: SoftObservation) -> np.ndarray:
    """(N, 4) table of |y - h_a*x(a) - h_b*x(b)|^2 indexed by u = 2a + b."""
    x = np.array([1.0, -1.0])  # coded bit 0 -> +1, 1 -> -1
    points = obs.h_a[:, None, None] * x[None, :, None] + obs.h_b[:, None, None] * x[None, None, :]
    d = np.abs(obs.y[:, None, None] - points) ** 2
    return d.reshape(len(obs), 4)


def pair_branch_metrics(obs: SoftObservation) -> np.ndarray:
    """(stages, 16) per-stage metrics indexed by 4*u0 + u1 cell-pair index."""
    if len(obs) % 2 != 0:
        raise ValueError("observation length must be even for a rate-1/2 code")
    d = cell_distances(obs)
    d0 = d[0::2]
    d1 = d[1::2]
    return (d0[:, :, None] + d1[:, None, :]).reshape(len(d0), 16)


def _check_obs(obs: SoftObservation, spec: CodeSpec) -> int:
    n = len(obs)
    if n % spec.rate_inverse != 0:
        raise ValueError(
            f"observation length {n} inconsistent with rate-1/2 coded stages"
        )
    return n // spec.rate_inverse


# ---------------------------------------------------------------------------
# Decoders


def fsjd_decode(obs: SoftObservation, spec: CodeSpec) -> DecodeResult:
    """Full-state joint decode: exact minimum-distance codeword pair."""
    _check_obs(obs, spec)
    jt = joint_trellis(spec)
    bm = pair_branch_metrics(obs)
    pm, tb = _kernels.joint_forward(jt.pred_state, jt.pred_ii, bm)
    bits_a, bits_b = _kernels.joint_traceback(tb, jt.pred_state, jt.pred_edge, 0)
    return DecodeResult(
        sum_bits=(bits_a + bits_b).astype(np.int8),
        bits_a=bits_a,
        bits_b=bits_b,
        metric=float(pm[0]),
    )


def rsjd_decode(obs: SoftObservation, spec: CodeSpec, max_states: int) -> DecodeResult:
    """Reduced-state joint decode keeping the max_states best states per stage.

    With max_states = 2^(2(L-1)) nothing is ever pruned and the output is
    bit-identical to fsjd_decode.  If pruning kills the all-zero state by the
    final stage, traceback starts from the best surviving state instead.
    """
    if max_states < 1:
        raise ValueError(f"max_states must be >= 1, got {max_states}")
    _check_obs(obs, spec)
    jt = joint_trellis(spec)
    bm = pair_branch_metrics(obs)
    pm, tb_state, tb_edge, active = _kernels.reduced_forward(
        jt.next_state, jt.succ_ii, bm, max_states
    )
    if np.isfinite(pm[0]):
        end = 0
    else:
        end = int(active[np.argmin(pm[active])])  # active is ascending: ties -> smallest
    bits_a, bits_b = _kernels.reduced_traceback(tb_state, tb_edge, end)
    return DecodeResult(
        sum_bits=(bits_a + bits_b).astype(np.int8),
        bits_a=bits_a,
        bits_b=bits_b,
        metric=float(pm[end]),
    )


def single_user_viterbi(costs: np.ndarray, spec: CodeSpec) -> tuple[np.ndarray, float]:
    """Minimum-cost terminated path; costs[n, c] is coded bit n's cost of value c."""
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2 or costs.shape[1] != 2 or costs.shape[0] % 2 != 0:
        raise ValueError(f"expected (2*stages, 2) cost table, got shape {costs.shape}")
    st = single_trellis(spec)
    pm, tb = _kernels.single_forward(st.pred_state, st.pred_o0, st.pred_o1, costs)
    bits = _kernels.single_traceback(tb, st.pred_state, st.pred_bit, 0)
    return bits, float(pm[0])


def psud_decode(obs: SoftObservation, spec: CodeSpec) -> DecodeResult:
    """Parallel single-user decode: marginalize, decode each user, sum.

    Per coded bit, the other user's BPSK symbol is summed out of the Gaussian
    likelihood exactly (log-sum-exp with the observation's noise variance),
    which is why this decoder needs sigma^2 while the joint decoders do not.
    """
    if not obs.noise_var > 0:
        raise ValueError(f"noise variance must be positive, got {obs.noise_var}")
    _check_obs(obs, spec)
    d = cell_distances(obs) / (2.0 * obs.noise_var)
    # u = 2a + b: marginalize b for user A, a for user B.
    cost_a = -np.logaddexp(-d[:, [0, 2]], -d[:, [1, 3]])
    cost_b = -np.logaddexp(-d[:, [0, 1]], -d[:, [2, 3]])
    bits_a, metric_a = single_user_viterbi(cost_a, spec)
    bits_b, metric_b = single_user_viterbi(cost_b, spec)
    return DecodeResult(
        sum_bits=(bits_a + bits_b).astype(np.int8),
        bits_a=bits_a,
        bits_b=bits_b,
        metric=(metric_a, metric_b),
    )


# ---------------------------------------------------------------------------
# Brute-force oracles (test-scale only)

_ORACLE_MAX_PAYLOAD = 10


def enumerate_codewords(spec: CodeSpec, payload_len: int) -> tuple[np.ndarray, np.ndarray]:
    """All 2^payload_len tail-terminated sources and their codewords."""
    if payload_len > _ORACLE_MAX_PAYLOAD:
        raise ValueError(f"refusing exhaustive enumeration beyond {_ORACLE_MAX_PAYLOAD} bits")
    n = 1 << payload_len
    sources = ((np.arange(n)[:, None] >> np.arange(payload_len - 1, -1, -1)) & 1).astype(np.uint8)
    full = np.concatenate([sources, np.zeros((n, spec.tail_bits), dtype=np.uint8)], axis=1)
    coded = np.stack([conv_encode(row, spec) for row in full])
    return full, coded


def oracle_pair_metrics(obs: SoftObservation, spec: CodeSpec, payload_len: int) -> np.ndarray:
    """Lambda[a, b] for every codeword pair, accumulated exactly like the
    joint forward pass so metric comparisons are float-identical."""
    _, coded = enumerate_codewords(spec, payload_len)
    bm = pair_branch_metrics(obs)
    if bm.shape[0] != coded.shape[1] // 2:
        raise ValueError("observation length does not match the enumerated codewords")
    n = coded.shape[0]
    lam = np.zeros((n, n))
    for i in range(bm.shape[0]):
        u0 = 2 * coded[:, 2 * i][:, None] + coded[:, 2 * i][None, :]
        u1 = 2 * coded[:, 2 * i + 1][:, None] + coded[:, 2 * i + 1][None, :]
        lam = lam + bm[i, 4 * u0 + u1]
    return lam


def oracle_min_metric(
    obs: SoftObservation, spec: CodeSpec, payload_len: int
) -> tuple[np.ndarray, float]:
    """Exhaustive minimizer of the pairwise distance: the joint decoder's target."""
    sources, _ = enumerate_codewords(spec, payload_len)
    lam = oracle_pair_metrics(obs, spec, payload_len)
    flat = int(np.argmin(lam))
    a, b = divmod(flat, lam.shape[1])
    return (sources[a] + sources[b]).astype(np.int8), float(lam[a, b])


def oracle_codeword_optimal(
    obs: SoftObservation, spec: CodeSpec, payload_len: int
) -> np.ndarray:
    """Exact maximum-likelihood sum sequence by summing pair probabilities.

    For each candidate sum sequence, adds up Pr(Y | C_a, C_b) over every
    codeword pair whose source sums match it, then returns the argmax.
    Exponential in payload_len; test-scale only.
    """
    if not obs.noise_var > 0:
        raise ValueError(f"noise variance must be positive, got {obs.noise_var}")
    sources, _ = enumerate_codewords(spec, payload_len)
    lam = oracle_pair_metrics(obs, spec, payload_len)
    loglik = (-lam / (2.0 * obs.noise_var)).reshape(-1)
    # Base-3 coding of the sum sequence is linear in the two sources.
    pow3 = 3 ** np.arange(payload_len, dtype=np.int64)
    code1 = sources[:, :payload_len].astype(np.int64) @ pow3
    codes = (code1[:, None] + code1[None, :]).reshape(-1)
    order = np.argsort(codes, kind="stable")
    codes_sorted = codes[order]
    loglik_sorted = loglik[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(codes_sorted)) + 1])
    lengths = np.diff(np.concatenate([starts, [len(codes_sorted)]]))
    # segmented log-sum-exp over each sum-sequence bucket
    seg_max = np.maximum.reduceat(loglik_sorted, starts)
    sums = np.add.reduceat(np.exp(loglik_sorted - np.repeat(seg_max, lengths)), starts)
    ll = seg_max + np.log(sums)
    best = int(np.argmax(ll))  # first max: ties keep the smallest sum code
    best_code = int(codes_sorted[starts[best]])
    trits = np.empty(payload_len + spec.tail_bits, dtype=np.int8)
    c = best_code
    for i in range(payload_len):
        trits[i] = c % 3
        c //= 3
    trits[payload_len:] = 0
    return trits
