"""Command-line harness: SUM-BER sweeps, analog comparison, FEEL runs.

Every experiment is a pure function of (config, master seed): per-trial
randomness is keyed by (seed, experiment id, trial index), accumulation is
order-independent, and rows are sorted before emission, so the CSV output is
byte-identical across reruns and worker counts.  Timing is reported on
stderr only, never in the CSV.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import channel as chan
from . import convcodec as cc
from . import feel_sim as fs
from . import protocol as proto
from .rng import substream

BER_HEADER = (
    "experiment_id", "decoder", "scenario", "snr_db", "trials",
    "sum_bit_errors", "total_sum_bits", "sum_ber",
    "wilson_ci_low", "wilson_ci_high", "seed",
)
FEEL_HEADER = (
    "experiment_id", "arm", "decoder", "quant_bits", "snr_db", "seed",
    "iteration", "test_accuracy",
)
ANALOG_HEADER = (
    "experiment_id", "mode", "snr_db", "rounds", "repeats", "mean_mse", "seed",
)

_TRIAL_CHUNK = 25  # trials per worker job; fixed so results ignore worker count


@dataclass(frozen=True)
class SweepSpec:
    snr_grid: tuple[float, ...] = tuple(float(s) for s in range(0, 21, 2))
    trials: int = 4000
    decoders: tuple[str, ...] = ("fsjd", "rsjd128", "rsjd256", "rsjd512", "psud")
    scenario: chan.ScenarioKind = chan.ScenarioKind.NEAR_REALISTIC
    n_source_bits: int = 1300
    constraint_length: int = 7
    master_seed: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_grid:
            raise ValueError("SNR grid must be non-empty")


@dataclass
class ResultRow:
    experiment_id: str
    decoder: str
    scenario: str
    snr_db: float
    trials: int
    sum_bit_errors: int
    total_sum_bits: int
    sum_ber: float
    wilson_ci_low: float
    wilson_ci_high: float
    seed: int
    wall_time: float = 0.0  # stderr diagnostics only; excluded from the CSV

    def csv_tuple(self):
        return (
            self.experiment_id, self.decoder, self.scenario, self.snr_db,
            self.trials, self.sum_bit_errors, self.total_sum_bits,
            self.sum_ber, self.wilson_ci_low, self.wilson_ci_high, self.seed,
        )


def wilson_interval(errors: int, total: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score 95% confidence interval for a binomial rate."""
    if total <= 0:
        return (0.0, 1.0)
    p = errors / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = (z / denom) * np.sqrt(p * (1 - p) / total + z * z / (4 * total * total))
    return (max(0.0, center - half), min(1.0, center + half))


def parse_decoder(name: str) -> tuple[str, int]:
    """'fsjd' | 'psud' | 'rsjd<R>' -> (kind, rsjd_states)."""
    if name in ("fsjd", "psud"):
        return name, 0
    if name.startswith("rsjd"):
        r = int(name[4:] or "512")
        if r < 1:
            raise ValueError(f"reduced-state count must be >= 1 in {name!r}")
        return "rsjd", r
    raise ValueError(f"unknown decoder {name!r}")


def _round_config(decoder: str, scenario: chan.ScenarioKind, snr_db: float,
                  n_source_bits: int, constraint_length: int) -> proto.RoundConfig:
    kind, r = parse_decoder(decoder)
    if constraint_length == 7:
        code = cc.WIFI_CODE
    elif constraint_length == 3:
        code = cc.TEST_CODE
    else:
        raise ValueError(f"no generator polynomials configured for L={constraint_length}")
    return proto.RoundConfig(
        decoder=kind, rsjd_states=max(r, 1), code=code,
        scenario=scenario, snr_db=snr_db, n_source_bits=n_source_bits,
    )


def run_ber_trial(cfg: proto.RoundConfig, master_seed: int, experiment_id: str,
                  trial: int) -> tuple[int, int]:
    """Fresh random payloads through the PHY chain; count sum-digit errors."""
    bit_rng = substream(master_seed, experiment_id, trial, "bits")
    bits_a = bit_rng.integers(0, 2, cfg.n_source_bits).astype(np.uint8)
    bits_b = bit_rng.integers(0, 2, cfg.n_source_bits).astype(np.uint8)
    res, _, _ = proto.run_packet(
        bits_a, bits_b, cfg,
        substream(master_seed, experiment_id, trial, "scenario"),
        substream(master_seed, experiment_id, trial, "noise"),
    )
    truth = bits_a.astype(np.int64) + bits_b.astype(np.int64)
    errors = int(np.sum(res.sum_bits[: cfg.n_source_bits] != truth))
    return errors, cfg.n_source_bits


def _ber_chunk(job) -> tuple[str, int, int]:
    cfg, master_seed, experiment_id, start, count = job
    errors = 0
    total = 0
    for t in range(start, start + count):
        e, n = run_ber_trial(cfg, master_seed, experiment_id, t)
        errors += e
        total += n
    return experiment_id, errors, total


def _parallel(fn, jobs, threads: int):
    if threads <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=1))


def sweep_sum_ber(spec: SweepSpec, threads: int = 1,
                  progress: bool = False) -> list[ResultRow]:
    """Monte-Carlo SUM BER for each (decoder, SNR) cell of the sweep."""
    jobs = []
    cells = {}
    for decoder in spec.decoders:
        for snr in spec.snr_grid:
            exp_id = f"ber:{decoder}:{spec.scenario.value}:{snr:g}"
            cfg = _round_config(decoder, spec.scenario, snr,
                                spec.n_source_bits, spec.constraint_length)
            cells[exp_id] = (decoder, snr)
            for start in range(0, spec.trials, _TRIAL_CHUNK):
                count = min(_TRIAL_CHUNK, spec.trials - start)
                jobs.append((cfg, spec.master_seed, exp_id, start, count))
    t0 = time.monotonic()
    results = _parallel(_ber_chunk, jobs, threads)
    elapsed = time.monotonic() - t0
    acc: dict[str, list[int]] = {k: [0, 0] for k in cells}
    for exp_id, errors, total in results:
        acc[exp_id][0] += errors
        acc[exp_id][1] += total
    rows = []
    for exp_id, (decoder, snr) in cells.items():
        errors, total = acc[exp_id]
        lo, hi = wilson_interval(errors, total)
        rows.append(ResultRow(
            experiment_id=exp_id, decoder=decoder, scenario=spec.scenario.value,
            snr_db=snr, trials=spec.trials, sum_bit_errors=errors,
            total_sum_bits=total, sum_ber=errors / total,
            wilson_ci_low=lo, wilson_ci_high=hi, seed=spec.master_seed,
            wall_time=elapsed,
        ))
    rows.sort(key=lambda r: (r.decoder, r.snr_db))
    if progress:
        print(f"[ber-sweep] {len(jobs)} chunks in {elapsed:.1f}s", file=sys.stderr)
    return rows


# ---------------------------------------------------------------------------
# FEEL sweep


@dataclass(frozen=True)
class FeelSweepSpec:
    arms: tuple[str, ...] = ("ideal", "digital", "digital-psud",
                             "analog-aligned", "analog-misaligned")
    quant_bits: tuple[int, ...] = (13,)
    snr_grid: tuple[float, ...] = (9.0,)
    iterations: int = 100
    seeds: int = 1
    master_seed: int = 1
    scenario: chan.ScenarioKind = chan.ScenarioKind.NEAR_REALISTIC
    decoder: str = "rsjd512"


def _feel_config(spec: FeelSweepSpec, arm: str, k: int, snr: float) -> fs.FeelConfig:
    decoder = "psud" if arm == "digital-psud" else spec.decoder
    kind, r = parse_decoder(decoder)
    round_cfg = proto.RoundConfig(
        decoder=kind, rsjd_states=max(r, 1),
        quantizer=dataclasses.replace(proto.RoundConfig().quantizer, bit_length=k),
        scenario=spec.scenario, snr_db=snr,
    )
    uplink = {
        "ideal": "ideal",
        "digital": "digital",
        "digital-psud": "digital",
        "analog-aligned": "analog-aligned",
        "analog-misaligned": "analog-misaligned",
    }[arm]
    return fs.FeelConfig(iterations=spec.iterations, uplink=uplink, round_cfg=round_cfg)


def _feel_job(job):
    spec, arm, k, snr, seed_idx = job
    cfg = _feel_config(spec, arm, k, snr)
    seed = int(substream(spec.master_seed, "feel", arm, k, int(snr * 1000), seed_idx).integers(2**63))
    result = fs.run_feel(cfg, seed)
    return (arm, k, snr, seed_idx, result.accuracy_trace)


def sweep_feel(spec: FeelSweepSpec, threads: int = 1) -> list[tuple]:
    """Per-iteration accuracy rows for each (arm, k, snr, seed) cell."""
    jobs = []
    for arm in spec.arms:
        ks = spec.quant_bits if arm.startswith("digital") else (spec.quant_bits[0],)
        snrs = spec.snr_grid if arm != "ideal" else (spec.snr_grid[0],)
        for k in ks:
            for snr in snrs:
                for s in range(spec.seeds):
                    jobs.append((spec, arm, k, snr, s))
    t0 = time.monotonic()
    results = _parallel(_feel_job, jobs, threads)
    print(f"[feel] {len(jobs)} runs in {time.monotonic() - t0:.1f}s", file=sys.stderr)
    rows = []
    for arm, k, snr, seed_idx, trace in results:
        decoder = "psud" if arm == "digital-psud" else (
            spec.decoder if arm == "digital" else "-"
        )
        exp_id = f"feel:{arm}:k{k}:{snr:g}dB"
        for it, acc in enumerate(trace):
            rows.append((exp_id, arm, decoder, k, snr, seed_idx, it + 1, acc))
    rows.sort(key=lambda r: (r[0], r[5], r[6]))
    return rows


# ---------------------------------------------------------------------------
# Analog-vs-digital MSE comparison


def _analog_job(job):
    master_seed, mode, snr, rounds, repeats, n_params = job
    mses = np.empty(rounds)
    for r in range(rounds):
        prng = substream(master_seed, "analog-cmp", mode, int(snr * 1000), r)
        pa = prng.uniform(-1, 1, n_params)
        pb = prng.uniform(-1, 1, n_params)
        res = proto.run_analog_round(
            pa, pb, repeats, aligned=(mode == "aligned"),
            scenario=chan.ScenarioKind.NEAR_REALISTIC, snr_db=snr,
            seed=int(prng.integers(2**63)),
        )
        # MSE of the aggregated average vs the true average.
        mses[r] = float(np.mean((res.aggregated - (pa + pb) / 2.0) ** 2))
    return mode, snr, float(np.mean(mses))


def analog_compare(snr_grid, rounds: int, repeats: int, master_seed: int,
                   n_params: int = 96, threads: int = 1) -> list[tuple]:
    jobs = [(master_seed, mode, float(snr), rounds, repeats, n_params)
            for mode in ("aligned", "misaligned") for snr in snr_grid]
    t0 = time.monotonic()
    results = _parallel(_analog_job, jobs, threads)
    print(f"[analog-compare] {len(jobs)} cells in {time.monotonic() - t0:.1f}s",
          file=sys.stderr)
    rows = [
        (f"analog:{mode}:{snr:g}dB", mode, snr, rounds, repeats, mse, master_seed)
        for mode, snr, mse in results
    ]
    rows.sort(key=lambda r: (r[1], r[2]))
    return rows


# ---------------------------------------------------------------------------
# CSV emission


def _format_field(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def emit_csv(header, rows, path: str) -> None:
    """UTF-8, comma separated, LF endings, floats at 17 significant digits."""
    if not rows:
        raise ValueError(f"refusing to write empty result set to {path}")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_format_field(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Self test: exhaustive-oracle agreement on the small code


def selftest(instances: int = 100, seed: int = 0) -> bool:
    """FSJD path metric must equal the exhaustive pair minimum on the L=3 code."""
    spec = cc.TEST_CODE
    payload = 6
    ok = True
    for kind in chan.ScenarioKind:
        mismatches = 0
        for t in range(instances):
            rng = substream(seed, "selftest", kind.value, t)
            bits_a = rng.integers(0, 2, payload).astype(np.uint8)
            bits_b = rng.integers(0, 2, payload).astype(np.uint8)
            coded_a = cc.conv_encode(bits_a, spec, append_tail=True)
            coded_b = cc.conv_encode(bits_b, spec, append_tail=True)
            n = len(coded_a)
            if kind is chan.ScenarioKind.BAD:
                pa = pb = 0.0
            elif kind is chan.ScenarioKind.GOOD:
                pa, pb = 0.0, np.pi / 2
            else:
                pa, pb = rng.uniform(0, 2 * np.pi, 2)
            h_a = np.exp(1j * pa) * np.ones(n)
            h_b = np.exp(1j * pb) * np.ones(n)
            noise_var = 0.5
            noise = (rng.normal(size=n) + 1j * rng.normal(size=n)) * np.sqrt(noise_var / 2)
            y = h_a * (1 - 2.0 * coded_a) + h_b * (1 - 2.0 * coded_b) + noise
            obs = cc.SoftObservation(y, h_a, h_b, noise_var)
            got = cc.fsjd_decode(obs, spec).metric
            _, want = cc.oracle_min_metric(obs, spec, payload)
            if got != want:
                mismatches += 1
        status = "ok" if mismatches == 0 else f"FAILED ({mismatches}/{instances})"
        print(f"selftest {kind.value}: {status}")
        ok = ok and mismatches == 0
    return ok


# ---------------------------------------------------------------------------
# CLI


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _parse_names(text: str) -> tuple[str, ...]:
    return tuple(x for x in text.replace(",", " ").split())


def _load_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file {path} not found")
        cp.read(path)
    return cp


def _cfg_get(cp, section, key, fallback):
    if cp.has_option(section, key):
        return cp.get(section, key)
    return fallback


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="aircomp",
        description="Digital over-the-air computation simulator harness",
    )
    parser.add_argument("--config", help="INI config file with per-experiment sections")
    parser.add_argument("--seed", type=int, default=1, help="master seed")
    parser.add_argument("--out", help="output CSV path")
    parser.add_argument("--threads", type=int, default=1, help="worker processes")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ber = sub.add_parser("ber-sweep", help="SUM BER vs SNR Monte-Carlo sweep")
    p_ber.add_argument("--decoder", help="comma list: fsjd, rsjd<R>, psud")
    p_ber.add_argument("--scenario", choices=[k.value for k in chan.ScenarioKind])
    p_ber.add_argument("--snr", help="comma/space separated dB list")
    p_ber.add_argument("--trials", type=int)
    p_ber.add_argument("--source-bits", type=int)

    p_feel = sub.add_parser("feel", help="federated learning accuracy runs")
    p_feel.add_argument("--arms", help="comma list of arms")
    p_feel.add_argument("--quant-bits", help="comma list of k values")
    p_feel.add_argument("--snr", help="comma/space separated dB list")
    p_feel.add_argument("--iterations", type=int)
    p_feel.add_argument("--runs", type=int, help="seeds per cell")
    p_feel.add_argument("--scenario", choices=[k.value for k in chan.ScenarioKind])
    p_feel.add_argument("--decoder")

    p_an = sub.add_parser("analog-compare", help="analog aligned/misaligned MSE")
    p_an.add_argument("--snr", help="comma/space separated dB list")
    p_an.add_argument("--rounds", type=int)
    p_an.add_argument("--repeats", type=int)

    p_self = sub.add_parser("selftest", help="oracle-equivalence check, L=3 code")
    p_self.add_argument("--instances", type=int, default=100)

    args = parser.parse_args(argv)

    try:
        cp = _load_config(args.config)
        if args.command == "ber-sweep":
            sec = "ber-sweep"
            spec = SweepSpec(
                snr_grid=_parse_floats(args.snr or _cfg_get(cp, sec, "snr_db", "0 2 4 6 8 10 12 14 16 18 20")),
                trials=args.trials or int(_cfg_get(cp, sec, "trials", "4000")),
                decoders=_parse_names(args.decoder or _cfg_get(cp, sec, "decoders", "fsjd rsjd128 rsjd256 rsjd512 psud")),
                scenario=chan.ScenarioKind(args.scenario or _cfg_get(cp, sec, "scenario", "near-realistic")),
                n_source_bits=getattr(args, "source_bits", None) or int(_cfg_get(cp, sec, "source_bits", "1300")),
                master_seed=args.seed,
            )
            rows = sweep_sum_ber(spec, threads=args.threads, progress=True)
            out = args.out or _cfg_get(cp, sec, "out", "ber_sweep.csv")
            emit_csv(BER_HEADER, [r.csv_tuple() for r in rows], out)
            print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
        elif args.command == "feel":
            sec = "feel"
            spec = FeelSweepSpec(
                arms=_parse_names(args.arms or _cfg_get(cp, sec, "arms", "ideal digital digital-psud analog-aligned analog-misaligned")),
                quant_bits=tuple(int(x) for x in _parse_names(args.quant_bits or _cfg_get(cp, sec, "quant_bits", "13"))),
                snr_grid=_parse_floats(args.snr or _cfg_get(cp, sec, "snr_db", "9")),
                iterations=args.iterations or int(_cfg_get(cp, sec, "iterations", "100")),
                seeds=args.runs or int(_cfg_get(cp, sec, "seeds", "1")),
                master_seed=args.seed,
                scenario=chan.ScenarioKind(args.scenario or _cfg_get(cp, sec, "scenario", "near-realistic")),
                decoder=args.decoder or _cfg_get(cp, sec, "decoder", "rsjd512"),
            )
            rows = sweep_feel(spec, threads=args.threads)
            out = args.out or _cfg_get(cp, sec, "out", "feel.csv")
            emit_csv(FEEL_HEADER, rows, out)
            print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
        elif args.command == "analog-compare":
            sec = "analog-compare"
            rows = analog_compare(
                snr_grid=_parse_floats(args.snr or _cfg_get(cp, sec, "snr_db", "0 10 20 30 40")),
                rounds=args.rounds or int(_cfg_get(cp, sec, "rounds", "1000")),
                repeats=args.repeats or int(_cfg_get(cp, sec, "repeats", "13")),
                master_seed=args.seed,
                threads=args.threads,
            )
            out = args.out or _cfg_get(cp, sec, "out", "analog_compare.csv")
            emit_csv(ANALOG_HEADER, rows, out)
            print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
        elif args.command == "selftest":
            return 0 if selftest(args.instances, seed=args.seed) else 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
