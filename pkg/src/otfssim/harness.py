"""Monte Carlo BER engine: seeded trials, SNR sweeps, CSV output.

A trial is one OTFS frame pushed through the full chain: random bits ->
QAM mapping -> DD grid -> time-domain signal -> random multipath channel
plus noise -> DD-domain receive -> detector -> bit comparison.  Every trial
is a pure function of (master_seed, trial_index), so results are identical
no matter how trials are distributed over workers.

A sweep cell (one detector at one SNR) runs trials in fixed-size batches
and stops after the first batch prefix that accumulates the target bit
error count, or at the frame cap.  Batch boundaries, not worker scheduling,
decide which trials count, which keeps stop decisions deterministic under
any worker count.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, replace

import numpy as np

from .channel import apply_channel_scalar, build_time_channel, sample_channel
from .constellation import build_qam, map_bits
from .detectors import (DetectionNumericalError, DetectorConfig, bpic_dsc_detect,
                        ml_detect, mmse_detect)
from .modem import DdFrame, OtfsGeometry, PulseShape, demodulate, effective_channel, modulate

__all__ = [
    "DETECTORS",
    "SweepConfig",
    "BerRecord",
    "TrialResult",
    "CellFailure",
    "snr_db_to_sigma2",
    "run_trial",
    "run_sweep",
    "write_csv",
    "worker_count",
]

WORKERS_ENV = "OTFSSIM_WORKERS"
CSV_FIELDS = ("detector", "snr_db", "frames", "bits", "bit_errors", "ber",
              "mean_iterations", "failed_trials", "wall_seconds")
MAX_FAILED_FRACTION = 1e-3


def _detect_mmse(y, h, sigma2, const, cfg):
    return mmse_detect(y, h, sigma2, const)


def _detect_bpic_dsc(y, h, sigma2, const, cfg):
    return bpic_dsc_detect(y, h, sigma2, const, cfg)


def _detect_ml(y, h, sigma2, const, cfg):
    return ml_detect(y, h, const)


DETECTORS = {
    "mmse": _detect_mmse,
    "bpic-dsc": _detect_bpic_dsc,
    "ml": _detect_ml,
}


class CellFailure(RuntimeError):
    """Raised when a sweep cell exceeds the tolerated detector-failure rate."""

    def __init__(self, detector, snr_db, failed, frames, first_failure):
        self.detector = detector
        self.snr_db = snr_db
        self.first_failure = first_failure  # (trial, iteration, index)
        super().__init__(
            f"{failed}/{frames} failed trials for {detector} at {snr_db} dB "
            f"(first failure trial/iteration/index {first_failure})")


@dataclass(frozen=True)
class SweepConfig:
    """Full description of a BER experiment grid."""

    geometry: OtfsGeometry
    order: int = 4
    detectors: tuple[str, ...] = ("bpic-dsc", "mmse")
    snr_db: tuple[float, ...] = (8.0, 12.0, 16.0)
    paths: int = 14
    l_max: int = 6
    k_max: int = 3
    frames: int = 10000
    min_errors: int = 400
    batch_size: int = 256
    master_seed: int = 0
    detector_cfg: DetectorConfig = DetectorConfig()
    output: str | None = None

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if not self.snr_db:
            raise ValueError("snr_db list must be nonempty")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        unknown = [d for d in self.detectors if d not in DETECTORS]
        if unknown:
            raise ValueError(f"unknown detectors {unknown}; registry has {sorted(DETECTORS)}")


@dataclass
class BerRecord:
    """One (detector, SNR) measurement row."""

    detector: str
    snr_db: float
    frames: int
    bits: int
    bit_errors: int
    ber: float
    mean_iterations: float
    failed_trials: int
    wall_seconds: float


@dataclass
class TrialResult:
    bit_errors: int
    bits: int
    iterations: int
    failed: bool = False
    fail_iteration: int = -1
    fail_index: int = -1


def snr_db_to_sigma2(snr_db: float) -> float:
    """Per-sample noise variance for unit symbol energy and unit channel power."""
    return 10.0 ** (-snr_db / 10.0)


def run_trial(cfg: SweepConfig, snr_db: float, detector: str, trial_index: int) -> TrialResult:
    """Run one frame end to end.  Deterministic in (master_seed, trial_index);
    the detector choice does not perturb the random stream, so detectors can
    be compared on identical channel and noise realizations.
    """
    geom = cfg.geometry
    const = build_qam(cfg.order)
    pulse = PulseShape.rectangular(geom.delay_bins)
    rng = np.random.default_rng((cfg.master_seed, trial_index))

    n_bits = geom.grid_size * const.bits_per_symbol
    bits = rng.integers(0, 2, size=n_bits)
    frame = DdFrame.from_vec(map_bits(const, bits), geom)
    ch = sample_channel(rng, cfg.paths, cfg.l_max, cfg.k_max)

    sigma2 = snr_db_to_sigma2(snr_db)
    s = modulate(geom, pulse, frame)
    r = apply_channel_scalar(geom, ch, s, rng, sigma2)
    y = demodulate(geom, pulse, r).vec
    h_eff = effective_channel(geom, pulse, build_time_channel(geom, ch))

    try:
        result = DETECTORS[detector](y, h_eff, sigma2, const, cfg.detector_cfg)
    except DetectionNumericalError as err:
        return TrialResult(0, 0, 0, failed=True,
                           fail_iteration=err.iteration, fail_index=err.index)
    errors = int(np.count_nonzero(result.bits != bits))
    return TrialResult(errors, n_bits, result.iterations)


def _run_batch(cfg: SweepConfig, snr_db: float, detector: str, start: int, stop: int):
    """Partial sums over one contiguous block of trial indices."""
    errors = bits = iters = failed = 0
    first_failure = None
    for trial in range(start, stop):
        res = run_trial(cfg, snr_db, detector, trial)
        if res.failed:
            failed += 1
            if first_failure is None:
                first_failure = (trial, res.fail_iteration, res.fail_index)
        else:
            errors += res.bit_errors
            bits += res.bits
            iters += res.iterations
    return errors, bits, iters, failed, first_failure


def worker_count() -> int:
    """Worker pool size: the OTFSSIM_WORKERS env var, else available cores."""
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux fallback
        return os.cpu_count() or 1


def _batch_bounds(cfg: SweepConfig):
    starts = range(0, cfg.frames, cfg.batch_size)
    return [(s, min(s + cfg.batch_size, cfg.frames)) for s in starts]


def _run_cell(cfg: SweepConfig, snr_db: float, detector: str, pool,
              workers: int = 1) -> BerRecord:
    """Run one (detector, SNR) cell with the batch-prefix stop rule.

    Batches are committed in index order; the cell stops at the first prefix
    reaching min_errors.  Batches speculatively computed past that point are
    discarded, so totals do not depend on the worker count.
    """
    t0 = time.perf_counter()
    bounds = _batch_bounds(cfg)
    partials: dict[int, tuple] = {}
    totals = [0, 0, 0, 0]  # errors, bits, iterations, failed
    first_failure = None
    committed_frames = 0
    next_commit = 0

    def commit_ready():
        nonlocal next_commit, committed_frames, first_failure
        while next_commit < len(bounds) and next_commit in partials:
            errors, bits, iters, failed, failure = partials.pop(next_commit)
            totals[0] += errors
            totals[1] += bits
            totals[2] += iters
            totals[3] += failed
            if first_failure is None and failure is not None:
                first_failure = failure
            committed_frames += bounds[next_commit][1] - bounds[next_commit][0]
            next_commit += 1
            if totals[0] >= cfg.min_errors:
                return True
        return False

    if pool is None:
        for i, (start, stop) in enumerate(bounds):
            partials[i] = _run_batch(cfg, snr_db, detector, start, stop)
            if commit_ready():
                break
    else:
        inflight = {}
        submitted = 0
        stopped = False
        while not stopped and (submitted < len(bounds) or inflight):
            while submitted < len(bounds) and len(inflight) < workers + 1:
                start, stop = bounds[submitted]
                inflight[pool.submit(_run_batch, cfg, snr_db, detector, start, stop)] = submitted
                submitted += 1
            done, _ = wait(list(inflight), return_when=FIRST_COMPLETED)
            for fut in done:
                partials[inflight.pop(fut)] = fut.result()
            stopped = commit_ready()
        for fut in inflight:  # drop speculative work past the stop point
            fut.cancel()
        wait(list(inflight))

    errors, bits, iters, failed = totals
    if committed_frames and failed / committed_frames > MAX_FAILED_FRACTION:
        raise CellFailure(detector, snr_db, failed, committed_frames, first_failure)
    ok_frames = committed_frames - failed
    return BerRecord(
        detector=detector,
        snr_db=snr_db,
        frames=committed_frames,
        bits=bits,
        bit_errors=errors,
        ber=errors / bits if bits else 0.0,
        mean_iterations=iters / ok_frames if ok_frames else 0.0,
        failed_trials=failed,
        wall_seconds=time.perf_counter() - t0,
    )


def _check_output_writable(path: str):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    probe = os.path.join(directory, f".otfssim-probe-{os.getpid()}")
    try:
        with open(probe, "w"):
            pass
    except OSError as err:
        raise OSError(f"output path {path!r} is not writable: {err.strerror}") from err
    finally:
        if os.path.exists(probe):
            os.unlink(probe)


def write_csv(records: list[BerRecord], path: str):
    """Write records atomically: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp-{os.getpid()}")
    with open(tmp, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow([rec.detector, rec.snr_db, rec.frames, rec.bits,
                             rec.bit_errors, rec.ber, rec.mean_iterations,
                             rec.failed_trials, round(rec.wall_seconds, 3)])
    os.replace(tmp, path)


def run_sweep(cfg: SweepConfig, workers: int | None = None,
              progress=None) -> list[BerRecord]:
    """Run every (detector, SNR) cell of the grid and optionally write CSV.

    ``workers`` defaults to worker_count(); 1 runs inline.  ``progress`` is an
    optional callable invoked with each finished BerRecord.
    """
    if cfg.output is not None:
        _check_output_writable(cfg.output)
    if workers is None:
        workers = worker_count()

    records = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for detector in cfg.detectors:
            for snr in cfg.snr_db:
                rec = _run_cell(cfg, snr, detector, pool, workers)
                records.append(rec)
                if progress is not None:
                    progress(rec)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)

    if cfg.output is not None:
        write_csv(records, cfg.output)
    return records


def single_cell_config(cfg: SweepConfig, detector: str, snr_db: float) -> SweepConfig:
    return replace(cfg, detectors=(detector,), snr_db=(snr_db,))
