"""Command line front end.

Three subcommands:

* ``simulate`` -- one (detector, SNR) cell, with an optional per-iteration
  trace of the iterative detector on a single frame.
* ``sweep``    -- full detector x SNR grid driven by a config file and/or
  flags; requires an explicit ``--seed``.
* ``verify``   -- built-in consistency checks of the transforms, the channel
  models, and the detectors against each other.

Settings come from a plain-text config file of ``key = value`` lines with
``#`` comments; every key can be overridden by the flag of the same name.
Exit codes: 0 success, 1 numerical failure or failed self-check, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .channel import apply_channel_scalar, build_time_channel, sample_channel
from .constellation import build_qam, map_bits, slice_symbols
from .detectors import INIT_MODES, DetectionNumericalError, DetectorConfig, bpic_dsc_detect
from .modem import (DdFrame, OtfsGeometry, PulseShape, demodulate, dft_matrix,
                    effective_channel, modulate)

__all__ = ["main", "load_config", "UsageError"]


class UsageError(Exception):
    """Bad flag combination, config key, or value; maps to exit code 2."""


_CONVERTERS = {
    "L": int,
    "K": int,
    "delta_f": float,
    "ncp": int,
    "order": int,
    "detectors": str,
    "snrs": str,
    "paths": int,
    "lmax": int,
    "kmax": int,
    "frames": int,
    "min_errors": int,
    "batch": int,
    "tmax": int,
    "zeta": float,
    "init": str,
    "out": str,
    "seed": int,
}

_DEFAULTS = {
    "L": 12,
    "K": 7,
    "delta_f": 15e3,
    "ncp": 6,
    "order": 4,
    "detectors": "bpic-dsc,mmse",
    "snrs": "8,12,16",
    "paths": 14,
    "lmax": 6,
    "kmax": 3,
    "frames": 10000,
    "min_errors": 400,
    "batch": 256,
    "tmax": 10,
    "zeta": 1e-4,
    "init": "full_mmse",
    "out": None,
    "seed": None,
}


def load_config(path: str) -> dict:
    """Parse a ``key = value`` file with ``#`` comments into a string dict."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as err:
        raise UsageError(f"cannot read config file: {err}") from err
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise UsageError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
        if key not in _CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r} "
                             f"(known: {', '.join(sorted(_CONVERTERS))})")
        values[key] = value.strip()
    return values


def _merged_options(args) -> dict:
    """Defaults, overlaid by config-file values, overlaid by flags."""
    opts = dict(_DEFAULTS)
    if getattr(args, "config", None):
        opts.update(load_config(args.config))
    for key in _CONVERTERS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            opts[key] = flag_value
    typed = {}
    for key, value in opts.items():
        if value is None:
            typed[key] = None
            continue
        try:
            typed[key] = _CONVERTERS[key](value)
        except (TypeError, ValueError) as err:
            raise UsageError(f"bad value for {key}: {value!r}") from err
    return typed


def _parse_list(text, conv, what):
    items = [part.strip() for part in str(text).split(",") if part.strip()]
    if not items:
        raise UsageError(f"empty {what} list")
    try:
        return tuple(conv(item) for item in items)
    except ValueError as err:
        raise UsageError(f"bad {what} list {text!r}") from err


def _build_sweep_config(opts, detectors, snrs, seed) -> harness.SweepConfig:
    try:
        build_qam(opts["order"])  # fail fast on a bad constellation order
        geometry = OtfsGeometry(opts["L"], opts["K"], opts["delta_f"], opts["ncp"])
        detector_cfg = DetectorConfig(t_max=opts["tmax"], zeta=opts["zeta"],
                                      init_mode=opts["init"])
        return harness.SweepConfig(
            geometry=geometry,
            order=opts["order"],
            detectors=detectors,
            snr_db=snrs,
            paths=opts["paths"],
            l_max=opts["lmax"],
            k_max=opts["kmax"],
            frames=opts["frames"],
            min_errors=opts["min_errors"],
            batch_size=opts["batch"],
            master_seed=seed,
            detector_cfg=detector_cfg,
            output=opts["out"],
        )
    except ValueError as err:
        raise UsageError(str(err)) from err


def _print_records(records):
    print(",".join(harness.CSV_FIELDS))
    for rec in records:
        print(f"{rec.detector},{rec.snr_db:g},{rec.frames},{rec.bits},"
              f"{rec.bit_errors},{rec.ber:.6g},{rec.mean_iterations:.6g},"
              f"{rec.failed_trials},{rec.wall_seconds:.3f}")


def _trace_trial(cfg: harness.SweepConfig, snr_db: float, trial_index: int) -> int:
    """Re-run one trial with per-iteration detector state printed."""
    geom = cfg.geometry
    const = build_qam(cfg.order)
    pulse = PulseShape.rectangular(geom.delay_bins)
    rng = np.random.default_rng((cfg.master_seed, trial_index))
    bits = rng.integers(0, 2, size=geom.grid_size * const.bits_per_symbol)
    frame = DdFrame.from_vec(map_bits(const, bits), geom)
    ch = sample_channel(rng, cfg.paths, cfg.l_max, cfg.k_max)
    sigma2 = harness.snr_db_to_sigma2(snr_db)
    s = modulate(geom, pulse, frame)
    r = apply_channel_scalar(geom, ch, s, rng, sigma2)
    y = demodulate(geom, pulse, r).vec
    h_eff = effective_channel(geom, pulse, build_time_channel(geom, ch))

    try:
        result = bpic_dsc_detect(y, h_eff, sigma2, const, cfg.detector_cfg,
                                 record_states=True)
    except DetectionNumericalError as err:
        print(f"numerical failure: trial {trial_index}, iteration {err.iteration}, "
              f"index {err.index}", file=sys.stderr)
        return 1

    print(f"trial {trial_index}: snr {snr_db:g} dB, sigma2 {sigma2:.4e}, "
          f"{cfg.paths} paths, grid {geom.delay_bins}x{geom.doppler_bins}")
    print("iter  step_norm   mean_rho  mean_residual")
    for st in result.states:
        step = (np.linalg.norm(st.x_dsc - st.x_dsc_prev)
                if st.x_dsc_prev is not None else float("nan"))
        print(f"{st.t:4d}  {step:9.3e}  {np.mean(st.rho):8.4f}  {np.mean(st.e):.4e}")
    errors = int(np.count_nonzero(result.bits != bits))
    print(f"stopped after {result.iterations} iterations, "
          f"{errors}/{bits.size} bit errors")
    return 0


def _cmd_simulate(args) -> int:
    opts = _merged_options(args)
    if args.detector not in harness.DETECTORS:
        raise UsageError(f"unknown detector {args.detector!r} "
                         f"(known: {', '.join(sorted(harness.DETECTORS))})")
    seed = opts["seed"] if opts["seed"] is not None else 0
    cfg = _build_sweep_config(opts, (args.detector,), (args.snr,), seed)
    if args.trace is not None:
        if args.detector != "bpic-dsc":
            raise UsageError("--trace applies only to the bpic-dsc detector")
        return _trace_trial(cfg, args.snr, args.trace)
    records = harness.run_sweep(cfg)
    _print_records(records)
    return 0


def _cmd_sweep(args) -> int:
    if args.seed is None:
        raise UsageError("sweep requires an explicit --seed")
    opts = _merged_options(args)
    detectors = _parse_list(opts["detectors"], str, "detector")
    snrs = _parse_list(opts["snrs"], float, "snr")
    opts["out"] = opts["out"] or "sweep.csv"
    cfg = _build_sweep_config(opts, detectors, snrs, args.seed)

    def progress(rec):
        print(f"{rec.detector} @ {rec.snr_db:g} dB: ber {rec.ber:.3e} "
              f"({rec.bit_errors} errors / {rec.bits} bits, {rec.frames} frames, "
              f"mean iterations {rec.mean_iterations:.2f}, {rec.wall_seconds:.1f} s)")

    harness.run_sweep(cfg, progress=progress)
    print(f"wrote {cfg.output}")
    return 0


# --- verify: cheap self-consistency checks runnable on any install ---------

def _check_constellation():
    rng = np.random.default_rng(7)
    for order in (4, 16, 64):
        const = build_qam(order)
        energy = np.mean(np.abs(const.points) ** 2)
        assert abs(energy - 1.0) < 1e-12, f"order {order} mean energy {energy}"
        bits = rng.integers(0, 2, size=60 * const.bits_per_symbol)
        _, recovered = slice_symbols(const, map_bits(const, bits))
        assert np.array_equal(recovered.reshape(-1), bits), f"order {order} round trip"
    return "orders 4/16/64"


def _check_dft_unitarity():
    worst = 0.0
    for n in (2, 7, 12, 84):
        f = dft_matrix(n)
        worst = max(worst, np.linalg.norm(f @ f.conj().T - np.eye(n)))
    assert worst < 1e-10, f"unitarity deviation {worst}"
    return f"max deviation {worst:.1e}"


def _check_transceiver_roundtrip():
    geom = OtfsGeometry(12, 7)
    pulse = PulseShape.rectangular(geom.delay_bins)
    const = build_qam(4)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        bits = rng.integers(0, 2, size=geom.grid_size * const.bits_per_symbol)
        x = map_bits(const, bits)
        y = demodulate(geom, pulse, modulate(geom, pulse, DdFrame.from_vec(x, geom))).vec
        worst = max(worst, float(np.linalg.norm(y - x)))
    assert worst <= 1e-10, f"round-trip deviation {worst}"
    return f"max deviation {worst:.1e}"


def _check_channel_equivalence():
    geom = OtfsGeometry(12, 7)
    rng = np.random.default_rng(13)
    n = geom.grid_size
    worst = 0.0
    for paths in (1, 6, 18):
        for _ in range(10):
            ch = sample_channel(rng, paths, 6, 3)
            h = build_time_channel(geom, ch)
            s = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
            r = apply_channel_scalar(geom, ch, s, None, 0.0)
            worst = max(worst, float(np.linalg.norm(r - h @ s) / np.linalg.norm(s)))
    assert worst <= 1e-10, f"scalar/matrix deviation {worst}"
    return f"max relative deviation {worst:.1e}"


def _check_effective_channel():
    geom = OtfsGeometry(12, 7)
    pulse = PulseShape.rectangular(geom.delay_bins)
    rng = np.random.default_rng(17)
    n = geom.grid_size
    worst = 0.0
    for _ in range(10):
        ch = sample_channel(rng, 6, 6, 3)
        h = build_time_channel(geom, ch)
        h_eff = effective_channel(geom, pulse, h)
        x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        piped = demodulate(geom, pulse, h @ modulate(geom, pulse, DdFrame.from_vec(x, geom))).vec
        worst = max(worst, float(np.linalg.norm(piped - h_eff @ x)))
    assert worst <= 1e-10, f"effective-channel deviation {worst}"
    return f"max deviation {worst:.1e}"


def _check_noiseless_detection():
    cfg = harness.SweepConfig(geometry=OtfsGeometry(12, 7), paths=1, l_max=1, k_max=0)
    # snr 120 dB stands in for the noiseless case (sigma2 = 1e-12 exactly)
    for detector in ("mmse", "bpic-dsc"):
        for trial in range(5):
            res = harness.run_trial(cfg, 120.0, detector, trial)
            assert not res.failed, f"{detector} failed on trial {trial}"
            assert res.bit_errors == 0, (
                f"{detector} made {res.bit_errors} errors on a clean channel")
    return "mmse and bpic-dsc exact on a clean single-path channel"


def _check_against_exhaustive_search():
    cfg = harness.SweepConfig(geometry=OtfsGeometry(2, 2), order=4,
                              paths=2, l_max=1, k_max=1)
    counts = {}
    for detector in ("ml", "bpic-dsc", "mmse"):
        errors = 0
        for trial in range(800):
            res = harness.run_trial(cfg, 20.0, detector, trial)
            errors += res.bit_errors
        counts[detector] = errors
    # Slack terms absorb Monte Carlo noise at this small sample size.
    assert counts["bpic-dsc"] <= 2 * counts["ml"] + 16, counts
    assert counts["ml"] <= counts["mmse"] + 16, counts
    assert counts["bpic-dsc"] <= counts["mmse"] + 16, counts
    return (f"errors over 800 frames: ml={counts['ml']} "
            f"bpic-dsc={counts['bpic-dsc']} mmse={counts['mmse']}")


_VERIFY_CHECKS = (
    ("constellation round trip", _check_constellation),
    ("transform unitarity", _check_dft_unitarity),
    ("transceiver round trip", _check_transceiver_roundtrip),
    ("scalar channel matches matrix channel", _check_channel_equivalence),
    ("effective channel matches pipeline", _check_effective_channel),
    ("noiseless detection is exact", _check_noiseless_detection),
    ("detector ordering vs exhaustive search", _check_against_exhaustive_search),
)


def _cmd_verify(args) -> int:
    failures = 0
    for name, check in _VERIFY_CHECKS:
        try:
            detail = check()
        except AssertionError as err:
            print(f"FAIL  {name}: {err}")
            failures += 1
            continue
        print(f"PASS  {name}" + (f" ({detail})" if detail else ""))
    if failures:
        print(f"{failures} of {len(_VERIFY_CHECKS)} checks failed")
        return 1
    print(f"all {len(_VERIFY_CHECKS)} checks passed")
    return 0


def _add_shared_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--L", type=int, help="delay bins per frame")
    p.add_argument("--K", type=int, help="Doppler bins per frame")
    p.add_argument("--delta-f", dest="delta_f", type=float, help="subcarrier spacing, Hz")
    p.add_argument("--ncp", type=int, help="cyclic prefix length, samples")
    p.add_argument("--order", type=int, help="QAM order (4, 16, 64, ...)")
    p.add_argument("--paths", type=int, help="number of channel paths")
    p.add_argument("--lmax", type=int, help="largest delay index")
    p.add_argument("--kmax", type=int, help="largest Doppler index magnitude")
    p.add_argument("--frames", type=int, help="frame cap per cell")
    p.add_argument("--min-errors", dest="min_errors", type=int,
                   help="bit errors collected before a cell stops early")
    p.add_argument("--batch", type=int, help="trials per scheduling batch")
    p.add_argument("--tmax", type=int, help="iterative detector iteration cap")
    p.add_argument("--zeta", type=float, help="iterative detector stop threshold")
    p.add_argument("--init", choices=INIT_MODES, help="iterative detector initializer")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--seed", type=int, help="master seed")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otfssim",
        description="OTFS link-level BER simulator with iterative Bayesian detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one detector at one SNR")
    _add_shared_flags(p_sim)
    p_sim.add_argument("--snr", type=float, required=True, help="SNR in dB")
    p_sim.add_argument("--detector", default="bpic-dsc",
                       help="detector name (default bpic-dsc)")
    p_sim.add_argument("--trace", type=int, metavar="TRIAL",
                       help="print per-iteration detector state for one trial")
    p_sim.set_defaults(func=_cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run the full detector x SNR grid")
    _add_shared_flags(p_sweep)
    p_sweep.add_argument("--detectors", help="comma-separated detector names")
    p_sweep.add_argument("--snrs", help="comma-separated SNR list, dB")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_verify = sub.add_parser("verify", help="run built-in consistency checks")
    p_verify.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 2
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except harness.CellFailure as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 1
    except DetectionNumericalError as err:
        print(f"numerical failure: iteration {err.iteration}, index {err.index}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
