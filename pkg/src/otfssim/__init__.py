"""OTFS link-level simulator with an iterative Bayesian symbol detector.

The pieces compose left to right: bits are mapped onto a delay-Doppler QAM
grid (``constellation``, ``modem``), pushed through a doubly-dispersive
multipath channel (``channel``), demodulated back to the delay-Doppler
domain, and handed to a detector (``detectors``).  ``harness`` wraps the
chain in a seeded Monte Carlo BER engine and ``cli`` exposes it as the
``otfssim`` command.
"""

from .channel import (ChannelPath, DdChannel, apply_channel_scalar, build_time_channel,
                      sample_channel)
from .constellation import Constellation, build_qam, map_bits, slice_symbols
from .detectors import (DetectionNumericalError, DetectionResult, DetectorConfig,
                        DetectorState, bpic_dsc_detect, ml_detect, mmse_detect)
from .harness import (BerRecord, SweepConfig, TrialResult, run_sweep, run_trial,
                      snr_db_to_sigma2)
from .modem import (DdFrame, OtfsGeometry, PulseShape, demodulate, dft_matrix,
                    effective_channel, isfft, modulate)

__version__ = "0.1.0"

__all__ = [
    "Constellation", "build_qam", "map_bits", "slice_symbols",
    "OtfsGeometry", "DdFrame", "PulseShape", "dft_matrix", "isfft",
    "modulate", "demodulate", "effective_channel",
    "ChannelPath", "DdChannel", "sample_channel", "build_time_channel",
    "apply_channel_scalar",
    "DetectorConfig", "DetectorState", "DetectionResult", "DetectionNumericalError",
    "mmse_detect", "bpic_dsc_detect", "ml_detect",
    "SweepConfig", "BerRecord", "TrialResult", "run_trial", "run_sweep",
    "snr_db_to_sigma2",
    "__version__",
]
