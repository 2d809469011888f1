"""OTFS modulation chain between the delay-Doppler grid and the time domain.

Transmit: an L x K delay-Doppler grid X is spread over time-frequency by the
ISFFT, X_TF = F_L X F_K^H, then converted to KL time samples by the Heisenberg
transform.  With a transmit pulse matrix G_tx the two steps collapse to

    s = vec(G_tx X F_K^H) = (F_K^H kron G_tx) x,    x = vec(X).

Receive: the Wigner transform plus SFFT undo the spreading,

    y = (F_K kron G_rx) r,

and a time-domain channel matrix H maps to its delay-Doppler equivalent

    H_dd = (F_K kron G_rx) H (F_K^H kron G_tx).

Rectangular pulses make G_tx = G_rx = I, so both Kronecker factors are unitary
and the chain is energy preserving.  The per-frame paths below avoid forming
the KL x KL Kronecker matrices: they reshape to L x K and run K-point FFTs
down the Doppler axis.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "OtfsGeometry",
    "DdFrame",
    "PulseShape",
    "dft_matrix",
    "isfft",
    "modulate",
    "demodulate",
    "effective_channel",
]


@dataclass(frozen=True)
class OtfsGeometry:
    """Frame geometry: L delay bins (subcarriers), K Doppler bins (slots).

    T is derived as 1/delta_f so T * delta_f = 1 holds by construction.
    n_cp is the cyclic prefix length in samples; it only enters frame
    duration accounting, since the receive model already works on the
    post-CP-removal circular signal.
    """

    delay_bins: int
    doppler_bins: int
    delta_f: float = 15e3
    n_cp: int = 0

    def __post_init__(self):
        if self.delay_bins < 1 or self.doppler_bins < 1:
            raise ValueError("delay_bins and doppler_bins must be >= 1")
        if self.delta_f <= 0:
            raise ValueError("delta_f must be positive")
        if self.n_cp < 0 or self.n_cp >= self.delay_bins:
            raise ValueError("n_cp must lie in [0, delay_bins)")

    @property
    def slot_duration(self) -> float:
        return 1.0 / self.delta_f

    @property
    def grid_size(self) -> int:
        return self.delay_bins * self.doppler_bins

    @property
    def samples_per_frame(self) -> int:
        """Sample count including the cyclic prefix."""
        return self.grid_size + self.n_cp

    @property
    def frame_duration(self) -> float:
        """Frame duration including the CP, K*T + n_cp*T/L seconds."""
        t = self.slot_duration
        return self.doppler_bins * t + self.n_cp * t / self.delay_bins


class DdFrame:
    """An L x K grid of delay-Doppler symbols and its column-major vector."""

    def __init__(self, grid: np.ndarray):
        grid = np.asarray(grid, dtype=np.complex128)
        if grid.ndim != 2:
            raise ValueError("grid must be 2-D (delay x Doppler)")
        self.grid = grid

    @classmethod
    def from_vec(cls, vec: np.ndarray, geom: OtfsGeometry) -> "DdFrame":
        vec = np.asarray(vec, dtype=np.complex128)
        if vec.shape != (geom.grid_size,):
            raise ValueError(f"expected vector of length {geom.grid_size}, got {vec.shape}")
        return cls(vec.reshape(geom.delay_bins, geom.doppler_bins, order="F"))

    @property
    def vec(self) -> np.ndarray:
        """Column-major vectorization: vec[l + k*L] = grid[l, k]."""
        return self.grid.reshape(-1, order="F")

    @property
    def shape(self):
        return self.grid.shape


@dataclass(frozen=True)
class PulseShape:
    """Sampled transmit/receive pulse gains, used as diagonal matrices."""

    tx_gains: np.ndarray
    rx_gains: np.ndarray

    def __post_init__(self):
        if len(self.tx_gains) != len(self.rx_gains):
            raise ValueError("tx_gains and rx_gains must have equal length")

    @classmethod
    def rectangular(cls, delay_bins: int) -> "PulseShape":
        ones = np.ones(delay_bins)
        return cls(tx_gains=ones, rx_gains=ones.copy())


@lru_cache(maxsize=32)
def dft_matrix(n: int) -> np.ndarray:
    """Unitary n-point DFT matrix, entry (p, q) = exp(-2j pi p q / n) / sqrt(n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(p, p) / n) / np.sqrt(n)
    mat.flags.writeable = False  # cached and shared, keep it read-only
    return mat


def _check_frame(geom: OtfsGeometry, frame: DdFrame):
    if frame.shape != (geom.delay_bins, geom.doppler_bins):
        raise ValueError(f"frame shape {frame.shape} does not match geometry "
                         f"({geom.delay_bins}, {geom.doppler_bins})")


def isfft(geom: OtfsGeometry, frame: DdFrame) -> np.ndarray:
    """Inverse SFFT to the time-frequency grid: X_TF = F_L X F_K^H."""
    _check_frame(geom, frame)
    return np.fft.ifft(np.fft.fft(frame.grid, axis=0, norm="ortho"), axis=1, norm="ortho")


def modulate(geom: OtfsGeometry, pulse: PulseShape, frame: DdFrame) -> np.ndarray:
    """Transmit chain to KL time samples: s = vec(G_tx X F_K^H)."""
    _check_frame(geom, frame)
    if len(pulse.tx_gains) != geom.delay_bins:
        raise ValueError("pulse length does not match delay_bins")
    shaped = frame.grid * np.asarray(pulse.tx_gains)[:, None]
    return np.fft.ifft(shaped, axis=1, norm="ortho").reshape(-1, order="F")


def demodulate(geom: OtfsGeometry, pulse: PulseShape, r: np.ndarray) -> DdFrame:
    """Receive chain from KL time samples: y = vec(G_rx R F_K).

    Exact inverse of modulate for rectangular (identity) pulses.
    """
    r = np.asarray(r, dtype=np.complex128)
    if r.shape != (geom.grid_size,):
        raise ValueError(f"expected received vector of length {geom.grid_size}, got {r.shape}")
    if len(pulse.rx_gains) != geom.delay_bins:
        raise ValueError("pulse length does not match delay_bins")
    rect = r.reshape(geom.delay_bins, geom.doppler_bins, order="F")
    shaped = rect * np.asarray(pulse.rx_gains)[:, None]
    return DdFrame(np.fft.fft(shaped, axis=1, norm="ortho"))


def effective_channel(geom: OtfsGeometry, pulse: PulseShape, h_time: np.ndarray) -> np.ndarray:
    """Delay-Doppler channel matrix (F_K kron G_rx) H (F_K^H kron G_tx).

    Applies the Kronecker factors column-block-wise with K-point FFTs
    instead of materializing them; with rectangular pulses the result is a
    unitary conjugation of H.
    """
    n = geom.grid_size
    h_time = np.asarray(h_time, dtype=np.complex128)
    if h_time.shape != (n, n):
        raise ValueError(f"expected {n}x{n} channel matrix, got {h_time.shape}")
    ldim, kdim = geom.delay_bins, geom.doppler_bins
    rx = np.asarray(pulse.rx_gains)[:, None, None]
    tx = np.asarray(pulse.tx_gains)[:, None, None]

    # Left factor: transform every column, vec(G_rx C F_K) per column C.
    cols = h_time.reshape(ldim, kdim, n, order="F")
    left = np.fft.fft(cols * rx, axis=1, norm="ortho").reshape(n, n, order="F")
    # Right factor via the transpose: rows get vec(G_tx C F_K^H).
    rows = left.T.reshape(ldim, kdim, n, order="F")
    out = np.fft.ifft(rows * tx, axis=1, norm="ortho").reshape(n, n, order="F")
    return np.ascontiguousarray(out.T)
