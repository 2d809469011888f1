"""Random delay-Doppler multipath channels and their time-domain action.

A channel is a sum of P discrete paths, each a (complex gain, delay index,
Doppler index) triple.  Its KL x KL time-domain matrix is

    H = sum_i h_i * S(l_i) * D(k_i),

where S(l) circularly left-shifts the identity's columns by l (delay) and
D(k) = diag(exp(2j pi k n / KL)) applies the Doppler phase ramp.  The same
channel can be applied sample by sample,

    r(n) = sum_i h_i exp(2j pi k_i (n - l_i) / KL) s((n - l_i) mod KL) + w(n),

which is kept as an independent route for cross-checking the matrix build.
"""

from dataclasses import dataclass

import numpy as np

from .modem import OtfsGeometry

__all__ = [
    "ChannelPath",
    "DdChannel",
    "sample_channel",
    "build_time_channel",
    "apply_channel_scalar",
]


@dataclass(frozen=True)
class ChannelPath:
    gain: complex
    delay_idx: int
    doppler_idx: int


@dataclass(frozen=True)
class DdChannel:
    """P-path channel with declared delay/Doppler index bounds."""

    paths: tuple[ChannelPath, ...]
    l_max: int
    k_max: int

    def __post_init__(self):
        for p in self.paths:
            if not (0 <= p.delay_idx <= self.l_max):
                raise ValueError(f"delay index {p.delay_idx} outside [0, {self.l_max}]")
            if abs(p.doppler_idx) > self.k_max:
                raise ValueError(f"Doppler index {p.doppler_idx} outside "
                                 f"[-{self.k_max}, {self.k_max}]")

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    def to_text(self) -> str:
        """One 'gain_re gain_im delay doppler' line per path, for replay."""
        lines = [f"# l_max={self.l_max} k_max={self.k_max}"]
        for p in self.paths:
            lines.append(f"{p.gain.real!r} {p.gain.imag!r} {p.delay_idx} {p.doppler_idx}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DdChannel":
        l_max = k_max = None
        paths = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, val = token.partition("=")
                    if key == "l_max":
                        l_max = int(val)
                    elif key == "k_max":
                        k_max = int(val)
                continue
            re_s, im_s, l_s, k_s = line.split()
            paths.append(ChannelPath(complex(float(re_s), float(im_s)), int(l_s), int(k_s)))
        if not paths:
            raise ValueError("no channel paths in text record")
        if l_max is None:
            l_max = max(p.delay_idx for p in paths)
        if k_max is None:
            k_max = max(abs(p.doppler_idx) for p in paths)
        return cls(tuple(paths), l_max, k_max)


def sample_channel(rng: np.random.Generator, num_paths: int, l_max: int, k_max: int) -> DdChannel:
    """Draw a random channel: line-of-sight first path at delay 0, the rest
    uniform on {1..l_max} (repeats allowed), Dopplers uniform on
    {-k_max..k_max}, gains i.i.d. circular Gaussian with variance 1/P so the
    expected total power is 1.
    """
    if num_paths < 1:
        raise ValueError("num_paths must be >= 1")
    if l_max < 1 or k_max < 0:
        raise ValueError("need l_max >= 1 and k_max >= 0")
    delays = np.empty(num_paths, dtype=np.int64)
    delays[0] = 0
    delays[1:] = rng.integers(1, l_max + 1, size=num_paths - 1)
    dopplers = rng.integers(-k_max, k_max + 1, size=num_paths)
    scale = np.sqrt(1.0 / (2.0 * num_paths))
    gains = scale * (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths))
    paths = tuple(ChannelPath(complex(g), int(l), int(k))
                  for g, l, k in zip(gains, delays, dopplers))
    return DdChannel(paths, l_max, k_max)


def build_time_channel(geom: OtfsGeometry, ch: DdChannel) -> np.ndarray:
    """Dense KL x KL time-domain channel matrix H = sum h_i S(l_i) D(k_i).

    Each path contributes one entry per column: row (c + l_i) mod KL of
    column c gets h_i * exp(2j pi k_i c / KL).
    """
    n = geom.grid_size
    h = np.zeros((n, n), dtype=np.complex128)
    cols = np.arange(n)
    for p in ch.paths:
        if p.delay_idx >= n:
            raise ValueError(f"delay index {p.delay_idx} >= frame size {n}")
        rows = (cols + p.delay_idx) % n
        h[rows, cols] += p.gain * np.exp(2j * np.pi * p.doppler_idx * cols / n)
    return h


def apply_channel_scalar(geom: OtfsGeometry, ch: DdChannel, s: np.ndarray,
                         rng: np.random.Generator | None, sigma2: float) -> np.ndarray:
    """Apply the channel sample by sample (no matrix build) and add noise.

    Noise is i.i.d. circular complex Gaussian with per-sample variance
    sigma2; pass sigma2 = 0 for the noiseless response.
    """
    n = geom.grid_size
    s = np.asarray(s, dtype=np.complex128)
    if s.shape != (n,):
        raise ValueError(f"expected signal of length {n}, got {s.shape}")
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    idx = np.arange(n)
    r = np.zeros(n, dtype=np.complex128)
    for p in ch.paths:
        phase = np.exp(2j * np.pi * p.doppler_idx * (idx - p.delay_idx) / n)
        r += p.gain * phase * s[(idx - p.delay_idx) % n]
    if sigma2 > 0:
        if rng is None:
            raise ValueError("rng required when sigma2 > 0")
        scale = np.sqrt(sigma2 / 2.0)
        r += scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return r
