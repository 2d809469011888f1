"""Gray-coded square QAM alphabets: bit mapping and hard slicing."""

import numpy as np

__all__ = ["Constellation", "build_qam", "map_bits", "slice_symbols"]


class Constellation:
    """Square M-QAM alphabet, unit average symbol energy.

    Points are indexed by their integer bit label (MSB first); the first
    half of the label addresses the in-phase level, the second half the
    quadrature level.  Per-axis levels are Gray coded, so nearest
    neighbours along either axis differ in exactly one bit.
    """

    def __init__(self, order: int, points: np.ndarray, labels: np.ndarray):
        self.order = order
        self.points = points
        self.bits_per_symbol = int(np.log2(order))
        self.labels = labels
        self.points.flags.writeable = False
        self.labels.flags.writeable = False

    def __repr__(self):
        return f"Constellation(order={self.order})"


def _gray(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


def build_qam(order: int) -> Constellation:
    """Build a Gray-labeled square QAM constellation (order = 4, 16, 64, ...).

    Raises ValueError unless order is an even power of two, i.e. a square
    constellation exists.
    """
    if order < 4 or (order & (order - 1)) != 0 or int(np.log2(order)) % 2 != 0:
        raise ValueError(f"order must be an even power of 2 (4, 16, 64, ...), got {order}")
    m = int(np.log2(order))
    side = 1 << (m // 2)

    # Amplitude levels -(side-1), ..., -1, +1, ..., +(side-1); level i carries
    # the Gray label i ^ (i >> 1), so adjacent levels differ in one bit.
    amps = 2.0 * np.arange(side) - (side - 1)
    level_of_label = np.empty(side, dtype=np.int64)
    level_of_label[_gray(np.arange(side))] = np.arange(side)

    labels_int = np.arange(order)
    v_i = labels_int >> (m // 2)
    v_q = labels_int & (side - 1)
    scale = np.sqrt(2.0 * np.mean(amps**2))
    points = (amps[level_of_label[v_i]] + 1j * amps[level_of_label[v_q]]) / scale

    bit_weights = 1 << np.arange(m - 1, -1, -1)
    labels = ((labels_int[:, None] & bit_weights[None, :]) > 0).astype(np.uint8)
    return Constellation(order, points.astype(np.complex128), labels)


def map_bits(c: Constellation, bits: np.ndarray) -> np.ndarray:
    """Map a bit sequence (groups of bits_per_symbol, MSB first) to symbols."""
    bits = np.asarray(bits)
    m = c.bits_per_symbol
    if bits.size % m != 0:
        raise ValueError(f"bit count {bits.size} not divisible by {m}")
    if bits.size == 0:
        return np.empty(0, dtype=np.complex128)
    groups = bits.reshape(-1, m).astype(np.int64)
    idx = groups @ (1 << np.arange(m - 1, -1, -1))
    return c.points[idx]


def slice_symbols(c: Constellation, z) -> tuple[np.ndarray, np.ndarray]:
    """Hard-decide symbols: nearest constellation point and its bit label.

    Accepts a scalar or a vector; ties go to the lowest point index.
    Returns (points, bits); for a vector input of n symbols, bits has
    shape (n, bits_per_symbol).
    """
    z_arr = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    d2 = np.abs(z_arr[:, None] - c.points[None, :]) ** 2
    idx = d2.argmin(axis=1)  # argmin takes the first minimum: lowest index wins ties
    pts, bits = c.points[idx], c.labels[idx]
    if np.isscalar(z) or np.ndim(z) == 0:
        return pts[0], bits[0]
    return pts, bits
