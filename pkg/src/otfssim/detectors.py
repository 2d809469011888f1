"""Symbol detectors for the linear model y = H x + w, x drawn from a QAM alphabet.

Three detectors share one interface:

* ``mmse_detect``    -- classical one-shot MMSE filter plus slicing.
* ``bpic_dsc_detect`` -- iterative Bayesian detector: parallel interference
  cancellation (PIC) produces per-symbol matched-filter observations, a
  Bayesian symbol estimator (BSE) turns them into posterior means and
  variances over the alphabet, and decision statistics combining (DSC)
  blends consecutive iterations with SINR-optimal weights.
* ``ml_detect``      -- brute-force maximum likelihood search, usable as an
  oracle on small problems.

The per-symbol operations (``pic_step``, ``pic_variance``, ``bse``,
``dsc_error``, ``dsc_combine``) are exposed individually; the main loop runs
vectorized equivalents of the same formulas.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .constellation import Constellation, slice_symbols

__all__ = [
    "DetectorConfig",
    "DetectorState",
    "DetectionResult",
    "DetectionNumericalError",
    "mmse_detect",
    "pic_init",
    "pic_step",
    "pic_variance",
    "bse",
    "dsc_error",
    "dsc_combine",
    "bpic_dsc_detect",
    "ml_detect",
]

ML_SEARCH_LIMIT = 1 << 20
INIT_MODES = ("full_mmse", "scalar_mmse")


class DetectionNumericalError(RuntimeError):
    """A detector produced a non-finite value; records where it happened."""

    def __init__(self, iteration: int, index: int, detail: str = ""):
        self.iteration = iteration
        self.index = index
        msg = f"non-finite detector state at iteration {iteration}, symbol {index}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(frozen=True)
class DetectorConfig:
    """Iteration knobs for the iterative detector."""

    t_max: int = 10
    zeta: float = 1e-4
    init_mode: str = "full_mmse"

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")


@dataclass
class DetectorState:
    """Snapshot of one PIC/BSE/DSC iteration (for tracing and tests)."""

    t: int
    x_pic: np.ndarray
    sigma_pic: np.ndarray
    x_hat: np.ndarray
    v_hat: np.ndarray
    x_dsc: np.ndarray
    x_dsc_prev: np.ndarray | None
    e: np.ndarray
    e_prev: np.ndarray | None
    rho: np.ndarray


@dataclass
class DetectionResult:
    hard: np.ndarray
    bits: np.ndarray
    soft_mean: np.ndarray
    soft_var: np.ndarray
    iterations: int
    states: list[DetectorState] = field(default_factory=list, repr=False)


def _require_finite_inputs(y: np.ndarray, h: np.ndarray):
    """Non-finite observations count as a numerical failure, not a usage error."""
    if not np.all(np.isfinite(y)):
        raise DetectionNumericalError(0, int(np.flatnonzero(~np.isfinite(y))[0]), "input y")
    if not np.all(np.isfinite(h)):
        flat = int(np.flatnonzero(~np.isfinite(h))[0])
        raise DetectionNumericalError(0, flat % h.shape[1], "input H")


def _column_energies(h: np.ndarray) -> np.ndarray:
    col2 = np.einsum("ij,ij->j", h.conj(), h).real
    if np.any(col2 <= 0):
        raise ValueError(f"channel matrix has a zero column (q={int(np.argmin(col2))})")
    return col2


def _mmse_filter(y: np.ndarray, h: np.ndarray, sigma2: float) -> np.ndarray:
    """Solve (H^H H + sigma2 I) x = H^H y via a Hermitian factorization."""
    gram = h.conj().T @ h
    gram[np.diag_indices_from(gram)] += sigma2
    rhs = h.conj().T @ y
    if sigma2 == 0:
        # No regularization: the normal equations may be exactly singular.
        return np.linalg.solve(gram, rhs)
    return scipy.linalg.solve(gram, rhs, assume_a="pos")


def mmse_detect(y: np.ndarray, h: np.ndarray, sigma2: float, c: Constellation,
                config: DetectorConfig | None = None) -> DetectionResult:
    """One-shot MMSE estimate x = (H^H H + sigma2 I)^-1 H^H y, then slice.

    With sigma2 = 0 the unregularized solve may raise LinAlgError; with noise
    present, solver breakdowns surface as DetectionNumericalError instead.
    """
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if sigma2 > 0:
        _require_finite_inputs(y, h)
        try:
            soft = _mmse_filter(y, h, sigma2)
        except np.linalg.LinAlgError as err:
            raise DetectionNumericalError(0, -1, f"mmse solve: {err}") from err
        if not np.all(np.isfinite(soft)):
            raise DetectionNumericalError(
                0, int(np.flatnonzero(~np.isfinite(soft))[0]), "mmse")
    else:
        soft = _mmse_filter(y, h, sigma2)
    hard, bits = slice_symbols(c, soft)
    return DetectionResult(hard=hard, bits=bits.reshape(-1), soft_mean=soft,
                           soft_var=np.zeros(len(soft)), iterations=1)


def pic_init(y: np.ndarray, h: np.ndarray, sigma2: float,
             mode: str = "full_mmse") -> np.ndarray:
    """Initial symbol estimates for the PIC loop.

    full_mmse solves the whole-matrix MMSE system; scalar_mmse applies the
    per-symbol filter h_q^H y / (||h_q||^2 + sigma2), which ignores
    interference but needs no matrix inverse.
    """
    if mode not in INIT_MODES:
        raise ValueError(f"unknown init mode {mode!r}")
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if mode == "full_mmse":
        return _mmse_filter(y, h, sigma2)
    return (h.conj().T @ y) / (_column_energies(h) + sigma2)


def pic_step(y: np.ndarray, h: np.ndarray, x_prev: np.ndarray, q: int) -> complex:
    """Matched-filter output for symbol q after cancelling all other symbols:

        x_pic_q = h_q^H (y - H x_prev_without_q) / ||h_q||^2
    """
    h_q = h[:, q]
    energy = np.vdot(h_q, h_q).real
    if energy <= 0:
        raise ValueError(f"channel matrix has a zero column (q={q})")
    cancelled = np.array(x_prev, dtype=np.complex128)
    cancelled[q] = 0
    return complex(np.vdot(h_q, y - h @ cancelled) / energy)


def pic_variance(h: np.ndarray, sigma2: float, q: int) -> float:
    """Variance of the PIC observation for symbol q: sigma2 / ||h_q||^2."""
    h_q = h[:, q]
    energy = np.vdot(h_q, h_q).real
    if energy <= 0:
        raise ValueError(f"channel matrix has a zero column (q={q})")
    return sigma2 / energy


def bse(x_pic_q: complex, sigma_q: float, c: Constellation):
    """Posterior over the alphabet given a Gaussian observation of one symbol.

    Uniform prior, posterior(a) proportional to exp(-|x_pic_q - a|^2 / sigma_q),
    evaluated with a shifted exponent so high-SNR cases do not underflow.
    Returns (posterior mean, posterior variance, posterior probabilities).
    At sigma_q = 0 the posterior collapses to the nearest point.
    """
    if sigma_q < 0:
        raise ValueError("sigma_q must be >= 0")
    if sigma_q == 0:
        point, _ = slice_symbols(c, x_pic_q)
        posterior = (c.points == point).astype(float)
        posterior /= posterior.sum()
        return complex(point), 0.0, posterior
    d2 = np.abs(x_pic_q - c.points) ** 2
    logw = -d2 / sigma_q
    w = np.exp(logw - logw.max())
    posterior = w / w.sum()
    mean = complex(posterior @ c.points)
    var = float(posterior @ np.abs(c.points) ** 2 - abs(mean) ** 2)
    return mean, max(var, 0.0), posterior


def dsc_error(y: np.ndarray, h: np.ndarray, x_hat: np.ndarray, q: int) -> float:
    """Instantaneous squared error of symbol q through the MRC filter:

        e_q = | h_q^H (y - H x_hat) / ||h_q||^2 |^2

    x_hat is the complete estimate vector; entry q is not zeroed here.
    """
    h_q = h[:, q]
    energy = np.vdot(h_q, h_q).real
    if energy <= 0:
        raise ValueError(f"channel matrix has a zero column (q={q})")
    return float(np.abs(np.vdot(h_q, y - h @ np.asarray(x_hat)) / energy) ** 2)


def dsc_combine(x_hat_t: complex, x_hat_prev: complex, e_t: float, e_prev: float):
    """SINR-weighted combination of consecutive estimates of one symbol.

    rho = e_prev / (e_t + e_prev) weights the current estimate; when both
    residuals vanish the current estimate is trusted (rho = 1).
    """
    denom = e_t + e_prev
    rho = 1.0 if denom == 0 else e_prev / denom
    return (1.0 - rho) * x_hat_prev + rho * x_hat_t, rho


def _bse_moments(x_pic: np.ndarray, sigma_pic: np.ndarray, points: np.ndarray):
    """Vectorized posterior means/variances for all symbols at once."""
    d2 = np.abs(x_pic[:, None] - points[None, :]) ** 2
    logw = -d2 / sigma_pic[:, None]
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    mean = w @ points
    var = w @ np.abs(points) ** 2 - np.abs(mean) ** 2
    return mean, np.maximum(var, 0.0)


def bpic_dsc_detect(y: np.ndarray, h: np.ndarray, sigma2: float, c: Constellation,
                    config: DetectorConfig = DetectorConfig(),
                    record_states: bool = False) -> DetectionResult:
    """Iterative Bayesian PIC detector with decision statistics combining.

    Starting from an MMSE estimate, each iteration runs, for every symbol in
    parallel (all reads hit the previous iteration's vector):

    1. PIC: cancel all other symbols and matched-filter the residual.
    2. BSE: posterior mean/variance of the symbol given the PIC observation
       with variance sigma2 / ||h_q||^2.
    3. DSC: combine this iteration's mean with the previous one, weighting by
       inverse residual errors; the combined vector seeds the next PIC pass.

    Stops when the combined estimate moves less than config.zeta in Euclidean
    norm between iterations, or after config.t_max iterations; the hard output
    slices the final combined vector.
    """
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] != y.shape[0]:
        raise ValueError("H must be square and match y")
    if sigma2 <= 0:
        raise ValueError("bpic_dsc_detect requires sigma2 > 0")
    _require_finite_inputs(y, h)

    h_herm = np.ascontiguousarray(h.conj().T)
    col2 = _column_energies(h)
    sigma_pic = sigma2 / col2

    try:
        x_pic = pic_init(y, h, sigma2, config.init_mode)
    except np.linalg.LinAlgError as err:
        raise DetectionNumericalError(0, -1, f"init solve: {err}") from err
    if not np.all(np.isfinite(x_pic)):
        raise DetectionNumericalError(0, int(np.flatnonzero(~np.isfinite(x_pic))[0]), "init")

    x_hat_prev = None
    e_prev = None
    x_dsc_prev = None
    states: list[DetectorState] = []
    t_last = config.t_max

    for t in range(1, config.t_max + 1):
        # PIC, all q in parallel: x_pic_q = [H^H (y - H x)]_q / ||h_q||^2 + x_q
        resid = y - h @ x_pic
        x_pic_t = h_herm @ resid / col2 + x_pic
        # BSE
        x_hat, v_hat = _bse_moments(x_pic_t, sigma_pic, c.points)
        # DSC error through the MRC filter, on the full current estimate
        resid_hat = y - h @ x_hat
        e = np.abs(h_herm @ resid_hat) ** 2 / col2**2
        if t == 1:
            # No previous Bayesian estimate exists; trust the current one.
            rho = np.ones(len(y))
            x_dsc = x_hat.copy()
        else:
            denom = e + e_prev
            with np.errstate(invalid="ignore"):
                rho = np.where(denom > 0, e_prev / denom, 1.0)
            x_dsc = (1.0 - rho) * x_hat_prev + rho * x_hat

        bad = ~np.isfinite(x_dsc)
        if bad.any():
            raise DetectionNumericalError(t, int(np.flatnonzero(bad)[0]))

        if record_states:
            states.append(DetectorState(
                t=t, x_pic=x_pic_t.copy(), sigma_pic=sigma_pic.copy(),
                x_hat=x_hat.copy(), v_hat=v_hat.copy(), x_dsc=x_dsc.copy(),
                x_dsc_prev=None if x_dsc_prev is None else x_dsc_prev.copy(),
                e=e.copy(), e_prev=None if e_prev is None else e_prev.copy(),
                rho=rho.copy()))

        if x_dsc_prev is not None and np.linalg.norm(x_dsc - x_dsc_prev) <= config.zeta:
            t_last = t
            break

        x_pic = x_dsc  # combined estimate seeds the next PIC pass
        x_hat_prev = x_hat
        e_prev = e
        x_dsc_prev = x_dsc

    hard, bits = slice_symbols(c, x_dsc)
    return DetectionResult(hard=hard, bits=bits.reshape(-1), soft_mean=x_dsc,
                           soft_var=v_hat, iterations=t_last, states=states)


def ml_detect(y: np.ndarray, h: np.ndarray, c: Constellation) -> DetectionResult:
    """Exhaustive maximum-likelihood search: argmin over all symbol vectors of
    ||y - H x||^2.  Ties break toward the lexicographically first candidate.

    Guarded to M^n <= 2^20 candidates; raises ValueError beyond that.
    """
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    n = h.shape[1]
    m_order = c.order
    total = m_order**n
    if total > ML_SEARCH_LIMIT:
        raise ValueError(f"ML search space {m_order}^{n} exceeds the "
                         f"{ML_SEARCH_LIMIT} candidate limit")

    place = m_order ** np.arange(n - 1, -1, -1)  # leftmost symbol most significant
    best_cost = np.inf
    best_digits = None
    chunk = 1 << 14
    for start in range(0, total, chunk):
        cand = np.arange(start, min(start + chunk, total))
        digits = (cand[:, None] // place[None, :]) % m_order
        x = c.points[digits]
        cost = np.square(np.abs(y[None, :] - x @ h.T)).sum(axis=1)
        i = int(cost.argmin())
        if cost[i] < best_cost:
            best_cost = float(cost[i])
            best_digits = digits[i]
    hard = c.points[best_digits]
    bits = c.labels[best_digits].reshape(-1)
    return DetectionResult(hard=hard, bits=bits, soft_mean=hard.copy(),
                           soft_var=np.zeros(n), iterations=1)
