"""Training-based channel estimation and capacity evaluators.

One-shot estimation filters the received pilot block with the linear
MMSE estimator; the iterative scheme alternates re-detection of the
data matrices with re-estimation from the full frame (pilot plus
detected data).  The capacity helpers evaluate the perfect-CSIR
ergodic capacity and the training-based lower bound by Monte-Carlo
averaging of log-determinants.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import Frame, SnrModel
from .detector import DetectorConfig, mlas_detect
from .modulation import SignalSet
from .stbc import CdaCode, encode
from .system import build_real_system

__all__ = [
    "ChannelEstimate",
    "mmse_estimate",
    "zf_estimate",
    "iterative_detect_estimate",
    "capacity_bound",
    "ergodic_capacity_csir",
]


@dataclass(frozen=True)
class ChannelEstimate:
    h_est: np.ndarray
    source: str                      # 'one-shot' | 'iterative'
    iterations: int = 0
    residual_stats: dict = field(default_factory=dict)


def mmse_estimate(y_p: np.ndarray, x_p: np.ndarray, sigma2: float) -> ChannelEstimate:
    """Linear MMSE channel estimate from a pilot (or pilot+data) block:
    ``H = Y X^H (sigma2 I + X X^H)^-1``."""
    if sigma2 <= 0:
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    y_p = np.asarray(y_p, dtype=complex)
    x_p = np.asarray(x_p, dtype=complex)
    gram = x_p @ x_p.conj().T
    n_t = gram.shape[0]
    h = np.linalg.solve(gram + sigma2 * np.eye(n_t), x_p @ y_p.conj().T).conj().T
    return ChannelEstimate(h_est=h, source="one-shot")


def zf_estimate(y_p: np.ndarray, x_p: np.ndarray) -> ChannelEstimate:
    """Least-squares estimate ``H = Y X^H (X X^H)^-1`` (no sigma2 needed)."""
    y_p = np.asarray(y_p, dtype=complex)
    x_p = np.asarray(x_p, dtype=complex)
    gram = x_p @ x_p.conj().T
    h = np.linalg.solve(gram, x_p @ y_p.conj().T).conj().T
    return ChannelEstimate(h_est=h, source="one-shot")


def _detect_blocks(frame: Frame, code: CdaCode, signal_set: SignalSet, h_est,
                   gamma_d: float, det_cfg: DetectorConfig):
    """Detect every data matrix of a frame with the given channel estimate."""
    system = build_real_system(h_est, code)
    k = code.k
    detected_real = np.zeros((frame.n_d, 2 * k))
    stats = []
    for i in range(frame.n_d):
        bound = system.bind(frame.received_data(i))
        d, st = mlas_detect(bound, signal_set, gamma=gamma_d, config=det_cfg)
        detected_real[i] = d
        stats.append(st)
    detected_c = detected_real[:, :k] + 1j * detected_real[:, k:]
    return detected_real, detected_c, stats


def iterative_detect_estimate(frame: Frame, code: CdaCode, signal_set: SignalSet,
                              snr: SnrModel, iters: int = 0,
                              det_cfg: DetectorConfig = DetectorConfig()):
    """Detect a frame under estimated CSIR.

    ``iters = 0`` is the one-shot scheme: estimate from the pilot once,
    then detect.  ``iters = m`` re-estimates the channel from the full
    frame (pilot plus re-encoded detected data) and re-detects, m
    times.  Returns ``(ChannelEstimate, detected complex symbols of
    shape (n_d, k), per-round diagnostics)``.
    """
    if iters < 0:
        raise ValueError("iters must be >= 0")
    sigma2 = snr.noise_var("data")
    gamma_d = snr.gamma_d
    est = mmse_estimate(frame.received_pilot(), frame.pilot, sigma2)
    h_est = est.h_est
    diagnostics = []
    detected_real, detected_c, det_stats = _detect_blocks(frame, code, signal_set,
                                                          h_est, gamma_d, det_cfg)
    for round_idx in range(iters):
        x_est = np.hstack([frame.pilot] + [encode(detected_c[i], code)
                                           for i in range(frame.n_d)])
        h_est = mmse_estimate(frame.received, x_est, sigma2).h_est
        residual = float(np.linalg.norm(frame.received - h_est @ x_est))
        diagnostics.append({"round": round_idx + 1, "residual": residual})
        detected_real, detected_c, det_stats = _detect_blocks(frame, code, signal_set,
                                                              h_est, gamma_d, det_cfg)
    source = "iterative" if iters > 0 else "one-shot"
    est = ChannelEstimate(h_est=h_est, source=source, iterations=iters,
                          residual_stats={"rounds": diagnostics})
    diagnostics = list(diagnostics)
    diagnostics.append({"round": "final", "detector_stats": det_stats})
    return est, detected_c, diagnostics


def _batched_logdet2(mats: np.ndarray) -> np.ndarray:
    sign, ld = np.linalg.slogdet(mats)
    return ld / np.log(2.0)


def ergodic_capacity_csir(n_t: int, n_r: int, gamma: float, trials: int,
                          rng: np.random.Generator, batch: int = 256) -> float:
    """Monte-Carlo mean of log2 det(I + gamma/n_t H H^H), bits per channel use."""
    if trials < 1:
        raise ValueError("trials must be positive")
    total = 0.0
    done = 0
    eye = np.eye(n_r)
    while done < trials:
        b = min(batch, trials - done)
        h = (rng.standard_normal((b, n_r, n_t)) +
             1j * rng.standard_normal((b, n_r, n_t))) / np.sqrt(2.0)
        mats = eye + (gamma / n_t) * (h @ h.conj().transpose(0, 2, 1))
        total += float(np.sum(_batched_logdet2(mats)))
        done += b
    return total / trials


def capacity_bound(n_t: int, n_r: int, coherence_time: int, tau: int, gamma: float,
                   beta_p: float, beta_d: float, trials: int,
                   rng: np.random.Generator, batch: int = 256) -> float:
    """Training-based capacity lower bound, Monte-Carlo averaged.

    Simulates the pilot phase (orthogonal pilot of duration tau at
    power fraction beta_p), forms the MMSE channel estimate, and
    averages::

        (T - tau)/T * log2 det(I + c * Hhat Hhat^H / (n_t * var(Hhat)))
        c = gamma^2 beta_d beta_p tau / (n_t (1 + gamma beta_d) + gamma beta_p tau)

    with ``var(Hhat)`` estimated from the same ensemble.  The reported
    values in the source material for this bound at 10 dB do not match
    this expression as printed; see the package README for the
    cross-check protocol.
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials for a stable bound estimate")
    if tau < n_t:
        raise ValueError(f"pilot duration tau={tau} shorter than n_t={n_t}")
    if tau % n_t != 0:
        raise ValueError("tau must be a multiple of n_t (repeated identity pilot)")
    # per-entry pilot measurement SNR; es cancels so set es = 1
    sigma2 = n_t / (gamma * beta_d)
    mu = n_t * beta_p / beta_d
    reps = tau // n_t
    coeff = gamma**2 * beta_d * beta_p * tau / (n_t * (1.0 + gamma * beta_d)
                                                + gamma * beta_p * tau)
    # MMSE estimate with pilot sqrt(mu) [I I ...]: per-entry Wiener filter
    # on the averaged measurement with energy mu*reps
    shrink = mu * reps / (sigma2 + mu * reps)
    h_hats = np.empty((trials, n_r, n_t), dtype=complex)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        h = (rng.standard_normal((b, n_r, n_t)) +
             1j * rng.standard_normal((b, n_r, n_t))) / np.sqrt(2.0)
        noise = np.sqrt(sigma2 / (2.0 * reps)) * (
            rng.standard_normal((b, n_r, n_t)) + 1j * rng.standard_normal((b, n_r, n_t)))
        y_avg = np.sqrt(mu) * h + noise          # pilot repetitions pre-averaged
        h_hats[done:done + b] = shrink / np.sqrt(mu) * y_avg
        done += b
    var_hat = float(np.mean(np.abs(h_hats) ** 2))
    gram = h_hats.conj().transpose(0, 2, 1) @ h_hats
    mats = np.eye(n_t) + (coeff / (n_t * var_hat)) * gram
    mean_logdet = float(np.mean(_batched_logdet2(mats)))
    return (coherence_time - tau) / coherence_time * mean_logdet
