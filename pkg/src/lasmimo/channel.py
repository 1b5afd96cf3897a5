"""Rayleigh channel draws, AWGN at the receiver SNR convention, and
pilot + data frame assembly for training-based estimation.

SNR bookkeeping: ``gamma`` is the average received SNR per receive
antenna.  ``es`` is the average energy of the symbols actually leaving
an antenna in one channel use; for an unnormalized n x n CDA code
matrix carrying unit-energy-``ex`` QAM data symbols each transmitted
entry is a sum of n weighted symbols, so ``es = n * ex``.  The noise
variance during the data phase is then ``sigma2 = n_t * es / (gamma *
beta_d)``; the whole frame, pilot part included, uses this single
variance, and the pilot SNR boost is realized through the pilot
amplitude ``mu``.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .stbc import CdaCode, encode

__all__ = ["SnrModel", "Frame", "draw_channel", "transmit", "make_frame", "qam_symbol_energy"]


def qam_symbol_energy(qam_order: int) -> float:
    """Mean energy of a square M-QAM constellation with odd-integer rails."""
    m = int(round(np.sqrt(qam_order)))
    if m * m != qam_order:
        raise ValueError(f"{qam_order} is not a square QAM order")
    levels = 2.0 * np.arange(1, m + 1) - 1.0 - m
    return 2.0 * float(np.mean(levels**2))


@dataclass(frozen=True)
class SnrModel:
    """Received-SNR model for one experiment.

    gamma   : average received SNR per receive antenna, linear
    es      : average per-antenna transmit symbol energy per channel use
    n_t     : transmit antennas
    beta_p, beta_d : pilot / data fractions of gamma (gamma_p = beta_p*gamma)
    n_d     : data code matrices per frame (0 for single-matrix experiments)
    """

    gamma: float
    es: float
    n_t: int
    beta_p: float = 1.0
    beta_d: float = 1.0
    n_d: int = 0

    def __post_init__(self):
        if self.gamma <= 0 or self.es <= 0 or self.n_t < 1:
            raise ValueError("gamma, es must be positive and n_t >= 1")
        if self.beta_p <= 0 or self.beta_d <= 0 or self.n_d < 0:
            raise ValueError("beta_p, beta_d must be positive and n_d >= 0")
        if self.n_d > 0:
            # gamma*(n_d+1) = gamma_p + n_d*gamma_d; tolerate table-rounded betas
            imbalance = abs(self.beta_p + self.n_d * self.beta_d - (self.n_d + 1))
            if imbalance > 1e-3 * (self.n_d + 1):
                raise ValueError(
                    f"power accounting violated: beta_p + n_d*beta_d = "
                    f"{self.beta_p + self.n_d * self.beta_d:.6f} != {self.n_d + 1}")

    @property
    def gamma_p(self) -> float:
        return self.beta_p * self.gamma

    @property
    def gamma_d(self) -> float:
        return self.beta_d * self.gamma

    @property
    def mu(self) -> float:
        """Pilot power: X_P X_P^H = mu I with mu = n_t*es*beta_p/beta_d."""
        return self.n_t * self.es * self.beta_p / self.beta_d

    def noise_var(self, phase: str = "data") -> float:
        """Complex noise variance; a single value for the whole frame."""
        if phase not in ("data", "pilot"):
            raise ValueError(f"unknown phase {phase!r}")
        return self.n_t * self.es / (self.gamma * self.beta_d)


@dataclass(frozen=True)
class Frame:
    """One coherence block: pilot matrix, N_d data code matrices, and the
    received frame under a single channel realization."""

    pilot: np.ndarray                 # (n_t, n_t) = sqrt(mu) I
    data: np.ndarray                  # (n_d, n_t, n_t) transmitted code matrices
    symbols: np.ndarray               # (n_d, k) complex data symbols per matrix
    sent: np.ndarray                  # (n_t, n_t*(1+n_d)) = [pilot, data...]
    received: np.ndarray              # (n_r, n_t*(1+n_d))
    h_c: np.ndarray                   # channel used for the whole frame
    snr: SnrModel = field(repr=False)

    @property
    def n_d(self) -> int:
        return self.data.shape[0]

    @property
    def tau(self) -> int:
        """Pilot duration in channel uses."""
        return self.pilot.shape[0]

    @property
    def coherence_time(self) -> int:
        """Frame length T = (N_d + 1) N_t in channel uses."""
        return self.sent.shape[1]

    def received_pilot(self) -> np.ndarray:
        return self.received[:, : self.tau]

    def received_data(self, i: int) -> np.ndarray:
        t = self.tau
        return self.received[:, t + i * t : t + (i + 1) * t]


def draw_channel(n_r: int, n_t: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. circular complex Gaussian channel, unit variance per entry."""
    if n_r < 1 or n_t < 1:
        raise ValueError("antenna counts must be positive")
    re = rng.standard_normal((n_r, n_t))
    im = rng.standard_normal((n_r, n_t))
    return (re + 1j * im) / np.sqrt(2.0)


def _awgn(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    if sigma2 == 0.0:
        return np.zeros(shape, dtype=complex)
    s = np.sqrt(sigma2 / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def transmit(x_c: np.ndarray, h_c: np.ndarray, snr: SnrModel, phase: str,
             rng: np.random.Generator) -> np.ndarray:
    """One pass through the channel: Y = H_c X + N, N ~ CN(0, sigma2)."""
    x_c = np.asarray(x_c, dtype=complex)
    h_c = np.asarray(h_c, dtype=complex)
    if h_c.shape[1] != x_c.shape[0]:
        raise ValueError(f"channel {h_c.shape} and signal {x_c.shape} disagree")
    sigma2 = snr.noise_var(phase)
    return h_c @ x_c + _awgn((h_c.shape[0], x_c.shape[1]), sigma2, rng)


def make_frame(data_symbol_blocks: Sequence[np.ndarray], code: CdaCode, snr: SnrModel,
               h_c: np.ndarray, rng: np.random.Generator,
               noiseless: bool = False) -> Frame:
    """Assemble and transmit one 1P + N_d D frame over a fixed channel.

    ``data_symbol_blocks`` holds N_d length-k complex symbol vectors;
    the pilot is ``sqrt(mu) I``.  The entire frame sees one channel
    realization and one noise variance.
    """
    blocks = [np.asarray(b, dtype=complex).reshape(-1) for b in data_symbol_blocks]
    if len(blocks) != snr.n_d:
        raise ValueError(f"got {len(blocks)} data blocks but snr.n_d = {snr.n_d}")
    n_t = code.n
    if snr.n_t != n_t:
        raise ValueError(f"snr.n_t = {snr.n_t} but code has n = {n_t}")
    pilot = np.sqrt(snr.mu) * np.eye(n_t, dtype=complex)
    data = np.stack([encode(b, code) for b in blocks]) if blocks else \
        np.zeros((0, n_t, n_t), dtype=complex)
    sent = np.hstack([pilot] + [data[i] for i in range(len(blocks))])
    sigma2 = 0.0 if noiseless else snr.noise_var("data")
    received = h_c @ sent + _awgn((h_c.shape[0], sent.shape[1]), sigma2, rng)
    symbols = np.stack(blocks) if blocks else np.zeros((0, code.k), dtype=complex)
    return Frame(pilot=pilot, data=data, symbols=symbols, sent=sent,
                 received=received, h_c=np.asarray(h_c, dtype=complex), snr=snr)
