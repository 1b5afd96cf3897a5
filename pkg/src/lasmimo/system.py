"""Equivalent real-valued linear model of the complex STBC MIMO channel.

Vectorizing ``Y = H_c X + N`` over one code matrix and splitting real
and imaginary parts turns detection into a real lattice problem
``y = H x + n`` with ``x`` holding the in-phase PAM rails in entries
``0..k-1`` and the quadrature rails in ``k..2k-1``.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .stbc import CdaCode, weight_matrices

__all__ = ["RealSystem", "build_real_system"]


@dataclass(frozen=True)
class RealSystem:
    """Real-valued model y = H x + n with cached G = H^T H.

    ``H`` is (2*N_r*p, 2k) and ``G`` (2k, 2k).  The observation ``y``
    (and its precomputed correlation ``hty = H^T y``) is bound per
    received code matrix via :meth:`bind`; everything else is shared,
    read-only, and reusable across observations of the same channel.
    """

    h: np.ndarray
    g: np.ndarray
    n_t: int
    n_r: int
    p: int
    k: int
    h_c: np.ndarray            # the complex channel the model was built from
    code: CdaCode
    y: Optional[np.ndarray] = None
    y_c: Optional[np.ndarray] = None
    hty: Optional[np.ndarray] = None

    @property
    def dims(self):
        return (self.n_t, self.n_r, self.p, self.k)

    def bind(self, y_c: np.ndarray) -> "RealSystem":
        """Attach a received complex code matrix (or its vec) as observation."""
        y_c = np.asarray(y_c, dtype=complex)
        if y_c.ndim == 2:
            if y_c.shape != (self.n_r, self.p):
                raise ValueError(f"received matrix shape {y_c.shape} != ({self.n_r}, {self.p})")
            y_c = y_c.reshape(self.n_r * self.p, order="F")
        elif y_c.shape != (self.n_r * self.p,):
            raise ValueError(f"received vector length {y_c.shape} != {self.n_r * self.p}")
        y = np.concatenate([y_c.real, y_c.imag])
        hty = self.h.T @ y
        for arr in (y, hty):
            arr.setflags(write=False)
        return replace(self, y=y, y_c=y_c, hty=hty)

    def cost(self, d: np.ndarray) -> float:
        """ML cost d^T G d - 2 y^T H d of a candidate vector."""
        if self.hty is None:
            raise ValueError("no observation bound; call bind() first")
        return float(d @ (self.g @ d) - 2.0 * (self.hty @ d))

    def gradient(self, d: np.ndarray) -> np.ndarray:
        """z = H^T (y - H d), recomputed from scratch."""
        if self.hty is None:
            raise ValueError("no observation bound; call bind() first")
        return self.hty - self.g @ d


def build_real_system(h_c: np.ndarray, code: CdaCode) -> RealSystem:
    """Lift a complex channel matrix to the real-valued lattice model.

    Column ``i`` of the intermediate complex matrix equals
    ``(I_p (x) H_c) vec(A^(i))`` for weight matrix ``A^(i)``; the real
    model stacks its real and imaginary parts as
    ``[[H_I, -H_Q], [H_Q, H_I]]``.
    """
    h_c = np.asarray(h_c, dtype=complex)
    if h_c.ndim != 2:
        raise ValueError(f"channel matrix must be 2-D, got shape {h_c.shape}")
    n_r, n_t = h_c.shape
    if n_t != code.n:
        raise ValueError(f"channel has {n_t} transmit antennas but code expects {code.n}")
    if not np.all(np.isfinite(h_c)):
        raise ValueError("channel matrix contains non-finite entries")
    p = code.n
    k = code.k
    mats = weight_matrices(code).matrices          # (k, n, n)
    prod = np.einsum("rt,itj->irj", h_c, mats)     # (k, N_r, p): H_c @ A^(i)
    h_tilde = prod.transpose(2, 1, 0).reshape(n_r * p, k)  # vec by column stacking
    top = np.hstack([h_tilde.real, -h_tilde.imag])
    bot = np.hstack([h_tilde.imag, h_tilde.real])
    h = np.vstack([top, bot])
    g = h.T @ h
    for arr in (h, g):
        arr.setflags(write=False)
    return RealSystem(h=h, g=g, n_t=n_t, n_r=n_r, p=p, k=k, h_c=h_c, code=code)
