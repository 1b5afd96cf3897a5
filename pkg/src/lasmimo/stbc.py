"""Full-rate circulant space-time block codes from cyclic division algebras.

An ``n x n`` code matrix carries ``k = n**2`` complex data symbols
``x[u, v]`` (0-based).  Entry ``(r, j)`` of the code matrix is

    delta**[r < j] * sum_v x[(r - j) mod n, v] * omega**(j*v) * t**v

with ``omega = exp(2j*pi/n)``.  ``delta`` and ``t`` are unit-modulus
scalars; ``delta = exp(sqrt(5)j), t = exp(1j)`` gives the
full-diversity information-lossless variant, ``delta = t = 1`` the
information-lossless-only variant whose adjoint column matrix is
block-DFT under a row permutation.

Data symbols are indexed linearly as ``i = u + n*v``.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "CdaCode",
    "WeightMatrixSet",
    "encode",
    "weight_matrices",
    "va_adjoint_multiply",
]

FD_ILL_DELTA = complex(np.exp(1j * math.sqrt(5.0)))
FD_ILL_T = complex(np.exp(1j))


@dataclass(frozen=True)
class CdaCode:
    """Code parameters: antenna count n (= slot count) and the two unit
    scalars delta, t."""

    n: int
    delta: complex = 1.0 + 0.0j
    t: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"antenna count must be positive, got {self.n}")
        for name, val in (("delta", self.delta), ("t", self.t)):
            if abs(abs(complex(val)) - 1.0) > 1e-12:
                raise ValueError(f"{name} must be unit modulus, got |{name}|={abs(val)}")

    @property
    def k(self) -> int:
        """Complex data symbols per code matrix."""
        return self.n * self.n

    @property
    def is_ill_only(self) -> bool:
        return self.delta == 1.0 + 0.0j and self.t == 1.0 + 0.0j

    @property
    def variant(self) -> str:
        if self.is_ill_only:
            return "ill-only"
        if self.delta == FD_ILL_DELTA and self.t == FD_ILL_T:
            return "fd-ill"
        return "custom"

    @classmethod
    def ill_only(cls, n: int) -> "CdaCode":
        return cls(n=n)

    @classmethod
    def fd_ill(cls, n: int) -> "CdaCode":
        return cls(n=n, delta=FD_ILL_DELTA, t=FD_ILL_T)


@dataclass(frozen=True)
class WeightMatrixSet:
    """The k weight matrices of a code plus their vectorized column matrix.

    ``matrices[i]`` is the n x n weight of symbol ``i = u + n*v``;
    ``va`` has ``vec(matrices[i])`` (column stacking) as column i and
    satisfies ``va.conj().T @ va = n * I``.
    """

    matrices: np.ndarray  # (k, n, n) complex
    va: np.ndarray        # (k, k) complex

    @property
    def k(self) -> int:
        return self.va.shape[0]


@lru_cache(maxsize=16)
def _weights_cached(n: int, delta: complex, t: complex) -> WeightMatrixSet:
    om = np.exp(2j * np.pi / n)
    mats = np.zeros((n * n, n, n), dtype=complex)
    for v in range(n):
        tv = (om ** (np.arange(n) * v)) * t**v   # column weights omega^(j v) t^v
        for u in range(n):
            i = u + n * v
            for j in range(n):
                r = (u + j) % n
                mats[i, r, j] = tv[j] * (delta if r < j else 1.0)
    va = mats.transpose(0, 2, 1).reshape(n * n, n * n).T  # vec = column stacking
    mats.setflags(write=False)
    va.setflags(write=False)
    return WeightMatrixSet(matrices=mats, va=va)


def weight_matrices(code: CdaCode) -> WeightMatrixSet:
    """Weight matrices A^(i) such that encode(x) = sum_i x_i A^(i)."""
    return _weights_cached(code.n, complex(code.delta), complex(code.t))


def encode(symbols: np.ndarray, code: CdaCode) -> np.ndarray:
    """Encode k complex data symbols into the n x n code matrix.

    ``symbols`` may be a flat length-k vector in ``i = u + n*v`` order
    or an (n, n) array indexed ``[u, v]``.
    """
    x = np.asarray(symbols, dtype=complex)
    n = code.n
    if x.shape == (n, n):
        x = x.reshape(n * n, order="F")  # i = u + n*v
    elif x.shape != (n * n,):
        raise ValueError(f"expected {n * n} symbols for an n={n} code, got shape {x.shape}")
    mats = weight_matrices(code).matrices
    return np.tensordot(x, mats, axes=(0, 0))


def va_adjoint_multiply(vec: np.ndarray, code: CdaCode, fast: bool = False) -> np.ndarray:
    """Compute ``va.conj().T @ vec`` for the code's column matrix.

    With ``fast=True`` (ILL-only codes) the product is evaluated as n
    independent n-point FFTs of permuted entries instead of a dense
    matrix multiply.
    """
    v = np.asarray(vec, dtype=complex)
    n = code.n
    k = n * n
    if v.shape[0] != k:
        raise ValueError(f"expected a length-{k} vector, got shape {v.shape}")
    if not fast:
        return weight_matrices(code).va.conj().T @ v
    if not code.is_ill_only:
        raise ValueError("fast path requires an ILL-only code (delta = t = 1)")
    u = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    gathered = v[j * n + (u + j) % n, ...]          # [u, j, ...]
    spectra = np.fft.fft(gathered, axis=1)          # [u, v, ...]
    return spectra.reshape((k,) + v.shape[1:], order="F")
