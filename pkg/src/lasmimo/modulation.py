"""PAM/QAM signal sets with Gray bit labeling.

A square M-QAM alphabet is treated throughout as two independent
sqrt(M)-PAM rails in quadrature; every routine here works on one PAM
rail.  Levels of an M-PAM set are the odd integers ``2m - 1 - M`` for
``m = 1..M``, so adjacent levels are 2 apart and the set is symmetric
about zero.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SignalSet",
    "pam_alphabet",
    "bits_to_symbols",
    "symbols_to_bits",
]


def _gray_encode(m: int) -> int:
    return m ^ (m >> 1)


@dataclass(frozen=True)
class SignalSet:
    """An M-PAM alphabet with a Gray bit labeling.

    Attributes
    ----------
    levels : ascending array of the M real amplitudes
    bits_per_symbol : log2(M)
    labels : (M, bits_per_symbol) 0/1 array; ``labels[m]`` is the bit
        vector (MSB first) of ``levels[m]``
    """

    levels: np.ndarray
    bits_per_symbol: int
    labels: np.ndarray
    # gray_lut[g] = level index whose Gray-coded label equals g
    gray_lut: np.ndarray = field(repr=False)
    # forced_plus[m, j] / forced_minus[m, j]: the level obtained from
    # levels[m] by forcing bit j to 1 / 0 while keeping the other bits.
    forced_plus: np.ndarray = field(repr=False)
    forced_minus: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        return len(self.levels)

    @property
    def max_level(self) -> float:
        return float(self.levels[-1])

    @property
    def mean_energy(self) -> float:
        return float(np.mean(self.levels**2))

    def label_index(self, bits: np.ndarray) -> np.ndarray:
        """Map rows of bit vectors (MSB first) to level indices."""
        k = self.bits_per_symbol
        weights = 1 << np.arange(k - 1, -1, -1)
        g = np.asarray(bits, dtype=np.int64).reshape(-1, k) @ weights
        return self.gray_lut[g]

    def indices_of(self, values: np.ndarray) -> np.ndarray:
        """Exact level lookup; raises if a value is not in the alphabet."""
        idx = np.searchsorted(self.levels, values)
        idx = np.clip(idx, 0, self.order - 1)
        if not np.all(self.levels[idx] == values):
            raise ValueError("value outside signal set")
        return idx

    def contains(self, values: np.ndarray) -> bool:
        v = np.asarray(values)
        idx = np.clip(np.searchsorted(self.levels, v), 0, self.order - 1)
        return bool(np.all(self.levels[idx] == v))

    def quantize(self, values: np.ndarray) -> np.ndarray:
        """Nearest alphabet level; ties at midpoints go to the smaller level."""
        m = self.order
        idx = np.ceil((np.asarray(values, dtype=float) + m) / 2.0) - 1.0
        idx = np.clip(idx, 0, m - 1).astype(np.int64)
        return self.levels[idx]


def pam_alphabet(order: int) -> SignalSet:
    """Build the M-PAM signal set {2m-1-M : m=1..M} with Gray labeling.

    ``order`` must be a power of two, at least 2.  The labeling is the
    binary-reflected Gray code over the level index, so adjacent levels
    differ in exactly one bit.
    """
    m = int(order)
    if m < 2 or (m & (m - 1)) != 0:
        raise ValueError(f"invalid PAM order {order}: must be a power of two >= 2")
    levels = 2.0 * np.arange(1, m + 1) - 1.0 - m
    k = m.bit_length() - 1
    labels = np.zeros((m, k), dtype=np.int8)
    lut = np.zeros(m, dtype=np.int64)
    for i in range(m):
        g = _gray_encode(i)
        lut[g] = i
        for j in range(k):
            labels[i, j] = (g >> (k - 1 - j)) & 1

    # level reached from levels[i] when bit j is forced to 1 (plus) or 0 (minus)
    plus = np.zeros((m, k))
    minus = np.zeros((m, k))
    weights = 1 << np.arange(k - 1, -1, -1)
    for i in range(m):
        for j in range(k):
            b = labels[i].astype(np.int64).copy()
            b[j] = 1
            plus[i, j] = levels[lut[int(b @ weights)]]
            b[j] = 0
            minus[i, j] = levels[lut[int(b @ weights)]]

    for arr in (levels, labels, lut, plus, minus):
        arr.setflags(write=False)
    return SignalSet(levels=levels, bits_per_symbol=k, labels=labels,
                     gray_lut=lut, forced_plus=plus, forced_minus=minus)


def bits_to_symbols(bits: np.ndarray, signal_set: SignalSet) -> np.ndarray:
    """Map a flat 0/1 array to PAM levels, ``bits_per_symbol`` bits each."""
    bits = np.asarray(bits)
    k = signal_set.bits_per_symbol
    if bits.size % k != 0:
        raise ValueError(f"bit count {bits.size} not divisible by {k}")
    idx = signal_set.label_index(bits.reshape(-1, k))
    return signal_set.levels[idx]


def symbols_to_bits(symbols: np.ndarray, signal_set: SignalSet) -> np.ndarray:
    """Inverse of :func:`bits_to_symbols`; symbols must be in the alphabet."""
    idx = signal_set.indices_of(np.asarray(symbols))
    return signal_set.labels[idx].reshape(-1).astype(np.int8)
