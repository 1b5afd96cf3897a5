"""Multistage likelihood-ascent-search detection on the real lattice model.

A detection run starts from a filtered-and-quantized initial vector and
then performs greedy cost descent: sub-stage 1 applies the best single
symbol step (closed-form step size, clipped to the alphabet) until no
improving step exists; sub-stages K = 2..M try one simultaneous
K-symbol step obtained by rounding the unconstrained minimizer of the
cost-difference quadratic and clipping it into the alphabet.  Any
success opens a new search stage; the run terminates when every
sub-stage fails.  The cost ``C(d) = d^T G d - 2 y^T H d`` strictly
decreases across accepted updates, which bounds the search on the
finite lattice.
"""

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernels import best_pair_update, descend_one_symbol
from .modulation import SignalSet
from .stbc import va_adjoint_multiply
from .system import RealSystem

__all__ = [
    "SearchBudgetError",
    "DetectorConfig",
    "InitialSolution",
    "LasState",
    "DetectionStats",
    "initial_solution",
    "make_state",
    "one_symbol_stage",
    "k_symbol_substage",
    "mlas_detect",
    "soft_outputs",
    "ml_oracle",
    "local_minimum_check",
]

_DESCENT_CHUNK = 4096


class SearchBudgetError(ValueError):
    """Raised when an exhaustive search would exceed its candidate budget."""


@dataclass(frozen=True)
class DetectorConfig:
    filter_kind: str = "mmse"     # 'mf' | 'zf' | 'mmse'
    m_max: int = 1
    use_fft: Optional[bool] = None  # default: fast path iff the code is ILL-only
    check: bool = True            # verify gradient bookkeeping after the run


@dataclass(frozen=True)
class InitialSolution:
    d: np.ndarray
    filter_kind: str
    used_mmse_fallback: bool = False


@dataclass
class LasState:
    """Mutable working state of one detection run."""

    d: np.ndarray                    # current lattice vector
    z: np.ndarray                    # H^T (y - H d), updated incrementally
    cost: float
    stage_count: int = 0
    substage_index: int = 0
    flips_applied: list = field(default_factory=list)  # [(indices, steps), ...]
    cost_trace: list = field(default_factory=list)
    singular_skips: int = 0

    @property
    def total_flips(self) -> int:
        return sum(len(ix) for ix, _ in self.flips_applied)


@dataclass(frozen=True)
class DetectionStats:
    stages: int
    one_symbol_iterations: int
    k_successes: dict
    flips: int
    initial_cost: float
    final_cost: float
    used_mmse_fallback: bool = False


def _complex_filter_solution(system: RealSystem, reg: float, use_fft: bool) -> np.ndarray:
    """Per-slot equalizer lifted through the code's adjoint column matrix.

    Applies ``(H_c^H H_c + reg I)^-1 H_c^H`` to every time-slot block of
    the received matrix and maps the result to symbol coordinates with
    ``V_a^H / n``; exact ZF/MMSE for the full lifted system.
    """
    h_c = system.h_c
    n_t, p = system.n_t, system.p
    gram = h_c.conj().T @ h_c
    eq = np.linalg.solve(gram + reg * np.eye(n_t), h_c.conj().T)
    y_mat = system.y_c.reshape(system.n_r, p, order="F")
    w = (eq @ y_mat).reshape(n_t * p, order="F")
    x_hat = va_adjoint_multiply(w, system.code, fast=use_fft) / n_t
    return np.concatenate([x_hat.real, x_hat.imag])


def initial_solution(system: RealSystem, signal_set: SignalSet, gamma: float = None,
                     filter_kind: str = "mmse", use_fft: Optional[bool] = None) -> InitialSolution:
    """Initial filter output, quantized componentwise onto the lattice.

    'mf' is the matched filter normalized by the column energies; 'zf'
    inverts the channel exactly (falling back to a tiny-regularizer
    MMSE when singular, flagged in the result); 'mmse' regularizes with
    ``n_t / gamma``, the data-symbol Wiener weight under the receive-SNR
    convention, so it converges to ZF as gamma grows.
    """
    if system.hty is None:
        raise ValueError("no observation bound; call system.bind() first")
    if use_fft is None:
        use_fft = system.code.is_ill_only
    fallback = False
    kind = filter_kind.lower()
    if kind == "mf":
        raw = system.hty / np.diag(system.g)
    elif kind == "zf":
        try:
            raw = _complex_filter_solution(system, 0.0, use_fft)
            if not np.all(np.isfinite(raw)):
                raise np.linalg.LinAlgError("non-finite ZF output")
        except np.linalg.LinAlgError:
            fallback = True
            tiny = 1e-12 * float(np.trace(system.h_c.conj().T @ system.h_c).real)
            raw = _complex_filter_solution(system, tiny, use_fft)
    elif kind == "mmse":
        if gamma is None or gamma <= 0:
            raise ValueError("MMSE initial filter requires gamma > 0")
        raw = _complex_filter_solution(system, system.n_t / gamma, use_fft)
    else:
        raise ValueError(f"unknown initial filter {filter_kind!r}")
    d0 = signal_set.quantize(raw)
    return InitialSolution(d=d0, filter_kind=kind, used_mmse_fallback=fallback)


def make_state(system: RealSystem, d0: np.ndarray) -> LasState:
    d = np.array(d0, dtype=float)
    z = system.gradient(d)
    return LasState(d=d, z=z, cost=system.cost(d))


def one_symbol_stage(state: LasState, system: RealSystem,
                     signal_set: SignalSet) -> LasState:
    """Run single-symbol updates until no step lowers the cost."""
    a = np.ascontiguousarray(np.diag(system.g))
    max_level = signal_set.max_level
    idx_buf = np.empty(_DESCENT_CHUNK, dtype=np.int64)
    val_buf = np.empty(_DESCENT_CHUNK, dtype=np.float64)
    while True:
        iters, dcost = descend_one_symbol(state.d, state.z, system.g, a,
                                          max_level, idx_buf, val_buf)
        state.cost += dcost
        for i in range(iters):
            state.flips_applied.append(((int(idx_buf[i]),), (float(val_buf[i]),)))
        if iters < _DESCENT_CHUNK:
            break
    state.substage_index = 1
    return state


def _apply_update(state: LasState, system: RealSystem, indices, steps, dc):
    idx = np.asarray(indices, dtype=np.int64)
    lam = np.asarray(steps, dtype=float)
    state.d[idx] += lam
    state.z -= system.g[:, idx] @ lam
    state.cost += dc
    state.flips_applied.append((tuple(int(i) for i in idx),
                                tuple(float(v) for v in lam)))


def k_symbol_substage(state: LasState, system: RealSystem, k_update: int,
                      signal_set: SignalSet, chunk: int = 32768):
    """Try the best simultaneous K-symbol round-and-clip update.

    Enumerates every index set of size K, solves the K x K normal
    equations for the unconstrained step, rounds it onto the even
    lattice, clips it into the alphabet, and applies the set with the
    most negative cost change if one is negative.  Returns
    ``(state, success)``.
    """
    n2 = state.d.shape[0]
    if not 1 <= k_update <= n2:
        raise ValueError(f"K must be in 1..{n2}, got {k_update}")
    max_level = signal_set.max_level
    a = np.diag(system.g)

    if k_update == 2:
        i, j, li, lj, dc = best_pair_update(state.d, state.z, system.g,
                                            np.ascontiguousarray(a), max_level)
        if i < 0:
            state.substage_index = 2
            return state, False
        _apply_update(state, system, (i, j), (li, lj), dc)
        state.substage_index = 2
        return state, True

    best_dc = 0.0
    best_u = None
    best_lam = None
    combos = itertools.combinations(range(n2), k_update)
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            break
        u = np.asarray(block, dtype=np.int64)              # (m, K)
        f = system.g[u[:, :, None], u[:, None, :]]         # (m, K, K)
        zu = state.z[u]
        if k_update == 1:
            sol = zu / f[:, :, 0]
            bad = np.zeros(len(u), dtype=bool)
        else:
            dets = np.linalg.det(f)
            scale = np.prod(f[:, np.arange(k_update), np.arange(k_update)], axis=1)
            bad = ~(np.abs(dets) > 1e-12 * np.maximum(scale, 1e-300))
            f_safe = f.copy()
            f_safe[bad] = np.eye(k_update)
            sol = np.linalg.solve(f_safe, zu[:, :, None])[:, :, 0]
        lam = 2.0 * np.rint(0.5 * sol)
        np.clip(lam, -max_level - state.d[u], max_level - state.d[u], out=lam)
        dc = np.einsum("mi,mij,mj->m", lam, f, lam) - 2.0 * np.einsum("mi,mi->m", lam, zu)
        dc[bad] = np.inf
        state.singular_skips += int(bad.sum())
        b = int(np.argmin(dc))
        if dc[b] < best_dc:
            best_dc = float(dc[b])
            best_u = tuple(int(x) for x in u[b])
            best_lam = lam[b].copy()
    state.substage_index = k_update
    if best_u is None:
        return state, False
    _apply_update(state, system, best_u, best_lam, best_dc)
    return state, True


def _check_gradient(state: LasState, system: RealSystem) -> None:
    z_true = system.gradient(state.d)
    denom = max(float(np.linalg.norm(z_true)), 1e-30)
    drift = float(np.linalg.norm(state.z - z_true)) / denom
    if drift > 1e-8:
        raise AssertionError(f"incremental gradient drifted by {drift:.3e}")


def mlas_detect(system: RealSystem, signal_set: SignalSet, gamma: float = None,
                config: DetectorConfig = DetectorConfig(), return_state: bool = False):
    """Full multistage detection; returns (symbol vector, stats).

    Each search stage runs the 1-symbol sub-stage to a local minimum
    and then tries K = 2..m_max updates in order; the first success
    starts the next stage, and the run ends when all fail.  With
    ``return_state`` the final working state (including the flip audit
    log) is returned as a third element.
    """
    if config.m_max < 1:
        raise ValueError("m_max must be >= 1")
    init = initial_solution(system, signal_set, gamma=gamma,
                            filter_kind=config.filter_kind, use_fft=config.use_fft)
    state = make_state(system, init.d)
    initial_cost = state.cost
    k_successes = {k: 0 for k in range(2, config.m_max + 1)}
    one_symbol_iters = 0
    while True:
        state.stage_count += 1
        before = len(state.flips_applied)
        one_symbol_stage(state, system, signal_set)
        one_symbol_iters += len(state.flips_applied) - before
        state.cost_trace.append(state.cost)
        success = False
        for k_update in range(2, config.m_max + 1):
            state, success = k_symbol_substage(state, system, k_update, signal_set)
            if success:
                k_successes[k_update] += 1
                state.cost_trace.append(state.cost)
                break
        if config.check:
            _check_gradient(state, system)
        if not success:
            break
    if config.check and state.total_flips and not state.cost < initial_cost:
        raise AssertionError("accepted updates did not lower the cost")
    stats = DetectionStats(stages=state.stage_count,
                           one_symbol_iterations=one_symbol_iters,
                           k_successes=k_successes,
                           flips=state.total_flips,
                           initial_cost=initial_cost,
                           final_cost=state.cost,
                           used_mmse_fallback=init.used_mmse_fallback)
    if return_state:
        return state.d.copy(), stats, state
    return state.d.copy(), stats


def soft_outputs(d: np.ndarray, z: np.ndarray, g: np.ndarray,
                 signal_set: SignalSet) -> np.ndarray:
    """Per-bit soft values for a detected vector, shape (2k, bits_per_symbol).

    For each entry the two vectors with bit j forced to 1 and to 0
    differ only in that entry by ``lam``; the squared-residual
    difference normalized by the column energy reduces to
    ``+-lam^2 - 2 lam z_i / G_ii`` depending on the hard bit, and is
    finally scaled by ``(lam/2)^-2``.  Positive values favor bit 1.
    """
    idx = signal_set.indices_of(np.asarray(d))
    lam = signal_set.forced_minus[idx] - signal_set.forced_plus[idx]  # (2k, K)
    hard = signal_set.labels[idx]
    ratio = (z / np.diag(g))[:, None]
    soft = np.where(hard == 1, lam * lam - 2.0 * lam * ratio,
                    -lam * lam - 2.0 * lam * ratio)
    return soft / (0.5 * lam) ** 2


def ml_oracle(y: np.ndarray, h: np.ndarray, signal_set: SignalSet,
              max_candidates: int = 1 << 20, chunk: int = 8192) -> np.ndarray:
    """Exact ML solution by exhaustive enumeration of the lattice.

    Test-scale tool: refuses when the candidate count exceeds
    ``max_candidates``.
    """
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    n2 = h.shape[1]
    m = signal_set.order
    total = m**n2
    if total > max_candidates:
        raise SearchBudgetError(
            f"{m}^{n2} = {total} candidates exceed the budget {max_candidates}")
    g = h.T @ h
    hty = h.T @ y
    levels = signal_set.levels
    best_cost = np.inf
    best = None
    digits = np.arange(m)
    for start in range(0, total, chunk):
        count = min(chunk, total - start)
        ranks = start + np.arange(count)
        idx = np.empty((count, n2), dtype=np.int64)
        for pos in range(n2 - 1, -1, -1):
            idx[:, pos] = digits[ranks % m]
            ranks = ranks // m
        cand = levels[idx]
        costs = np.einsum("md,de,me->m", cand, g, cand) - 2.0 * (cand @ hty)
        b = int(np.argmin(costs))
        if costs[b] < best_cost:
            best_cost = float(costs[b])
            best = cand[b].copy()
    return best


def local_minimum_check(d: np.ndarray, system: RealSystem, k_max: int,
                        signal_set: SignalSet, budget: int = 1 << 22,
                        tol: float = 1e-9) -> bool:
    """Exact test that no update of k_max or fewer symbols lowers the cost.

    Enumerates every index set of size 1..k_max and every combination
    of nonzero in-alphabet steps at those indices; True iff all cost
    changes are >= -tol.
    """
    d = np.asarray(d, dtype=float)
    n2 = d.shape[0]
    m = signal_set.order
    work = sum(_n_choose_k(n2, kk) * (m - 1) ** kk for kk in range(1, k_max + 1))
    if work > budget:
        raise SearchBudgetError(f"{work} candidate updates exceed the budget {budget}")
    z = system.gradient(d)
    g = system.g
    # steps[i] = levels - d[i]; the zero entry marks the current level
    steps = signal_set.levels[None, :] - d[:, None]
    for kk in range(1, k_max + 1):
        sel = np.array(list(itertools.product(range(m), repeat=kk)), dtype=np.int64)
        for u in itertools.combinations(range(n2), kk):
            lam = steps[list(u)][np.arange(kk), sel]          # (m^kk, kk)
            valid = np.all(lam != 0.0, axis=1)
            if not np.any(valid):
                continue
            lam = lam[valid]
            f = g[np.ix_(u, u)]
            dc = np.einsum("mi,ij,mj->m", lam, f, lam) - 2.0 * (lam @ z[list(u)])
            if np.any(dc < -tol):
                return False
    return True


def _n_choose_k(n: int, k: int) -> int:
    out = 1
    for i in range(k):
        out = out * (n - i) // (i + 1)
    return out
