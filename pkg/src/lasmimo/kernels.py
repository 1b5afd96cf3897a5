"""Hot search kernels of the likelihood-ascent detector.

Two implementations live side by side: numba ``@njit`` loops and a
vectorized pure-numpy twin.  The environment variable ``LASMIMO_NUMBA``
selects the active path (set it to ``0``/``false``/``off`` to force
numpy; default is numba when importable).  Both paths use identical
elementwise arithmetic and first-index tie-breaking, so they produce
bit-identical descent trajectories; ``benchmarks/kernel_bench.py``
compares their speed.
"""

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "descend_one_symbol",
    "best_pair_update",
    "descend_one_symbol_numpy",
    "best_pair_update_numpy",
]

_flag = os.environ.get("LASMIMO_NUMBA", "1").strip().lower()
NUMBA_ENABLED = _flag not in ("0", "false", "off", "no")
if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def _descend_kernel(d, z, g, a, max_level, step_idx, step_val):
    """Greedy 1-symbol descent to a local minimum.  Mutates d and z,
    records applied steps, returns (iterations, total cost change)."""
    n = d.shape[0]
    cap = step_idx.shape[0]
    iters = 0
    dcost = 0.0
    while iters < cap:
        best = -1
        best_f = 0.0
        best_step = 0.0
        for p in range(n):
            zp = z[p]
            if zp == 0.0:
                continue
            azp = abs(zp)
            s = 1.0 if zp > 0.0 else -1.0
            l = 2.0 * np.rint(azp / (2.0 * a[p]))
            bound = max_level - s * d[p]
            if l > bound:
                l = bound
            if l <= 0.0:
                continue
            f = l * l * a[p] - 2.0 * l * azp
            if f < best_f:
                best_f = f
                best = p
                best_step = l * s
        if best < 0:
            break
        d[best] += best_step
        for i in range(n):
            z[i] -= best_step * g[i, best]
        step_idx[iters] = best
        step_val[iters] = best_step
        dcost += best_f
        iters += 1
    return iters, dcost


def _descend_numpy(d, z, g, a, max_level, step_idx, step_val):
    n = d.shape[0]
    cap = step_idx.shape[0]
    iters = 0
    dcost = 0.0
    while iters < cap:
        az = np.abs(z)
        s = np.sign(z)
        l = 2.0 * np.rint(az / (2.0 * a))
        np.minimum(l, max_level - s * d, out=l)
        f = l * l * a - 2.0 * l * az
        f[(l <= 0.0) | (s == 0.0)] = np.inf
        p = int(np.argmin(f))
        if not (f[p] < 0.0):
            break
        step = l[p] * s[p]
        d[p] += step
        z -= step * g[:, p]
        step_idx[iters] = p
        step_val[iters] = step
        dcost += f[p]
        iters += 1
    return iters, dcost


@njit(cache=True)
def _pair_scan_kernel(d, z, g, a, max_level):
    """Best 2-symbol round-and-clip update over all index pairs.

    Returns (i, j, step_i, step_j, delta_cost); i = -1 when no pair
    yields a negative cost change."""
    n = d.shape[0]
    best_dc = 0.0
    bi = -1
    bj = -1
    bli = 0.0
    blj = 0.0
    for i in range(n):
        fii = a[i]
        zi = z[i]
        lo_i = -max_level - d[i]
        hi_i = max_level - d[i]
        for j in range(i + 1, n):
            fjj = a[j]
            fij = g[i, j]
            det = fii * fjj - fij * fij
            if det <= 0.0:
                continue
            zj = z[j]
            li = 2.0 * np.rint(0.5 * (fjj * zi - fij * zj) / det)
            lj = 2.0 * np.rint(0.5 * (fii * zj - fij * zi) / det)
            if li > hi_i:
                li = hi_i
            elif li < lo_i:
                li = lo_i
            if lj > max_level - d[j]:
                lj = max_level - d[j]
            elif lj < -max_level - d[j]:
                lj = -max_level - d[j]
            dc = li * li * fii + lj * lj * fjj + 2.0 * li * lj * fij \
                - 2.0 * (li * zi + lj * zj)
            if dc < best_dc:
                best_dc = dc
                bi = i
                bj = j
                bli = li
                blj = lj
    return bi, bj, bli, blj, best_dc


def _pair_scan_numpy(d, z, g, a, max_level):
    n = d.shape[0]
    iu, ju = np.triu_indices(n, k=1)   # lexicographic pair order
    fii = a[iu]
    fjj = a[ju]
    fij = g[iu, ju]
    det = fii * fjj - fij * fij
    zi = z[iu]
    zj = z[ju]
    safe = np.where(det > 0.0, det, 1.0)
    li = 2.0 * np.rint(0.5 * (fjj * zi - fij * zj) / safe)
    lj = 2.0 * np.rint(0.5 * (fii * zj - fij * zi) / safe)
    np.clip(li, -max_level - d[iu], max_level - d[iu], out=li)
    np.clip(lj, -max_level - d[ju], max_level - d[ju], out=lj)
    dc = li * li * fii + lj * lj * fjj + 2.0 * li * lj * fij \
        - 2.0 * (li * zi + lj * zj)
    dc[det <= 0.0] = np.inf
    b = int(np.argmin(dc))
    if not (dc[b] < 0.0):
        return -1, -1, 0.0, 0.0, 0.0
    return int(iu[b]), int(ju[b]), float(li[b]), float(lj[b]), float(dc[b])


def descend_one_symbol(d, z, g, a, max_level, step_idx, step_val):
    if NUMBA_ENABLED:
        return _descend_kernel(d, z, g, a, max_level, step_idx, step_val)
    return _descend_numpy(d, z, g, a, max_level, step_idx, step_val)


def best_pair_update(d, z, g, a, max_level):
    if NUMBA_ENABLED:
        return _pair_scan_kernel(d, z, g, a, max_level)
    return _pair_scan_numpy(d, z, g, a, max_level)


# explicit handles for the benchmark / equivalence tests
descend_one_symbol_numpy = _descend_numpy
best_pair_update_numpy = _pair_scan_numpy
