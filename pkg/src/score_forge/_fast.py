"""Numba inner loops for kernel-density queries.

The public estimator API lives in ``estimator``; this module only holds the
compiled batch kernels. Accumulation order inside each query is fixed
(cells in lexicographic offset order, points in sorted storage order), so
results are bitwise reproducible and independent of the numba thread count.

Points are pre-sorted by cell, and per-cell ranges are found by binary
search in the sorted list of occupied cell ids, which keeps memory at
O(points) for any grid resolution.
"""

import threading

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

# The TBB layer is rejected at import time on hosts with an old TBB; the
# portable workqueue layer behaves identically for these kernels.
_numba_config.THREADING_LAYER = "workqueue"

# The workqueue layer aborts the process when a parallel kernel is entered
# from two host threads at once, so compiled calls are serialized. Each
# call already fans out over the numba thread pool.
EXEC_LOCK = threading.Lock()


@njit(cache=True, nogil=True, inline="always")
def _bisect_left(arr, value):
    lo, hi = 0, arr.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < value:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, nogil=True, parallel=True)
def query_grid_1d(q, data, occ, starts, dim0, min0, h, dco, ico, ra, rb, out_v, out_g):
    """Density/gradient sums for 1-d queries against the cell index.

    dco must be zero-padded to the same length as ico; ra/rb hold the
    recurrence factors (2n+1)/(n+1) and n/(n+1).
    """
    deg = ico.shape[0] - 1
    for iq in prange(q.shape[0]):
        x = q[iq, 0]
        c0 = np.int64(np.floor((x - min0) / h))
        acc_v = 0.0
        acc_g = 0.0
        for off in range(-1, 2):
            cell = c0 + off
            if cell < 0 or cell >= dim0:
                continue
            pos = _bisect_left(occ, cell)
            if pos >= occ.shape[0] or occ[pos] != cell:
                continue
            for p in range(starts[pos], starts[pos + 1]):
                u = (x - data[p, 0]) / h
                if u <= -1.0 or u >= 1.0:
                    continue
                p_prev = 1.0
                p_cur = u
                kv = ico[0] + ico[1] * u
                kp = dco[0] + dco[1] * u
                for n in range(1, deg):
                    p_next = ra[n] * u * p_cur - rb[n] * p_prev
                    p_prev = p_cur
                    p_cur = p_next
                    kv += ico[n + 1] * p_cur
                    kp += dco[n + 1] * p_cur
                acc_v += kv
                acc_g += kp
        out_v[iq] = acc_v
        out_g[iq, 0] = acc_g


@njit(cache=True, nogil=True, inline="always")
def _accumulate_point(x, data, p, d, h, dco, ico, ra, rb, kv, kp):
    """Fill per-coordinate K and K' values; False when out of support."""
    deg = ico.shape[0] - 1
    for j in range(d):
        u = (x[j] - data[p, j]) / h
        if u <= -1.0 or u >= 1.0:
            return False
        p_prev = 1.0
        p_cur = u
        v = ico[0] + ico[1] * u
        g = dco[0] + dco[1] * u
        for n in range(1, deg):
            p_next = ra[n] * u * p_cur - rb[n] * p_prev
            p_prev = p_cur
            p_cur = p_next
            v += ico[n + 1] * p_cur
            g += dco[n + 1] * p_cur
        kv[j] = v
        kp[j] = g
    return True


@njit(cache=True, nogil=True, parallel=True)
def query_grid_nd(q, data, occ, starts, dims, strides, mins, h, dco, ico, ra, rb, out_v, out_g):
    """General-d version of query_grid_1d (3^d neighbor cells per query)."""
    d = q.shape[1]
    n_off = 3**d
    for iq in prange(q.shape[0]):
        cc = np.empty(d, np.int64)
        for j in range(d):
            cc[j] = np.int64(np.floor((q[iq, j] - mins[j]) / h))
        kv = np.empty(d)
        kp = np.empty(d)
        gacc = np.zeros(d)
        acc_v = 0.0
        for off in range(n_off):
            rem = off
            flat = np.int64(0)
            valid = True
            for j in range(d):
                cj = cc[j] + (rem % 3) - 1
                rem //= 3
                if cj < 0 or cj >= dims[j]:
                    valid = False
                    break
                flat += cj * strides[j]
            if not valid:
                continue
            pos = _bisect_left(occ, flat)
            if pos >= occ.shape[0] or occ[pos] != flat:
                continue
            for p in range(starts[pos], starts[pos + 1]):
                if not _accumulate_point(q[iq], data, p, d, h, dco, ico, ra, rb, kv, kp):
                    continue
                prod = 1.0
                for j in range(d):
                    prod *= kv[j]
                acc_v += prod
                for j in range(d):
                    g = kp[j]
                    for m in range(d):
                        if m != j:
                            g *= kv[m]
                    gacc[j] += g
        out_v[iq] = acc_v
        for j in range(d):
            out_g[iq, j] = gacc[j]


@njit(cache=True, nogil=True, parallel=True)
def query_linear(q, data, h, dco, ico, ra, rb, out_v, out_g):
    """Index-free fallback: scan every point for every query."""
    d = q.shape[1]
    for iq in prange(q.shape[0]):
        kv = np.empty(d)
        kp = np.empty(d)
        gacc = np.zeros(d)
        acc_v = 0.0
        for p in range(data.shape[0]):
            if not _accumulate_point(q[iq], data, p, d, h, dco, ico, ra, rb, kv, kp):
                continue
            prod = 1.0
            for j in range(d):
                prod *= kv[j]
            acc_v += prod
            for j in range(d):
                g = kp[j]
                for m in range(d):
                    if m != j:
                        g *= kv[m]
                gacc[j] += g
        out_v[iq] = acc_v
        for j in range(d):
            out_g[iq, j] = gacc[j]


def recurrence_factors(max_degree: int):
    """((2n+1)/(n+1), n/(n+1)) tables used by the compiled loops."""
    n = np.arange(max_degree, dtype=np.float64)
    return (2 * n + 1) / (n + 1), n / (n + 1)
