"""Compiled per-bin numeric kernels.

The per-frame feature path factors into many independent small (M x M,
M <= 6) Hermitian problems per frequency bin. Calling LAPACK per matrix
dominates runtime at these sizes, so the whole chain
(diagonal loading -> Cholesky -> congruence -> coherence normalization ->
principal eigenvalue via cyclic Jacobi) runs as one fused numba kernel.

Everything here is deterministic: fixed sweep order, no fastmath, no
threading.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Reference bins whose mean diagonal falls at or below this are treated as
# silent: gamma = 0, trace = 0, no factorization attempted.
SILENT_EPS = 1e-30

# Loading escalation on Cholesky failure, relative to the mean diagonal.
ESCALATED_LOAD = 1e-3

_MAX_SWEEPS = 30


@njit(cache=True)
def _cholesky_lower(a, low):
    """Lower Cholesky of Hermitian a into low. Returns True on success."""
    m = a.shape[0]
    for i in range(m):
        for j in range(m):
            low[i, j] = 0.0 + 0.0j
    for j in range(m):
        s = a[j, j].real
        for k in range(j):
            s -= (low[j, k] * np.conj(low[j, k])).real
        if not (s > 0.0):
            return False
        low[j, j] = np.sqrt(s)
        for i in range(j + 1, m):
            c = a[i, j]
            for k in range(j):
                c -= low[i, k] * np.conj(low[j, k])
            low[i, j] = c / low[j, j]
    return True


@njit(cache=True)
def _lower_inverse(low, inv):
    """Inverse of a lower-triangular matrix into inv."""
    m = low.shape[0]
    for i in range(m):
        for j in range(m):
            inv[i, j] = 0.0 + 0.0j
    for j in range(m):
        inv[j, j] = 1.0 / low[j, j]
        for i in range(j + 1, m):
            c = 0.0 + 0.0j
            for k in range(j, i):
                c += low[i, k] * inv[k, j]
            inv[i, j] = -c / low[i, i]


@njit(cache=True)
def _congruence(inv, num, tmp, out):
    """out = inv @ num @ inv^H, Hermitized."""
    m = num.shape[0]
    for i in range(m):
        for j in range(m):
            c = 0.0 + 0.0j
            for k in range(i + 1):  # inv is lower triangular
                c += inv[i, k] * num[k, j]
            tmp[i, j] = c
    for i in range(m):
        for j in range(m):
            c = 0.0 + 0.0j
            for k in range(j + 1):
                c += tmp[i, k] * np.conj(inv[j, k])
            out[i, j] = c
    for i in range(m):
        for j in range(i + 1, m):
            h = 0.5 * (out[i, j] + np.conj(out[j, i]))
            out[i, j] = h
            out[j, i] = np.conj(h)
        out[i, i] = complex(out[i, i].real, 0.0)


@njit(cache=True)
def _jacobi_max_eig(g):
    """Largest eigenvalue of Hermitian g via cyclic Jacobi. Destroys g."""
    m = g.shape[0]
    for _ in range(_MAX_SWEEPS):
        off2 = 0.0
        diag2 = 0.0
        for p in range(m):
            diag2 += g[p, p].real * g[p, p].real
            for q in range(p + 1, m):
                off2 += (g[p, q] * np.conj(g[p, q])).real
        if off2 <= 1e-28 * (diag2 + off2):
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = g[p, q]
                r = np.abs(apq)
                if r == 0.0:
                    continue
                app = g[p, p].real
                aqq = g[q, q].real
                tau = (aqq - app) / (2.0 * r)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                e = apq / r
                for k in range(m):
                    if k == p or k == q:
                        continue
                    akp = g[k, p]
                    akq = g[k, q]
                    g[k, p] = c * akp - s * np.conj(e) * akq
                    g[k, q] = s * e * akp + c * akq
                    g[p, k] = np.conj(g[k, p])
                    g[q, k] = np.conj(g[k, q])
                g[p, p] = complex(c * c * app - 2.0 * c * s * r + s * s * aqq, 0.0)
                g[q, q] = complex(s * s * app + 2.0 * c * s * r + c * c * aqq, 0.0)
                g[p, q] = 0.0 + 0.0j
                g[q, p] = 0.0 + 0.0j
    lmax = g[0, 0].real
    for p in range(1, m):
        if g[p, p].real > lmax:
            lmax = g[p, p].real
    return lmax


@njit(cache=True)
def _max_eig_batch(mats, out):
    b = mats.shape[0]
    m = mats.shape[1]
    work = np.empty((m, m), dtype=np.complex128)
    for i in range(b):
        for p in range(m):
            for q in range(m):
                work[p, q] = mats[i, p, q]
        out[i] = _jacobi_max_eig(work)


@njit(cache=True)
def _whiten_gmsc_batch(num, ref, diag_load, gamma, trace):
    """Whitened-GMSC of num against ref per batch entry.

    gamma[i] in [0, 1]; trace[i] = tr of the whitened matrix (>= 0).
    Returns -1, or the index of the first bin whose reference could not be
    factorized even with escalated loading.
    """
    b = num.shape[0]
    m = num.shape[1]
    loaded = np.empty((m, m), dtype=np.complex128)
    low = np.empty((m, m), dtype=np.complex128)
    inv = np.empty((m, m), dtype=np.complex128)
    tmp = np.empty((m, m), dtype=np.complex128)
    rw = np.empty((m, m), dtype=np.complex128)
    d = np.empty(m, dtype=np.float64)
    for i in range(b):
        mean_diag = 0.0
        for p in range(m):
            mean_diag += ref[i, p, p].real
        mean_diag /= m
        if mean_diag <= SILENT_EPS:
            gamma[i] = 0.0
            trace[i] = 0.0
            continue
        ok = False
        for load in (diag_load, ESCALATED_LOAD):
            for p in range(m):
                for q in range(m):
                    loaded[p, q] = ref[i, p, q]
                loaded[p, p] += load * mean_diag
            if _cholesky_lower(loaded, low):
                ok = True
                break
        if not ok:
            return i
        _lower_inverse(low, inv)
        _congruence(inv, num[i], tmp, rw)
        tr = 0.0
        dmin = np.inf
        for p in range(m):
            d[p] = rw[p, p].real
            tr += d[p]
            if d[p] < dmin:
                dmin = d[p]
        trace[i] = tr if tr > 0.0 else 0.0
        if dmin <= SILENT_EPS:
            gamma[i] = 0.0
            continue
        for p in range(m):
            d[p] = 1.0 / np.sqrt(d[p])
        for p in range(m):
            for q in range(m):
                rw[p, q] = rw[p, q] * (d[p] * d[q])
            rw[p, p] = 1.0 + 0.0j  # exact unit diagonal by construction
        g = (_jacobi_max_eig(rw) - 1.0) / (m - 1.0)
        if g < 0.0:
            g = 0.0
        elif g > 1.0:
            g = 1.0
        gamma[i] = g
    return -1


def whiten_gmsc_batch(numerators, references, diag_load):
    """GMSC + whitened trace for stacked (B, M, M) Hermitian pairs."""
    num = np.ascontiguousarray(numerators, dtype=np.complex128)
    ref = np.ascontiguousarray(references, dtype=np.complex128)
    b = num.shape[0]
    gamma = np.empty(b, dtype=np.float64)
    trace = np.empty(b, dtype=np.float64)
    bad = _whiten_gmsc_batch(num, ref, float(diag_load), gamma, trace)
    return gamma, trace, int(bad)


def principal_eigenvalue(mats) -> np.ndarray | float:
    """Largest eigenvalue(s) of Hermitian matrices, shape (..., M, M)."""
    a = np.ascontiguousarray(mats, dtype=np.complex128)
    single = a.ndim == 2
    if single:
        a = a[None]
    flat = a.reshape(-1, a.shape[-2], a.shape[-1])
    out = np.empty(flat.shape[0], dtype=np.float64)
    _max_eig_batch(flat, out)
    if single:
        return float(out[0])
    return out.reshape(a.shape[:-2])
