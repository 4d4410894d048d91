"""Fused loops for the per-step hot paths of long runs (numba-compiled).

Each kernel makes one pass over the node array instead of the several
temporaries the equivalent numpy expression would allocate.  Summation
order is fixed by the loop nest.
"""

import math

import numba
import numpy as np

@numba.njit(cache=True)
def upwind_transport(f, c, out):
    """Periodic first-order upwind for a (nx, n1, R) array with speeds sign(v) * c.

    ``c[j]`` is |v_j| dt / dx; nodes j < n1/2 move left, the rest move right.
    """
    nx, n1, R = f.shape
    half = n1 // 2
    for i in range(nx):
        im = i - 1 if i > 0 else nx - 1
        ip = i + 1 if i < nx - 1 else 0
        for j in range(n1):
            cj = c[j]
            if j < half:
                for r in range(R):
                    out[i, j, r] = f[i, j, r] - cj * (f[i, j, r] - f[ip, j, r])
            else:
                for r in range(R):
                    out[i, j, r] = f[i, j, r] - cj * (f[i, j, r] - f[im, j, r])


def xlogx_energy_sums(f, u, chunk=2048):
    """Per velocity node: sum_m f ln f u_m, shape (N,) for non-negative ``f`` of shape (N, m).

    Zeros contribute 0 (the limit of x ln x).  Rows go through in chunks so
    the log buffer stays in cache.
    """
    N = f.shape[0]
    out = np.empty(N)
    buf = np.empty((min(chunk, N), f.shape[1]))
    for s in range(0, N, chunk):
        rows = f[s:s + chunk]
        logs = buf[:rows.shape[0]]
        with np.errstate(divide="ignore"):
            np.log(rows, out=logs)
        out[s:s + chunk] = _xlogx_products(rows, logs, u)
    return out


@numba.njit(cache=True)
def _xlogx_products(f, logf, u):
    N, m = f.shape
    out = np.empty(N)
    for i in range(N):
        s = 0.0
        for j in range(m):
            x = f[i, j]
            if x > 0.0:
                s += x * logf[i, j] * u[j]
        out[i] = s
    return out


@numba.njit(cache=True)
def upwind_transport_marginals(f, c, out, u):
    """:func:`upwind_transport` on (nx, n1, Q, m) that also returns the
    marginals of ``out`` as :func:`checked_marginals` does."""
    nx, n1, Q, m = f.shape
    half = n1 // 2
    fv = np.empty((nx, n1 * Q))
    fe = np.zeros((nx, m))
    lo = np.inf
    finite = True
    for i in range(nx):
        im = i - 1 if i > 0 else nx - 1
        ip = i + 1 if i < nx - 1 else 0
        for j in range(n1):
            cj = c[j]
            src = ip if j < half else im
            for q in range(Q):
                s = 0.0
                for e in range(m):
                    x = f[i, j, q, e] - cj * (f[i, j, q, e] - f[src, j, q, e])
                    out[i, j, q, e] = x
                    if not math.isfinite(x):
                        finite = False
                    if x < lo:
                        lo = x
                    s += x * u[e]
                    fe[i, e] += x
                fv[i, j * Q + q] = s
    return fv, fe, lo, finite


@numba.njit(cache=True)
def checked_marginals(f, u):
    """One pass over (B, K, m): velocity marginal sum_m f u_m, energy marginal
    sum_k f, minimum value, and whether every value is finite."""
    B, K, m = f.shape
    fv = np.empty((B, K))
    fe = np.zeros((B, m))
    lo = np.inf
    finite = True
    for b in range(B):
        for k in range(K):
            s = 0.0
            for j in range(m):
                x = f[b, k, j]
                if not math.isfinite(x):
                    finite = False
                if x < lo:
                    lo = x
                s += x * u[j]
                fe[b, j] += x
            fv[b, k] = s
    return fv, fe, lo, finite


@numba.njit(cache=True)
def relax_combine(f, keep, gain, vel, en):
    """In place: f[b, k, m] = keep[b] f[b, k, m] + gain[b] vel[b, k] en[b, m]."""
    B, K, m = f.shape
    for b in range(B):
        kb = keep[b]
        gb = gain[b]
        for k in range(K):
            gv = gb * vel[b, k]
            for j in range(m):
                f[b, k, j] = kb * f[b, k, j] + gv * en[b, j]


@numba.njit(cache=True, fastmath=True)
def tilted_velocity_sums(vel, x, P):
    """Per cell b: s = sum_k w_k P_k and ss = sum_k w_k P_k P_k^T, where
    w_k = vel[b, k] exp(x[b] . P_k) and P_k = (1, v, |v|^2/2)."""
    B, K = vel.shape
    s = np.zeros((B, 5))
    ss = np.zeros((B, 5, 5))
    for b in range(B):
        x0, x1, x2, x3, x4 = x[b, 0], x[b, 1], x[b, 2], x[b, 3], x[b, 4]
        s0 = s1 = s2 = s3 = s4 = 0.0
        s11 = s12 = s13 = s14 = s22 = s23 = s24 = s33 = s34 = s44 = 0.0
        for k in range(K):
            p1, p2, p3, p4 = P[k, 1], P[k, 2], P[k, 3], P[k, 4]
            w = vel[b, k] * math.exp(x0 + x1 * p1 + x2 * p2 + x3 * p3 + x4 * p4)
            w1, w2, w3, w4 = w * p1, w * p2, w * p3, w * p4
            s0 += w
            s1 += w1
            s2 += w2
            s3 += w3
            s4 += w4
            s11 += w1 * p1
            s12 += w1 * p2
            s13 += w1 * p3
            s14 += w1 * p4
            s22 += w2 * p2
            s23 += w2 * p3
            s24 += w2 * p4
            s33 += w3 * p3
            s34 += w3 * p4
            s44 += w4 * p4
        row = (s0, s1, s2, s3, s4)
        for i in range(5):
            s[b, i] = row[i]
            ss[b, 0, i] = row[i]
            ss[b, i, 0] = row[i]
        ss[b, 1, 1] = s11
        ss[b, 2, 2] = s22
        ss[b, 3, 3] = s33
        ss[b, 4, 4] = s44
        ss[b, 1, 2] = ss[b, 2, 1] = s12
        ss[b, 1, 3] = ss[b, 3, 1] = s13
        ss[b, 1, 4] = ss[b, 4, 1] = s14
        ss[b, 2, 3] = ss[b, 3, 2] = s23
        ss[b, 2, 4] = ss[b, 4, 2] = s24
        ss[b, 3, 4] = ss[b, 4, 3] = s34
    return s, ss
