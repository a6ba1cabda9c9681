# cython: language_level=3
"""Compiled inner loops. Signatures mirror :mod:`ivsforecast._pykernels`."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def ets_filter(const double[::1] y, double alpha, double beta, double phi,
               double l0, double b0, int trend):
    """One pass of the additive-error ETS recursion; returns (sse, level, slope)."""
    cdef Py_ssize_t t, n = y.shape[0]
    cdef double lev = l0, slope = b0, yhat, e, sse = 0.0
    with nogil:
        if trend == 0:
            for t in range(n):
                e = y[t] - lev
                sse += e * e
                lev = lev + alpha * e
        else:
            for t in range(n):
                yhat = lev + phi * slope
                e = y[t] - yhat
                sse += e * e
                lev = yhat + alpha * e
                slope = phi * slope + beta * e
    if trend == 0:
        slope = 0.0
    return sse, lev, slope



def ets_sse_grad(const double[::1] y, double alpha, double beta, double phi,
                 double l0, double b0, int trend):
    """SSE of the ETS recursion and its gradient in (alpha, beta, phi, l0, b0)."""
    cdef Py_ssize_t t, k, n = y.shape[0]
    cdef double lev = l0, slope = b0, yhat, e, sse = 0.0
    cdef double dl[5]
    cdef double db[5]
    cdef double g[5]
    cdef double dy, de, dl_new
    for k in range(5):
        dl[k] = 0.0
        db[k] = 0.0
        g[k] = 0.0
    dl[3] = 1.0
    if trend != 0:
        db[4] = 1.0
    else:
        slope = 0.0
    with nogil:
        for t in range(n):
            if trend == 0:
                yhat = lev
            else:
                yhat = lev + phi * slope
            e = y[t] - yhat
            sse += e * e
            for k in range(5):
                if trend == 0:
                    dy = dl[k]
                else:
                    dy = dl[k] + phi * db[k]
                    if k == 2:
                        dy += slope
                de = -dy
                g[k] += 2.0 * e * de
                dl_new = dy + alpha * de
                if k == 0:
                    dl_new += e
                if trend != 0:
                    db[k] = phi * db[k] + beta * de
                    if k == 2:
                        db[k] += slope
                    if k == 1:
                        db[k] += e
                dl[k] = dl_new
            if trend == 0:
                lev = lev + alpha * e
            else:
                lev = yhat + alpha * e
                slope = phi * slope + beta * e
    return sse, np.array([g[0], g[1], g[2], g[3], g[4]])


def arma_css(const double[::1] u, const double[::1] phi, const double[::1] theta,
             bint with_mean, bint jacobian):
    """Conditional-sum-of-squares residuals of a centred ARMA series.

    Residuals before index ``p`` are zero. With ``jacobian`` the derivative of
    every residual with respect to (mean, phi..., theta...) is also returned.
    """
    cdef Py_ssize_t n = u.shape[0], p = phi.shape[0], q = theta.shape[0]
    cdef Py_ssize_t t, i, j, c, off
    cdef Py_ssize_t k = p + q + (1 if with_mean else 0)
    cdef double acc, sphi = 0.0
    e_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] e = e_arr
    jac_arr = np.zeros((n, k if jacobian else 0), dtype=np.float64)
    cdef double[:, ::1] J = jac_arr
    for i in range(p):
        sphi += phi[i]
    off = 1 if with_mean else 0
    with nogil:
        for t in range(p, n):
            acc = u[t]
            for i in range(p):
                acc -= phi[i] * u[t - i - 1]
            for j in range(q):
                if t - j - 1 >= p:
                    acc -= theta[j] * e[t - j - 1]
            e[t] = acc
            if jacobian:
                if with_mean:
                    acc = -(1.0 - sphi)
                    for j in range(q):
                        if t - j - 1 >= p:
                            acc -= theta[j] * J[t - j - 1, 0]
                    J[t, 0] = acc
                for i in range(p):
                    acc = -u[t - i - 1]
                    for j in range(q):
                        if t - j - 1 >= p:
                            acc -= theta[j] * J[t - j - 1, off + i]
                    J[t, off + i] = acc
                for c in range(q):
                    acc = -e[t - c - 1] if t - c - 1 >= p else 0.0
                    for j in range(q):
                        if t - j - 1 >= p:
                            acc -= theta[j] * J[t - j - 1, off + p + c]
                    J[t, off + p + c] = acc
    return e_arr, jac_arr


def best_split(const double[::1] x, const double[::1] y, Py_ssize_t min_leaf):
    """Best SSE-reducing cut of ``y`` ordered by ``x``.

    Returns (gain, k): the left child takes the first ``k`` points. ``k`` is
    -1 when no admissible cut exists.
    """
    cdef Py_ssize_t n = x.shape[0], k, best_k = -1
    cdef double total = 0.0, left = 0.0, right, gain, best = -INFINITY, base
    with nogil:
        for k in range(n):
            total += y[k]
        base = total * total / n
        for k in range(1, n):
            left += y[k - 1]
            if k < min_leaf or n - k < min_leaf:
                continue
            if not (x[k - 1] < x[k]):
                continue
            right = total - left
            gain = left * left / k + right * right / (n - k) - base
            if gain > best:
                best = gain
                best_k = k
    return best, best_k


def block_bootstrap_means(const double[:, ::1] losses, const cnp.int64_t[:, ::1] starts,
                          Py_ssize_t block_len):
    """Column means of moving-block resamples; one row of block starts per replicate."""
    cdef Py_ssize_t n = losses.shape[0], m = losses.shape[1]
    cdef Py_ssize_t B = starts.shape[0], nb = starts.shape[1]
    cdef Py_ssize_t b, blk, j, c, row, filled
    out_arr = np.zeros((B, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for b in range(B):
            filled = 0
            for blk in range(nb):
                for j in range(block_len):
                    if filled >= n:
                        break
                    row = starts[b, blk] + j
                    for c in range(m):
                        out[b, c] += losses[row, c]
                    filled += 1
            for c in range(m):
                out[b, c] /= n
    return out_arr
