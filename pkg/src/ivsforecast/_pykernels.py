"""Pure-Python / numpy versions of the compiled kernels in ``_ckernels.pyx``.

Used when the extension is not built or ``IVSFORECAST_PURE_PYTHON`` is set.
"""

import numpy as np
from scipy.signal import lfilter


def ets_filter(y, alpha, beta, phi, l0, b0, trend):
    lev, slope, sse = float(l0), float(b0), 0.0
    if trend == 0:
        for obs in y:
            e = obs - lev
            sse += e * e
            lev = lev + alpha * e
        return sse, lev, 0.0
    for obs in y:
        yhat = lev + phi * slope
        e = obs - yhat
        sse += e * e
        lev = yhat + alpha * e
        slope = phi * slope + beta * e
    return sse, lev, slope



def ets_sse_grad(y, alpha, beta, phi, l0, b0, trend):
    lev, slope, sse = float(l0), float(b0) if trend else 0.0, 0.0
    dl = np.array([0.0, 0.0, 0.0, 1.0, 0.0])
    db = np.array([0.0, 0.0, 0.0, 0.0, 1.0 if trend else 0.0])
    g = np.zeros(5)
    unit_a = np.array([1.0, 0, 0, 0, 0])
    unit_b = np.array([0, 1.0, 0, 0, 0])
    unit_p = np.array([0, 0, 1.0, 0, 0])
    for obs in y:
        if trend == 0:
            yhat = lev
            dy = dl
        else:
            yhat = lev + phi * slope
            dy = dl + phi * db + slope * unit_p
        e = obs - yhat
        sse += e * e
        g -= 2.0 * e * dy
        dl = dy - alpha * dy + e * unit_a
        if trend == 0:
            lev = lev + alpha * e
        else:
            db = phi * db + slope * unit_p - beta * dy + e * unit_b
            lev = yhat + alpha * e
            slope = phi * slope + beta * e
    return sse, g


def arma_css(u, phi, theta, with_mean, jacobian):
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n, p, q = u.size, phi.size, theta.size
    denom = np.concatenate(([1.0], theta))
    e = np.zeros(n)
    k = p + q + (1 if with_mean else 0)
    jac = np.zeros((n, k if jacobian else 0))
    if n <= p:
        return e, jac
    drive = u[p:].copy()
    for i in range(p):
        drive -= phi[i] * u[p - i - 1 : n - i - 1]
    e[p:] = lfilter([1.0], denom, drive)
    if not jacobian:
        return e, jac
    col = 0
    if with_mean:
        jac[p:, 0] = lfilter([1.0], denom, np.full(n - p, -(1.0 - phi.sum())))
        col = 1
    for i in range(p):
        jac[p:, col + i] = lfilter([1.0], denom, -u[p - i - 1 : n - i - 1])
    for c in range(q):
        lagged = np.zeros(n - p)
        lagged[c + 1 :] = e[p : n - c - 1]
        jac[p:, col + p + c] = lfilter([1.0], denom, -lagged)
    return e, jac


def best_split(x, y, min_leaf):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2:
        return -np.inf, -1
    csum = np.cumsum(y)
    total = csum[-1]
    left = csum[:-1]
    k = np.arange(1, n)
    right = total - left
    gain = left * left / k + right * right / (n - k) - total * total / n
    ok = (k >= min_leaf) & (n - k >= min_leaf) & (x[:-1] < x[1:])
    if not ok.any():
        return -np.inf, -1
    gain = np.where(ok, gain, -np.inf)
    best = int(np.argmax(gain))
    return float(gain[best]), best + 1


def block_bootstrap_means(losses, starts, block_len, chunk=256):
    losses = np.asarray(losses, dtype=float)
    starts = np.asarray(starts, dtype=np.int64)
    n = losses.shape[0]
    offsets = np.arange(block_len)
    out = np.empty((starts.shape[0], losses.shape[1]))
    for lo in range(0, starts.shape[0], chunk):
        blk = starts[lo : lo + chunk]
        idx = (blk[:, :, None] + offsets).reshape(blk.shape[0], -1)[:, :n]
        out[lo : lo + chunk] = losses[idx].mean(axis=1)
    return out
