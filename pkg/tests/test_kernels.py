import numpy as np
import pytest

from ivsforecast import kernels
from ivsforecast.kernels import backend_module


def test_dispatch_exposes_a_backend():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in kernels.available_backends()
    with pytest.raises(ValueError):
        backend_module("fortran")


@pytest.mark.parametrize("trend", [0, 1, 2])
def test_ets_filter_matches_plain_recursion(backend, rng, trend):
    y = rng.normal(size=40).cumsum()
    a, b, phi, l0, b0 = 0.3, 0.05, 0.9 if trend == 2 else 1.0, 0.1, 0.2 if trend else 0.0
    lev, slope, sse = l0, b0, 0.0
    for obs in y:
        yhat = lev + phi * slope
        e = obs - yhat
        sse += e * e
        lev = yhat + a * e
        slope = phi * slope + b * e if trend else 0.0
    got = backend.ets_filter(np.ascontiguousarray(y), a, b, phi, l0, b0, trend)
    np.testing.assert_allclose(got, (sse, lev, slope), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("trend", [0, 1, 2])
def test_ets_gradient_matches_finite_differences(backend, rng, trend):
    y = np.ascontiguousarray(rng.normal(size=50).cumsum())
    x = np.array([0.4, 0.1, 1.0 if trend == 1 else 0.9, 0.3, 0.2])
    sse, grad = backend.ets_sse_grad(y, *x, trend)

    def f(z):
        phi = 1.0 if trend == 1 else z[2]
        return backend.ets_filter(y, z[0], z[1], phi, z[3], z[4] if trend else 0.0, trend)[0]

    assert sse == pytest.approx(f(x), rel=1e-12)
    active = {0: [0, 3], 1: [0, 1, 3, 4], 2: [0, 1, 2, 3, 4]}[trend]
    for k in active:
        step = np.zeros(5)
        step[k] = 1e-6
        fd = (f(x + step) - f(x - step)) / 2e-6
        assert grad[k] == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_arma_css_jacobian_matches_finite_differences(backend, rng):
    u = np.ascontiguousarray(rng.normal(size=80))
    phi = np.array([0.4, -0.2])
    theta = np.array([0.3])
    e, J = backend.arma_css(u, phi, theta, True, True)
    assert np.all(e[:2] == 0)
    # with_mean column: derivative w.r.t. mu of residuals of (u - mu)
    params = np.array([0.0, *phi, *theta])

    def resid(p):
        return backend.arma_css(np.ascontiguousarray(u - p[0]), p[1:3].copy(), p[3:].copy(), True, False)[0]

    for k in range(4):
        step = np.zeros(4)
        step[k] = 1e-6
        fd = (resid(params + step) - resid(params - step)) / 2e-6
        np.testing.assert_allclose(J[:, k], fd, atol=1e-6)


def test_arma_css_pure_ar_is_a_regression_residual(backend, rng):
    u = np.ascontiguousarray(rng.normal(size=30))
    phi = np.array([0.5])
    e, _ = backend.arma_css(u, phi, np.zeros(0), False, False)
    np.testing.assert_allclose(e[1:], u[1:] - 0.5 * u[:-1], atol=1e-14)


def brute_split(x, y, min_leaf):
    best, best_k = -np.inf, -1
    total = y.sum()
    n = y.size
    for k in range(min_leaf, n - min_leaf + 1):
        if x[k - 1] == x[k]:
            continue
        left = y[:k].sum()
        gain = left**2 / k + (total - left) ** 2 / (n - k) - total**2 / n
        if gain > best + 1e-12:
            best, best_k = gain, k
    return best, best_k


def test_best_split_agrees_with_brute_force(backend, rng):
    for _ in range(20):
        n = int(rng.integers(12, 60))
        x = np.sort(rng.integers(0, 15, n).astype(float))
        y = rng.normal(size=n)
        y = np.ascontiguousarray(y - y.mean())
        gain, k = backend.best_split(np.ascontiguousarray(x), y, 3)
        bgain, bk = brute_split(x, y, 3)
        assert k == bk
        if k >= 0:
            assert gain == pytest.approx(bgain, rel=1e-10)


def test_best_split_none_when_constant_predictor(backend):
    x = np.zeros(20)
    y = np.ascontiguousarray(np.arange(20.0) - 9.5)
    assert backend.best_split(x, y, 2)[1] == -1


def test_block_means_match_direct_indexing(backend, rng):
    losses = np.ascontiguousarray(rng.uniform(size=(23, 3)))
    starts = rng.integers(0, 23 - 4 + 1, size=(7, 6)).astype(np.int64)
    got = backend.block_bootstrap_means(losses, starts, 4)
    for b in range(7):
        idx = np.concatenate([np.arange(s, s + 4) for s in starts[b]])[:23]
        np.testing.assert_allclose(got[b], losses[idx].mean(axis=0), rtol=1e-13)


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")
def test_backends_agree(rng):
    c, p = backend_module("cython"), backend_module("python")
    y = np.ascontiguousarray(rng.normal(size=60))
    np.testing.assert_allclose(c.ets_filter(y, 0.3, 0.1, 0.9, 0, 0, 2), p.ets_filter(y, 0.3, 0.1, 0.9, 0, 0, 2), rtol=1e-12)
    e1, j1 = c.arma_css(y, np.array([0.3]), np.array([0.2, 0.1]), True, True)
    e2, j2 = p.arma_css(y, np.array([0.3]), np.array([0.2, 0.1]), True, True)
    np.testing.assert_allclose(e1, e2, atol=1e-13)
    np.testing.assert_allclose(j1, j2, atol=1e-13)
    x = np.sort(rng.uniform(size=60))
    assert c.best_split(x, y - y.mean(), 5)[1] == p.best_split(x, y - y.mean(), 5)[1]
