"""Time-series models for daily surface coefficients and their h-step forecasts.

Five families are available: a no-change random walk, direct autoregressive
projections (AR, and VAR for the whole vector), CSS-estimated ARIMA with the
differencing order picked by repeated KPSS tests, and additive-error
exponential smoothing with the trend form chosen by AICc.
"""

from __future__ import annotations

import datetime as dt
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from . import kernels
from .errors import EmptyPath, NonConvergence, RankDeficient, SeriesTooShort

HORIZONS = (1, 2, 5, 10, 30)
FAMILIES = ("RW", "AR", "ARIMA", "ETS", "VAR")
KPSS_CRIT_5PCT = 0.463
RIDGE_PENALTY = 1e-8
_RANK_TOL = 1e-10
_TINY = 1e-300


@dataclass(frozen=True)
class CoefficientPath:
    """Daily coefficient vectors (rows) for one surface model."""

    dates: tuple
    values: np.ndarray
    model_tag: str = "GG"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if len(self.dates) != vals.shape[0]:
            raise ValueError("one date per coefficient row required")
        if not np.all(np.isfinite(vals)):
            raise ValueError("coefficient paths must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, values, model_tag="GG", start="2000-01-03"):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        days = np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")
        return cls(tuple(d.astype(dt.date) for d in days), values, model_tag)

    def __len__(self):
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DynamicsSpec:
    family: str
    horizon: int
    p_max: int = 5
    q_max: int = 3
    d_max: int = 2
    selection: str = "AICc"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.horizon not in HORIZONS:
            raise ValueError(f"horizon must be one of {HORIZONS}")
        if self.p_max < 0 or self.q_max < 0 or not 0 <= self.d_max <= 2:
            raise ValueError("invalid order limits")
        if self.selection != "AICc":
            raise ValueError("only AICc selection is supported")


@dataclass(frozen=True)
class CoefficientForecast:
    origin_date: object
    horizon: int
    predicted: np.ndarray
    family: str
    orders: tuple = ()
    aicc: tuple = ()

    def __post_init__(self):
        pred = np.array(self.predicted, dtype=float).reshape(-1)
        if not np.all(np.isfinite(pred)):
            raise ValueError("forecast is not finite")
        object.__setattr__(self, "predicted", pred)


def _is_flat(y: np.ndarray) -> bool:
    y = np.asarray(y, dtype=float)
    return y.size == 0 or float(np.ptp(y)) <= 1e-10 * max(1.0, float(np.max(np.abs(y))))


def _aicc(rss: float, n: int, k: int) -> float:
    """Gaussian AICc with sigma^2 concentrated out; ``k`` counts sigma^2."""
    if n - k - 1 <= 0:
        return math.inf
    return n * math.log(max(rss, _TINY) / n) + 2 * k + 2 * k * (k + 1) / (n - k - 1)


def _qr_solve(X, Y):
    """Least squares via QR; None when X is numerically rank deficient."""
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.max() == 0 or diag.min() <= _RANK_TOL * diag.max():
        return None
    return np.linalg.solve(R, Q.T @ Y)


# ----------------------------------------------------------------------- RW


def forecast_rw(path: CoefficientPath, h: int = 1) -> CoefficientForecast:
    """No-change forecast: the last observed coefficient vector, for any ``h``."""
    if len(path) == 0:
        raise EmptyPath("empty coefficient path")
    return CoefficientForecast(path.dates[-1], h, path.values[-1].copy(), "RW", ("-",) * path.k)


# --------------------------------------------------------------------- KPSS


@dataclass(frozen=True)
class KPSSResult:
    stat: float
    reject_at_5pct: bool
    lags: int

    def __iter__(self):
        return iter((self.stat, self.reject_at_5pct))


def kpss_statistic(series, crit: float = KPSS_CRIT_5PCT) -> KPSSResult:
    """Level-stationarity KPSS statistic with a Bartlett long-run variance.

    The bandwidth is ``floor(4 (n/100)^(1/4))``. A constant series scores 0.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 10:
        raise SeriesTooShort(f"KPSS needs 10 observations, got {n}")
    lags = int(math.floor(4.0 * (n / 100.0) ** 0.25))
    if _is_flat(x):
        return KPSSResult(0.0, False, lags)
    e = x - x.mean()
    s = np.cumsum(e)
    lrv = e @ e / n
    for j in range(1, lags + 1):
        lrv += 2.0 * (1.0 - j / (lags + 1.0)) * (e[j:] @ e[:-j]) / n
    if lrv <= 0:
        return KPSSResult(0.0, False, lags)
    stat = float(s @ s / (n * n * lrv))
    return KPSSResult(stat, stat > crit, lags)


def select_d(series, d_max: int = 2) -> int:
    """Smallest differencing order whose KPSS test does not reject; ``d_max`` otherwise."""
    y = np.asarray(series, dtype=float)
    if y.size - d_max < 10:
        raise SeriesTooShort(f"need {10 + d_max} observations for d_max={d_max}")
    for d in range(d_max + 1):
        if not kpss_statistic(np.diff(y, d)).reject_at_5pct:
            return d
    return d_max


# ----------------------------------------------------------- direct AR / VAR


def _lag_design(Y: np.ndarray, p: int, h: int, start: int):
    """Rows t = start .. n-1-h of [1, y_t, ..., y_{t-p+1}] and targets y_{t+h}."""
    n = Y.shape[0]
    rows = np.arange(start, n - h)
    cols = [np.ones((rows.size, 1))]
    for lag in range(p):
        cols.append(Y[rows - lag])
    return np.hstack(cols), Y[rows + h]


def _lag_row(Y: np.ndarray, p: int) -> np.ndarray:
    n = Y.shape[0]
    return np.concatenate([[1.0]] + [Y[n - 1 - lag] for lag in range(p)])


@dataclass(frozen=True)
class DirectFit:
    order: int
    aicc: float
    forecast: np.ndarray
    ridge: bool = False


def ar_direct(series, h: int, p_max: int = 5) -> DirectFit:
    """Direct h-step autoregression with the lag order picked by AICc.

    All candidate orders share the estimation sample so their AICc values
    are comparable; rank-deficient designs are skipped.
    """
    y = np.asarray(series, dtype=float)
    if y.size <= p_max + h:
        raise SeriesTooShort(f"{y.size} observations for p_max={p_max}, h={h}")
    if _is_flat(y):
        return DirectFit(0, math.nan, np.array([y[-1]]))
    # OLS with an intercept is affine-equivariant; scaling only helps the rank test
    loc, scale = float(y.mean()), float(y.std())
    Y = ((y - loc) / scale)[:, None]
    start = max(p_max, 1) - 1
    best = None
    for p in range(1, max(p_max, 1) + 1):
        X, target = _lag_design(Y, p, h, start)
        coef = _qr_solve(X, target)
        if coef is None:
            continue
        r = target - X @ coef
        aicc = _aicc(float((r * r).sum()), X.shape[0], p + 2)
        if math.isinf(aicc):
            continue
        if best is None or aicc < best.aicc:
            best = DirectFit(p, aicc, _lag_row(Y, p) @ coef)
    if best is None:
        raise RankDeficient("no admissible AR order")
    return DirectFit(best.order, best.aicc, best.forecast * scale + loc)


def fit_forecast_ar(series, h: int, p_max: int = 5) -> float:
    """Direct h-step AR projection at the end of ``series``."""
    return float(ar_direct(series, h, p_max).forecast[0])


def _var_aicc(resid: np.ndarray, n: int, m: int, k: int) -> float:
    if n - m - k - 1 <= 0:
        return math.inf
    sigma = resid.T @ resid / n
    eig = np.clip(np.linalg.eigvalsh(sigma), _TINY, None)
    return n * float(np.log(eig).sum()) + n * k * (n + m) / (n - m - k - 1)


def var_direct(values, h: int, p_max: int = 5) -> DirectFit:
    """Direct h-step VAR projection; lag order by multivariate AICc.

    Constant coordinates are carried forward unchanged and left out of the
    lag stack. Orders too long for the sample are skipped; if every usable
    design is rank deficient a ridge solve (penalty 1e-8) is used instead
    and the result is flagged.
    """
    Y = np.asarray(values, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, k_all = Y.shape
    if n <= k_all * p_max + h:
        raise SeriesTooShort(f"{n} rows for k={k_all}, p_max={p_max}, h={h}")
    out = Y[-1].copy()
    live = [j for j in range(k_all) if not _is_flat(Y[:, j])]
    if not live:
        return DirectFit(0, math.nan, out)
    loc, scale = Y[:, live].mean(axis=0), Y[:, live].std(axis=0)
    Z = (Y[:, live] - loc) / scale
    k = Z.shape[1]
    start = max(p_max, 1) - 1
    best, best_ridge = None, None
    for p in range(1, max(p_max, 1) + 1):
        X, target = _lag_design(Z, p, h, start)
        N, m = X.shape
        if N - m - k - 1 <= 0:
            continue
        coef = _qr_solve(X, target)
        ridge = coef is None
        if ridge:
            coef = np.linalg.solve(X.T @ X + RIDGE_PENALTY * np.eye(m), X.T @ target)
        aicc = _var_aicc(target - X @ coef, N, m, k)
        fit = DirectFit(p, aicc, _lag_row(Z, p) @ coef, ridge)
        if ridge:
            if best_ridge is None or aicc < best_ridge.aicc:
                best_ridge = fit
        elif best is None or aicc < best.aicc:
            best = fit
    chosen = best if best is not None else best_ridge
    if chosen is None:
        raise SeriesTooShort(f"{n} rows leave no admissible VAR order for k={k}, h={h}")
    if chosen.ridge:
        warnings.warn("VAR design rank deficient; ridge fallback used", RuntimeWarning, stacklevel=2)
    out[live] = chosen.forecast * scale + loc
    return DirectFit(chosen.order, chosen.aicc, out, chosen.ridge)


def fit_forecast_var(path, h: int, p_max: int = 5) -> np.ndarray:
    """Direct h-step VAR projection of the whole coefficient vector."""
    values = path.values if isinstance(path, CoefficientPath) else path
    return var_direct(values, h, p_max).forecast


# -------------------------------------------------------------------- ARIMA


def _max_root_modulus(poly: np.ndarray) -> float:
    """Largest |eigenvalue| of the companion matrix of z^p - c1 z^{p-1} - ... - cp."""
    if poly.size == 0:
        return 0.0
    return float(np.max(np.abs(np.roots(np.concatenate(([1.0], -poly))))))


@dataclass
class ArimaFit:
    """A fitted ARIMA(p, d, q) on the standardised differenced series."""

    p: int
    d: int
    q: int
    mean: float
    phi: np.ndarray
    theta: np.ndarray
    aicc: float
    loc: float = 0.0
    scale: float = 1.0
    w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    resid: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tails: tuple = ()
    fallback: bool = False

    @property
    def order(self) -> tuple[int, int, int]:
        return (self.p, self.d, self.q)

    def forecast_path(self, h: int) -> np.ndarray:
        """Forecasts for steps 1..h on the original scale."""
        n = self.w.size
        u = np.concatenate([self.w - self.mean, np.zeros(h)])
        e = np.concatenate([self.resid, np.zeros(h)])
        for j in range(n, n + h):
            acc = 0.0
            for i in range(self.p):
                if j - i - 1 >= 0:
                    acc += self.phi[i] * u[j - i - 1]
            for i in range(self.q):
                if 0 <= j - i - 1 < n:
                    acc += self.theta[i] * e[j - i - 1]
            u[j] = acc
        wf = (u[n:] + self.mean) * self.scale + self.loc
        for tail in reversed(self.tails):
            wf = tail + np.cumsum(wf)
        return wf

    def forecast(self, h: int) -> float:
        return float(self.forecast_path(h)[-1])


def _css_fit(w, p, q, with_mean, start, arma_css):
    """Minimise the conditional sum of squares from index ``start`` onward."""
    n = w.size
    if q == 0:
        X = np.column_stack([np.ones(n - start)] * with_mean + [w[start - i - 1 : n - i - 1] for i in range(p)])
        if X.shape[1] == 0:
            r = w[start:]
            return 0.0, np.zeros(0), np.zeros(0), float(r @ r), True
        coef = _qr_solve(X, w[start:])
        if coef is None:
            return None
        r = w[start:] - X @ coef
        phi = coef[with_mean:]
        c = coef[0] if with_mean else 0.0
        denom = 1.0 - phi.sum()
        if with_mean and abs(denom) < 1e-8:
            return None
        mu = c / denom if with_mean else 0.0
        return mu, phi, np.zeros(0), float(r @ r), True

    mu0 = float(w.mean()) if with_mean else 0.0
    x0 = np.concatenate(([mu0] * with_mean, _hannan_rissanen(w - mu0, p, q)))

    def split(x):
        mu = x[0] if with_mean else 0.0
        return mu, np.ascontiguousarray(x[with_mean : with_mean + p]), np.ascontiguousarray(x[with_mean + p :])

    def resid(x):
        mu, phi, theta = split(x)
        e, _ = arma_css(np.ascontiguousarray(w - mu), phi, theta, with_mean, False)
        return e[start:]

    def jac(x):
        mu, phi, theta = split(x)
        _, J = arma_css(np.ascontiguousarray(w - mu), phi, theta, with_mean, True)
        return J[start:]

    try:
        res = least_squares(resid, x0, jac=jac, method="lm", xtol=1e-8, ftol=1e-8, max_nfev=100)
    except (ValueError, np.linalg.LinAlgError):
        return None
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        return None
    mu, phi, theta = split(res.x)
    r = res.fun
    return mu, phi.copy(), theta.copy(), float(r @ r), True


def _hannan_rissanen(u, p, q):
    """Starting values from a long autoregression followed by an ARMA regression."""
    n = u.size
    long_p = min(max(p + q + 2, 6), max(n // 4, 1))
    X = np.column_stack([u[long_p - i - 1 : n - i - 1] for i in range(long_p)])
    coef = _qr_solve(X, u[long_p:])
    if coef is None:
        return np.zeros(p + q)
    ehat = np.zeros(n)
    ehat[long_p:] = u[long_p:] - X @ coef
    s = long_p + q
    cols = [u[s - i - 1 : n - i - 1] for i in range(p)] + [ehat[s - j - 1 : n - j - 1] for j in range(q)]
    coef2 = _qr_solve(np.column_stack(cols), u[s:]) if s < n - (p + q) else None
    if coef2 is None:
        return np.zeros(p + q)
    phi, theta = coef2[:p], coef2[p:]
    if _max_root_modulus(-theta) >= 0.98:
        theta = np.zeros(q)
    if _max_root_modulus(phi) >= 0.98:
        phi = np.zeros(p)
    return np.concatenate((phi, theta))


def fit_arima(series, p_max: int = 5, q_max: int = 3, d_max: int = 2) -> ArimaFit:
    """ARIMA with KPSS-chosen ``d`` and (p, q) by AICc over the order grid.

    Estimation is conditional sum of squares. Every candidate conditions on
    the same first ``p_max`` differenced observations so the AICc values are
    comparable. Candidates that fail to converge or come out non-stationary
    or non-invertible are excluded; if none survives the fit degrades to a
    random walk and a :class:`NonConvergence` warning is issued.
    """
    y = np.asarray(series, dtype=float)
    arma_css = kernels.arma_css
    if _is_flat(y):
        return ArimaFit(0, 0, 0, 0.0, np.zeros(0), np.zeros(0), math.nan, loc=float(y[-1]),
                        w=np.zeros(1), resid=np.zeros(1))
    d = select_d(y, d_max)
    tails = tuple(np.diff(y, j)[-1] for j in range(d))
    raw = np.diff(y, d)
    with_mean = 1 if d < 2 else 0
    loc = float(raw.mean()) if with_mean else 0.0
    scale = float(raw.std())
    if _is_flat(raw) or scale == 0.0:
        mean_w = float(raw.mean()) if with_mean else 0.0
        return ArimaFit(0, d, 0, 0.0, np.zeros(0), np.zeros(0), math.nan, loc=mean_w,
                        w=np.zeros(raw.size), resid=np.zeros(raw.size), tails=tails)
    w = np.ascontiguousarray((raw - loc) / scale)
    start = p_max
    n_eff = w.size - start
    if n_eff < 10:
        raise SeriesTooShort(f"{y.size} observations are too few for ARIMA with p_max={p_max}")
    best = None
    failures = 0
    grid = sorted(((p, q) for p in range(p_max + 1) for q in range(q_max + 1)), key=lambda pq: (sum(pq), pq))
    for p, q in grid:
        fit = _css_fit(w, p, q, with_mean, start, arma_css)
        if fit is None:
            failures += 1
            continue
        mu, phi, theta, rss, _ = fit
        if _max_root_modulus(phi) >= 1.0 - 1e-6 or _max_root_modulus(-theta) >= 1.0 - 1e-6:
            failures += 1
            continue
        aicc = _aicc(rss, n_eff, p + q + with_mean + 1)
        if math.isinf(aicc):
            continue
        if best is None or aicc < best[0]:
            best = (aicc, p, q, mu, phi, theta)
    if best is None:
        warnings.warn("no ARIMA candidate converged; using a random walk", NonConvergence, stacklevel=2)
        return ArimaFit(0, 0, 0, 0.0, np.zeros(0), np.zeros(0), math.nan, loc=float(y[-1]),
                        w=np.zeros(1), resid=np.zeros(1), fallback=True)
    aicc, p, q, mu, phi, theta = best
    e, _ = arma_css(np.ascontiguousarray(w - mu), np.ascontiguousarray(phi), np.ascontiguousarray(theta), with_mean, False)
    return ArimaFit(p, d, q, float(mu), phi, theta, aicc, loc, scale, w, e, tails)


def fit_forecast_arima(series, h: int, limits: Sequence[int] = (5, 3, 2)) -> float:
    """h-step ARIMA forecast; ``limits`` is (p_max, q_max, d_max)."""
    p_max, q_max, d_max = limits
    return fit_arima(series, p_max, q_max, d_max).forecast(h)


# ---------------------------------------------------------------------- ETS

ETS_KINDS = ("N", "A", "Ad")
PHI_BOUNDS = (0.8, 0.98)


@dataclass
class EtsFit:
    """Additive-error exponential smoothing with no, linear or damped trend."""

    kind: str
    alpha: float
    beta: float
    phi: float
    level: float
    slope: float
    sse: float
    aicc: float
    loc: float = 0.0
    scale: float = 1.0

    def forecast(self, h: int) -> float:
        if self.kind == "N":
            f = self.level
        elif self.kind == "A":
            f = self.level + h * self.slope
        else:
            f = self.level + self.slope * sum(self.phi ** j for j in range(1, h + 1))
        return float(f * self.scale + self.loc)


def _ets_start(y):
    m = min(10, y.size)
    t = np.arange(1, m + 1, dtype=float)
    slope, intercept = np.polyfit(t, y[:m], 1)
    return float(intercept), float(slope)


def ets_fixed(series, kind: str = "N", alpha: float = 0.5, beta: float = 0.0, phi: float = 1.0,
              l0: float | None = None, b0: float | None = None) -> EtsFit:
    """Run the ETS recursion with given parameters (no estimation)."""
    y = np.ascontiguousarray(series, dtype=float)
    s_l0, s_b0 = _ets_start(y)
    l0 = s_l0 if l0 is None else l0
    b0 = s_b0 if b0 is None else b0
    trend = {"N": 0, "A": 1, "Ad": 2}[kind]
    if kind == "A":
        phi = 1.0
    sse, lev, slope = kernels.ets_filter(y, alpha, beta, phi, l0, b0 if trend else 0.0, trend)
    return EtsFit(kind, alpha, beta, phi, float(lev), float(slope), float(sse), math.nan)


def _fit_ets_kind(y, kind):
    n = y.size
    l0, b0 = _ets_start(y)
    trend = {"N": 0, "A": 1, "Ad": 2}[kind]
    grad_fn = kernels.ets_sse_grad
    # free parameters are (alpha, beta/alpha, phi, l0, b0) restricted per kind
    if kind == "N":
        free = [0, 3]
        x0 = np.array([0.5, y[0]])
        bounds = [(1e-4, 1.0), (None, None)]
    elif kind == "A":
        free = [0, 1, 3, 4]
        x0 = np.array([0.5, 0.1, l0, b0])
        bounds = [(1e-4, 1.0), (0.0, 1.0), (None, None), (None, None)]
    else:
        free = [0, 1, 2, 3, 4]
        x0 = np.array([0.5, 0.1, 0.9, l0, b0])
        bounds = [(1e-4, 1.0), (0.0, 1.0), PHI_BOUNDS, (None, None), (None, None)]

    def unpack(x):
        full = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
        full[free] = x
        a, rel, ph, lv, sl = full
        return a, a * rel, ph, lv, sl

    def objective(x):
        a, b, ph, lv, sl = unpack(x)
        f, g = grad_fn(y, a, b, ph, lv, sl, trend)
        rel = b / a if a else 0.0
        # chain rule for beta = alpha * rel
        g_full = np.array([g[0] + g[1] * rel, g[1] * a, g[2], g[3], g[4]])
        return f, g_full[free]

    candidates = [x0]
    if kind != "N":
        exact = x0.copy()
        exact[0], exact[1] = 1.0, 0.0
        candidates.append(exact)
    best_x, best_f = None, math.inf
    for start in candidates:
        res = minimize(objective, start, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"ftol": 1e-12, "gtol": 1e-10, "maxiter": 500})
        x = res.x if np.all(np.isfinite(res.x)) else start
        f = objective(x)[0]
        f0 = objective(start)[0]
        if f0 < f:
            x, f = start, f0
        if f < best_f:
            best_x, best_f = x, f
    a, b, ph, lv, sl = unpack(best_x)
    total, lev, slope = kernels.ets_filter(y, a, b, ph, lv, sl, trend)
    k = len(x0) + 1
    return EtsFit(kind, float(a), float(b), float(ph), float(lev), float(slope), float(total), _aicc(float(total), n, k))


def fit_ets(series, kinds: Sequence[str] = ETS_KINDS) -> EtsFit:
    """Fit each trend form by least squares (Gaussian likelihood) and keep the lowest AICc."""
    y = np.asarray(series, dtype=float)
    if y.size < 10:
        raise SeriesTooShort(f"ETS needs 10 observations, got {y.size}")
    if _is_flat(y):
        return EtsFit("N", 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, math.nan, loc=float(y[-1]))
    loc, scale = float(y.mean()), float(y.std())
    z = np.ascontiguousarray((y - loc) / scale)
    fits = [_fit_ets_kind(z, kind) for kind in kinds]
    best = min(fits, key=lambda f: f.aicc)
    best.loc, best.scale = loc, scale
    return best


def fit_forecast_ets(series, h: int) -> float:
    """h-step forecast of the AICc-selected exponential smoothing model."""
    return fit_ets(series).forecast(h)


# ------------------------------------------------------------ dispatcher


def forecast_path(
    path: CoefficientPath,
    family: str,
    horizons: Sequence[int] = HORIZONS,
    p_max: int = 5,
    q_max: int = 3,
    d_max: int = 2,
) -> dict[int, CoefficientForecast]:
    """Forecast every coordinate of ``path`` with ``family`` at each horizon.

    Univariate models fitted once (ARIMA, ETS) serve all horizons; the direct
    projections (AR, VAR) are refitted per horizon.
    """
    if len(path) == 0:
        raise EmptyPath("empty coefficient path")
    origin = path.dates[-1]
    Y = path.values
    out = {}
    if family == "RW":
        for h in horizons:
            out[h] = CoefficientForecast(origin, h, Y[-1].copy(), family, ("-",) * path.k, (math.nan,) * path.k)
    elif family == "AR":
        for h in horizons:
            fits = [ar_direct(Y[:, j], h, p_max) for j in range(path.k)]
            out[h] = CoefficientForecast(
                origin, h, [f.forecast[0] for f in fits], family,
                tuple(f"p={f.order}" for f in fits), tuple(f.aicc for f in fits),
            )
    elif family == "VAR":
        for h in horizons:
            f = var_direct(Y, h, p_max)
            tag = f"p={f.order}" + (",ridge" if f.ridge else "")
            out[h] = CoefficientForecast(origin, h, f.forecast, family, (tag,) * path.k, (f.aicc,) * path.k)
    elif family == "ARIMA":
        fits = [fit_arima(Y[:, j], p_max, q_max, d_max) for j in range(path.k)]
        orders = tuple("(%d,%d,%d)" % f.order + (",rw" if f.fallback else "") for f in fits)
        for h in horizons:
            out[h] = CoefficientForecast(origin, h, [f.forecast(h) for f in fits], family, orders, tuple(f.aicc for f in fits))
    elif family == "ETS":
        fits = [fit_ets(Y[:, j]) for j in range(path.k)]
        for h in horizons:
            out[h] = CoefficientForecast(
                origin, h, [f.forecast(h) for f in fits], family,
                tuple(f.kind for f in fits), tuple(f.aicc for f in fits),
            )
    else:
        raise ValueError(f"unknown family {family!r}")
    return out
