"""Daily cross-section fits of the quadratic (GG) and Nelson-Siegel (CT) surface models.

Moneyness enters the regressors through :class:`MoneynessTransform`, which
centres the percent quote at 100 so that at-the-money options sit at zero.
Both models are linear in their coefficients once the CT decay rate
``lam`` is fixed, and are fitted by QR least squares.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize_scalar

from .errors import DomainError, EmptyInput, NoInteriorMinimum, RankDeficient, TooFewObservations

GG_NAMES = ("intercept", "moneyness", "moneyness_sq", "maturity", "moneyness_x_maturity")
CT_NAMES = (
    "level",
    "right_smile",
    "left_smile",
    "ns_slope",
    "ns_curvature",
    "right_attenuation",
    "left_attenuation",
)
LAMBDA_BOUNDS = (0.05, 30.0)
RANK_TOL = 1e-10
COEF_CSV_COLUMNS = ("date", "model", "c0", "c1", "c2", "c3", "c4", "c5", "c6", "lambda", "rss", "n")


@dataclass(frozen=True)
class MoneynessTransform:
    """Map percent moneyness to the signed model coordinate ``m / center - 1``."""

    mode: str = "centered_percent"
    center: float = 100.0

    def __post_init__(self):
        if self.mode != "centered_percent":
            raise ValueError(f"unsupported moneyness transform {self.mode!r}")
        if not self.center > 0:
            raise ValueError("center must be positive")

    def __call__(self, moneyness):
        return np.asarray(moneyness, dtype=float) / self.center - 1.0


CENTERED = MoneynessTransform()


@dataclass(frozen=True)
class FitStats:
    rss: float
    n: int
    stderr: tuple[float, ...] = ()

    def tstats(self, coefs) -> np.ndarray:
        return np.asarray(coefs, dtype=float) / np.asarray(self.stderr, dtype=float)


@dataclass(frozen=True, eq=False)
class GGCoefficients:
    alpha: np.ndarray
    date: dt.date | None = None
    fit_stats: FitStats | None = None

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float).reshape(-1)
        if a.size != 5 or not np.all(np.isfinite(a)):
            raise ValueError("alpha must be 5 finite values")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        if self.fit_stats is not None and self.fit_stats.n < 5:
            raise ValueError("a GG fit needs at least 5 observations")

    @property
    def values(self) -> np.ndarray:
        return self.alpha


@dataclass(frozen=True, eq=False)
class CTCoefficients:
    beta: np.ndarray
    lam: float
    date: dt.date | None = None
    fit_stats: FitStats | None = None

    def __post_init__(self):
        b = np.array(self.beta, dtype=float).reshape(-1)
        if b.size != 7 or not np.all(np.isfinite(b)):
            raise ValueError("beta must be 7 finite values")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError("lam must be positive and finite")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)
        if self.fit_stats is not None and self.fit_stats.n < 7:
            raise ValueError("a CT fit needs at least 7 observations")

    @property
    def values(self) -> np.ndarray:
        return self.beta


@dataclass(frozen=True)
class LambdaEstimate:
    """Stage-one decay-rate estimate for one day."""

    date: dt.date | None
    lam: float
    sse: float
    at_bound: bool = False


def ns_loadings(maturity, lam):
    """Nelson-Siegel slope and curvature loadings.

    Returns ``((1 - e^{-x}) / x, (1 - e^{-x}) / x - e^{-x})`` with
    ``x = lam * maturity``; accurate as ``x`` approaches zero.
    """
    tau = np.asarray(maturity, dtype=float)
    if not lam > 0 or not np.all(tau > 0):
        raise DomainError("maturity and lam must be positive")
    x = lam * tau
    slope = -np.expm1(-x) / x
    curvature = slope - np.exp(-x)
    if slope.ndim == 0:
        return float(slope), float(curvature)
    return slope, curvature


def gg_design(moneyness, maturity, transform: MoneynessTransform = CENTERED) -> np.ndarray:
    d = transform(moneyness)
    tau = np.asarray(maturity, dtype=float)
    d, tau = np.broadcast_arrays(d, tau)
    return np.column_stack([np.ones(d.size), d.ravel(), d.ravel() ** 2, tau.ravel(), (d * tau).ravel()])


def ct_design(moneyness, maturity, lam, transform: MoneynessTransform = CENTERED) -> np.ndarray:
    d = transform(moneyness)
    tau = np.asarray(maturity, dtype=float)
    d, tau = np.broadcast_arrays(d, tau)
    d, tau = d.ravel(), tau.ravel()
    pos = d > 0
    neg = d < 0
    slope, curv = ns_loadings(tau, lam)
    return np.column_stack(
        [
            np.ones(d.size),
            np.where(pos, d * d, 0.0),
            np.where(neg, d * d, 0.0),
            np.atleast_1d(slope),
            np.atleast_1d(curv),
            np.where(pos, d * tau, 0.0),
            np.where(neg, d * tau, 0.0),
        ]
    )


def ols(X: np.ndarray, y: np.ndarray, stderr: bool = True):
    """QR least squares; returns (coef, rss, stderr tuple).

    Raises RankDeficient when a diagonal entry of R falls below
    ``RANK_TOL`` times the largest one.
    """
    n, k = X.shape
    if n < k:
        raise TooFewObservations(f"{n} observations for {k} parameters")
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.max() == 0 or diag.min() <= RANK_TOL * diag.max():
        raise RankDeficient("design matrix is rank deficient")
    coef = solve_triangular(R, Q.T @ y)
    resid = y - X @ coef
    rss = float(resid @ resid)
    se: tuple[float, ...] = ()
    if stderr and n > k:
        rinv = solve_triangular(R, np.eye(k))
        var = rss / (n - k) * np.sum(rinv * rinv, axis=1)
        se = tuple(float(v) for v in np.sqrt(var))
    return coef, rss, se


def fit_gg(panel, transform: MoneynessTransform = CENTERED) -> GGCoefficients:
    """OLS fit of the five-coefficient quadratic surface to one panel."""
    if len(panel) < 5:
        raise TooFewObservations(f"GG needs 5 quotes, panel has {len(panel)}")
    X = gg_design(panel.moneyness, panel.maturity, transform)
    coef, rss, se = ols(X, panel.iv)
    return GGCoefficients(coef, panel.date, FitStats(rss, len(panel), se))


def fit_ct(panel, lam: float, transform: MoneynessTransform = CENTERED) -> CTCoefficients:
    """OLS fit of the seven-coefficient CT surface with the decay rate held at ``lam``."""
    if len(panel) < 7:
        raise TooFewObservations(f"CT needs 7 quotes, panel has {len(panel)}")
    X = ct_design(panel.moneyness, panel.maturity, lam, transform)
    coef, rss, se = ols(X, panel.iv)
    return CTCoefficients(coef, float(lam), panel.date, FitStats(rss, len(panel), se))


def profiled_sse(panel, lam: float, transform: MoneynessTransform = CENTERED) -> float:
    """Residual sum of squares of the CT fit at ``lam`` with beta profiled out."""
    X = ct_design(panel.moneyness, panel.maturity, lam, transform)
    return ols(X, panel.iv, stderr=False)[1]


def _stage1_day(panel, transform, bounds, tol, grid_size):
    lo, hi = bounds
    grid = np.geomspace(lo, hi, grid_size)
    sse = np.array([profiled_sse(panel, g, transform) for g in grid])
    i = int(np.argmin(sse))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_size - 1)]
    res = minimize_scalar(
        lambda v: profiled_sse(panel, v, transform),
        bounds=(a, b),
        method="bounded",
        options={"xatol": tol},
    )
    lam, best = float(res.x), float(res.fun)
    if sse[i] < best:
        lam, best = float(grid[i]), float(sse[i])
    at_bound = lam - lo <= 10 * tol or hi - lam <= 10 * tol
    return LambdaEstimate(panel.date, lam, best, at_bound)


def fit_ct_stage1(
    panels: Iterable,
    transform: MoneynessTransform = CENTERED,
    lambda_bounds: tuple[float, float] = LAMBDA_BOUNDS,
    tol: float = 1e-6,
    grid_size: int = 41,
) -> list[LambdaEstimate]:
    """Per-day decay rate minimising the CT sum of squared errors.

    For each candidate ``lam`` the linear coefficients are solved by OLS, so
    the search is one-dimensional: a log-spaced grid locates the basin and a
    bounded Brent search refines it to ``tol``. Estimates on a search bound
    are flagged and reported through a :class:`NoInteriorMinimum` warning.
    """
    lo, hi = lambda_bounds
    if not (0 < lo < hi and math.isfinite(hi)):
        raise DomainError("lambda bounds must satisfy 0 < lo < hi < inf")
    out = []
    for panel in panels:
        if len(panel) < 8:
            raise TooFewObservations(f"stage-one fit needs 8 quotes, panel has {len(panel)}")
        est = _stage1_day(panel, transform, (lo, hi), tol, grid_size)
        if est.at_bound:
            warnings.warn(
                f"lambda optimum on a search bound ({est.lam:.6g}) for {panel.date}",
                NoInteriorMinimum,
                stacklevel=2,
            )
        out.append(est)
    return out


def fix_lambda(daily_lambdas: Sequence[float]) -> float:
    """Median of the stage-one estimates (mean of the middle pair for even counts)."""
    vals = np.asarray([getattr(v, "lam", v) for v in daily_lambdas], dtype=float)
    if vals.size == 0:
        raise EmptyInput("no lambda estimates")
    if not np.all(np.isfinite(vals) & (vals > 0)):
        raise DomainError("lambda estimates must be positive and finite")
    return float(np.median(vals))


def _point_result(design, coefs, moneyness, maturity):
    out = design @ coefs
    if np.ndim(moneyness) == 0 and np.ndim(maturity) == 0:
        return float(out[0])
    return out.reshape(np.broadcast(np.asarray(moneyness), np.asarray(maturity)).shape)


def evaluate_gg(coeffs: GGCoefficients, moneyness, maturity, transform: MoneynessTransform = CENTERED):
    """GG surface at the given points; no clamping."""
    tau = np.asarray(maturity, dtype=float)
    if not np.all(tau > 0):
        raise DomainError("maturity must be positive")
    return _point_result(gg_design(moneyness, tau, transform), coeffs.alpha, moneyness, maturity)


def evaluate_ct(coeffs: CTCoefficients, moneyness, maturity, transform: MoneynessTransform = CENTERED):
    """CT surface at the given points; no clamping."""
    X = ct_design(moneyness, maturity, coeffs.lam, transform)
    return _point_result(X, coeffs.beta, moneyness, maturity)


def evaluate(model: str, coefs, moneyness, maturity, lam=None, transform: MoneynessTransform = CENTERED):
    """Evaluate a raw coefficient vector of ``model`` ("GG" or "CT")."""
    if model == "GG":
        return evaluate_gg(GGCoefficients(coefs), moneyness, maturity, transform)
    return evaluate_ct(CTCoefficients(coefs, lam), moneyness, maturity, transform)


def fit_model(model: str, panel, lam=None, transform: MoneynessTransform = CENTERED):
    if model == "GG":
        return fit_gg(panel, transform)
    if model == "CT":
        return fit_ct(panel, lam, transform)
    raise ValueError(f"unknown cross-section model {model!r}")


def write_coefficients_csv(rows: Iterable, path) -> None:
    """Write fitted (or ground-truth) coefficients as ``date,model,c0..c6,lambda,rss,n``.

    ``rows`` holds GG/CT coefficient objects; GG rows leave c5, c6 and
    lambda empty, and rows without fit statistics leave rss and n empty.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COEF_CSV_COLUMNS)
        for c in rows:
            is_ct = isinstance(c, CTCoefficients)
            vals = ["%.12g" % v for v in c.values] + [""] * (7 - c.values.size)
            lam = "%.12g" % c.lam if is_ct else ""
            rss = "%.12g" % c.fit_stats.rss if c.fit_stats else ""
            n = str(c.fit_stats.n) if c.fit_stats else ""
            date = c.date.isoformat() if c.date else ""
            w.writerow([date, "CT" if is_ct else "GG", *vals, lam, rss, n])


def read_coefficients_csv(path) -> list:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            date = dt.date.fromisoformat(row["date"]) if row["date"] else None
            stats = FitStats(float(row["rss"]), int(row["n"])) if row["rss"] else None
            if row["model"] == "CT":
                beta = [float(row[f"c{i}"]) for i in range(7)]
                out.append(CTCoefficients(beta, float(row["lambda"]), date, stats))
            else:
                alpha = [float(row[f"c{i}"]) for i in range(5)]
                out.append(GGCoefficients(alpha, date, stats))
    return out
