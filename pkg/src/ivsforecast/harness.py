"""Rolling-window out-of-sample forecasting of whole surfaces.

Each origin uses the ``window_len`` panels ending on the origin date. The
parametric models refit their daily cross-sections over the window, forecast
the coefficient path with one dynamics family and evaluate the forecast
surface at the quotes observed on the target date. The tree is refitted on
the pooled window quotes at a frozen complexity parameter and reused for all
horizons. Predictions are clamped to [0, 1].
"""

from __future__ import annotations

import datetime as dt
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from . import cross_section as cs
from . import dynamics as dyn
from . import tree as rt
from .errors import ComputeError, InsufficientHistory, InvalidConfig
from .surface_data import PanelSeries

MODEL_IDS = (
    "RT",
    "GG-RW", "GG-AR", "GG-ARIMA", "GG-ETS", "GG-VAR",
    "CT-RW", "CT-AR", "CT-ARIMA", "CT-ETS", "CT-VAR",
)
FORECAST_COLUMNS = (
    "origin_date", "target_date", "h", "model", "moneyness", "maturity",
    "pred_iv", "real_iv", "origin_iv", "origin_fit_iv",
)
DIAGNOSTIC_COLUMNS = ("origin_date", "family", "coordinate", "selected_order", "aicc", "forecast", "h")
GAP_COLUMNS = ("origin_date", "h", "model", "reason")
CSV_FLOAT_FORMAT = "%.12g"
# forecasts are re-read by evaluate/mcs/report, so keep them exact
FORECAST_FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class RollingConfig:
    window_len: int = 1167
    n_oos: int = 500
    horizons: tuple = dyn.HORIZONS
    models: tuple = MODEL_IDS
    clamp: tuple = (0.0, 1.0)
    p_max: int = 5
    q_max: int = 3
    d_max: int = 2
    max_leaves: int = 10
    min_leaf: int = 5
    cv_folds: int = 10
    lambda_policy: str = "frozen"
    lam: float | None = None
    alpha_star: float | None = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(sorted(int(h) for h in self.horizons)))
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "clamp", tuple(float(c) for c in self.clamp))
        self.validate()

    def validate(self) -> None:
        if self.window_len < 30:
            raise InvalidConfig("window_len must be at least 30")
        if self.n_oos < 1:
            raise InvalidConfig("n_oos must be at least 1")
        if not self.horizons or any(h not in dyn.HORIZONS for h in self.horizons):
            raise InvalidConfig(f"horizons must be drawn from {dyn.HORIZONS}")
        bad = [m for m in self.models if m not in MODEL_IDS]
        if bad or not self.models:
            raise InvalidConfig(f"unknown model ids: {bad}" if bad else "no models requested")
        if len(set(self.models)) != len(self.models):
            raise InvalidConfig("duplicate model ids")
        if self.clamp != (0.0, 1.0):
            raise InvalidConfig("clamp must be [0, 1]")
        if self.lambda_policy not in ("frozen", "per_window"):
            raise InvalidConfig("lambda_policy must be 'frozen' or 'per_window'")
        if self.lam is not None and not self.lam > 0:
            raise InvalidConfig("lam must be positive")
        if self.threads < 1:
            raise InvalidConfig("threads must be at least 1")

    @property
    def max_horizon(self) -> int:
        return max(self.horizons)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["horizons"] = list(self.horizons)
        d["models"] = list(self.models)
        d["clamp"] = list(self.clamp)
        return d


@dataclass
class ForecastSet:
    """Forecast records plus the run's frozen tuning values and recorded gaps."""

    records: pd.DataFrame
    lam: float | None = None
    alpha_star: float | None = None
    gaps: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=GAP_COLUMNS))
    diagnostics: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=DIAGNOSTIC_COLUMNS))

    def __len__(self):
        return len(self.records)

    @property
    def models(self) -> list[str]:
        return list(pd.unique(self.records["model"]))

    @property
    def horizons(self) -> list[int]:
        return sorted(int(h) for h in pd.unique(self.records["h"]))

    def select(self, model=None, h=None) -> "ForecastSet":
        rec = self.records
        if model is not None:
            models = [model] if isinstance(model, str) else list(model)
            rec = rec[rec["model"].isin(models)]
        if h is not None:
            rec = rec[rec["h"] == h]
        return ForecastSet(rec.reset_index(drop=True), self.lam, self.alpha_star, self.gaps, self.diagnostics)

    def to_csv(self, path) -> None:
        _write_frame(self.records, path, FORECAST_FLOAT_FORMAT)

    @classmethod
    def from_csv(cls, path) -> "ForecastSet":
        rec = pd.read_csv(path, dtype={"model": str}, float_precision="round_trip")
        missing = [c for c in FORECAST_COLUMNS[:8] if c not in rec.columns]
        if missing:
            raise ValueError(f"forecast file lacks columns {missing}")
        for col in ("origin_iv", "origin_fit_iv"):
            if col not in rec.columns:
                rec[col] = np.nan
        rec["h"] = rec["h"].astype(int)
        return cls(rec[list(FORECAST_COLUMNS)])


def _write_frame(frame: pd.DataFrame, path, float_format: str = CSV_FLOAT_FORMAT) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")


def ct_lambda_policy(in_sample: PanelSeries) -> float:
    """Median of the stage-one daily decay rates over the in-sample panels."""
    panels = list(in_sample)
    if not panels:
        raise InsufficientHistory("empty in-sample series")
    return cs.fix_lambda(cs.fit_ct_stage1(panels))


def _parse_model(model_id: str) -> tuple[str, str]:
    surface, _, family = model_id.partition("-")
    return surface, family


class _DailyFits:
    """Per-panel cross-section fits, computed once and shared by all windows."""

    def __init__(self, series: PanelSeries, lam: float | None, surfaces: set[str], upto: int):
        self.series = series
        self.lam = lam
        self.coefs = {s: [None] * upto for s in ("GG", "CT")}
        self.errors = {s: [None] * upto for s in ("GG", "CT")}
        for i in range(upto):
            panel = series[i]
            for s in surfaces:
                try:
                    self.coefs[s][i] = cs.fit_model(s, panel, lam).values
                except (ComputeError, ValueError, np.linalg.LinAlgError) as exc:
                    self.errors[s][i] = f"{type(exc).__name__}: {exc}"

    def path(self, surface: str, lo: int, hi: int) -> dyn.CoefficientPath:
        idx = [i for i in range(lo, hi + 1) if self.coefs[surface][i] is not None]
        dates = tuple(self.series[i].date for i in idx)
        values = np.array([self.coefs[surface][i] for i in idx]) if idx else np.zeros((0, 1))
        return dyn.CoefficientPath(dates, values, surface)


def _coordinate_lookup(panel, m, tau):
    """iv quoted on ``panel`` at exactly (m, tau), NaN where there is no such quote."""
    table = {}
    for a, b, v in zip(panel.moneyness.tolist(), panel.maturity.tolist(), panel.iv.tolist()):
        table.setdefault((a, b), v)
    return np.array([table.get((a, b), math.nan) for a, b in zip(m.tolist(), tau.tolist())])


def _origin_job(series, config, fits, lam, alpha_star, o):
    """All forecasts made at origin index ``o``; returns (frames, gaps, diagnostics)."""
    lo = o - config.window_len + 1
    origin = series[o]
    lo_c, hi_c = config.clamp
    frames, gaps, diags = [], [], []
    per_window_lam = lam
    surfaces = {_parse_model(m)[0] for m in config.models if m != "RT"}

    if config.lambda_policy == "per_window" and "CT" in surfaces:
        per_window_lam = ct_lambda_policy(series[lo : o + 1])
        fits = _DailyFits(series[lo : o + 1], per_window_lam, {"CT"} | surfaces, config.window_len)
        shift = lo
    else:
        shift = 0

    paths = {s: fits.path(s, lo - shift, o - shift) for s in surfaces}
    for s in surfaces:
        for i in range(lo - shift, o - shift + 1):
            err = fits.errors[s][i]
            if err is not None:
                gaps.append((origin.date, 0, f"{s}-fit@{fits.series[i].date.isoformat()}", err))

    origin_ct = fits.coefs["CT"][o - shift] if "CT" in surfaces else None
    if origin_ct is None and per_window_lam is not None:
        try:
            origin_ct = cs.fit_ct(origin, per_window_lam).values
        except (ComputeError, ValueError, np.linalg.LinAlgError):
            origin_ct = None

    forecasts = {}
    for model in config.models:
        if model == "RT":
            try:
                forecasts[model] = rt.fit_pruned(
                    series[lo : o + 1], alpha_star, config.max_leaves, config.min_leaf
                )
            except (ComputeError, ValueError) as exc:
                for h in config.horizons:
                    gaps.append((origin.date, h, model, f"{type(exc).__name__}: {exc}"))
            continue
        surface, family = _parse_model(model)
        path = paths[surface]
        try:
            if path.values.shape[0] == 0 or path.dates[-1] != origin.date:
                raise ComputeError("no cross-section fit on the origin date")
            out = dyn.forecast_path(path, family, config.horizons, config.p_max, config.q_max, config.d_max)
        except (ComputeError, ValueError, np.linalg.LinAlgError) as exc:
            for h in config.horizons:
                gaps.append((origin.date, h, model, f"{type(exc).__name__}: {exc}"))
            continue
        forecasts[model] = out
        for h, fc in out.items():
            for j, value in enumerate(fc.predicted):
                order = fc.orders[j] if j < len(fc.orders) else ""
                aicc = fc.aicc[j] if j < len(fc.aicc) else math.nan
                diags.append((origin.date, model, f"c{j}", order, aicc, float(value), h))

    for h in config.horizons:
        target = series[o + h]
        m, tau, real = target.moneyness, target.maturity, target.iv
        n = real.size
        if n == 0:
            continue
        anchor = _coordinate_lookup(origin, m, tau)
        anchor_fit = (
            cs.evaluate("CT", origin_ct, m, tau, per_window_lam) if origin_ct is not None else np.full(n, math.nan)
        )
        for model in config.models:
            if model not in forecasts:
                continue
            if model == "RT":
                pred = rt.predict_tree(forecasts[model], m, tau)
            else:
                surface, _ = _parse_model(model)
                coef = forecasts[model][h].predicted
                pred = cs.evaluate(surface, coef, m, tau, per_window_lam if surface == "CT" else None)
            pred = np.clip(np.nan_to_num(pred, nan=lo_c, posinf=hi_c, neginf=lo_c), lo_c, hi_c)
            frames.append(
                pd.DataFrame(
                    {
                        "origin_date": origin.date.isoformat(),
                        "target_date": target.date.isoformat(),
                        "h": h,
                        "model": model,
                        "moneyness": m,
                        "maturity": tau,
                        "pred_iv": pred,
                        "real_iv": real,
                        "origin_iv": anchor,
                        "origin_fit_iv": anchor_fit,
                    }
                )
            )
    return frames, gaps, diags


def run_rolling(series: PanelSeries, config: RollingConfig, seed: int = 0) -> ForecastSet:
    """Run the rolling experiment over ``config.n_oos`` consecutive origins.

    The first origin is the last day of the first window. The decay rate
    and the tree complexity are tuned once on that first window (unless
    given in ``config``) and kept fixed. Fit failures for a (date, model)
    pair become gap records rather than aborting the run. Results are sorted
    by origin, horizon and model order, so they do not depend on
    ``config.threads``.
    """
    W, N = config.window_len, config.n_oos
    need = W + N + config.max_horizon
    if len(series) < need:
        raise InsufficientHistory(f"series has {len(series)} panels, needs {need}")
    in_sample = series[:W]
    surfaces = {_parse_model(m)[0] for m in config.models if m != "RT"}
    lam = config.lam
    if lam is None and "CT" in surfaces and config.lambda_policy == "frozen":
        lam = ct_lambda_policy(in_sample)
    alpha_star = config.alpha_star
    if alpha_star is None and "RT" in config.models:
        alpha_star = rt.select_complexity(in_sample, config.cv_folds, seed, config.max_leaves, config.min_leaf)

    last_origin = W - 1 + N - 1
    if config.lambda_policy == "frozen":
        fits = _DailyFits(series, lam, surfaces, last_origin + 1)
    else:
        fits = _DailyFits(series, None, surfaces - {"CT"}, last_origin + 1)
    origins = range(W - 1, last_origin + 1)

    def job(o):
        return _origin_job(series, config, fits, lam, alpha_star, o)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(job, origins))
    else:
        results = [job(o) for o in origins]

    frames = [f for r in results for f in r[0]]
    records = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=FORECAST_COLUMNS)
    if len(records):
        rank = {m: i for i, m in enumerate(config.models)}
        records["_rank"] = records["model"].map(rank)
        records["_row"] = np.arange(len(records))
        records = records.sort_values(["origin_date", "h", "_rank", "_row"], kind="mergesort")
        records = records.drop(columns=["_rank", "_row"]).reset_index(drop=True)
    gaps = pd.DataFrame([g for r in results for g in r[1]], columns=GAP_COLUMNS)
    diags = pd.DataFrame([d for r in results for d in r[2]], columns=DIAGNOSTIC_COLUMNS)
    return ForecastSet(records, lam, alpha_star, gaps, diags)


def write_diagnostics(fset: ForecastSet, path) -> None:
    frame = fset.diagnostics.copy()
    if len(frame):
        frame["origin_date"] = [d.isoformat() if isinstance(d, dt.date) else d for d in frame["origin_date"]]
    _write_frame(frame, path)


def write_gaps(fset: ForecastSet, path) -> None:
    frame = fset.gaps.copy()
    if len(frame):
        frame["origin_date"] = [d.isoformat() if isinstance(d, dt.date) else d for d in frame["origin_date"]]
    _write_frame(frame, path)


def models_by_surface(models: Sequence[str]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for m in models:
        out.setdefault("RT" if m == "RT" else _parse_model(m)[0], []).append(m)
    return out
