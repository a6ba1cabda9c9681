"""Forecast error metrics, bucket breakdowns and RMSE ratios against a benchmark.

RMSE is in IV units; RMSPE, MAPE and the sign success ratio are in percent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import BenchmarkMissing, EmptyInput, ZeroBenchmarkRMSE, ZeroRealized

METRICS = ("rmse", "rmspe", "mape", "ssr")
SCORE_COLUMNS = ("model", "h", "bucket", "n", "rmse", "rmspe", "mape", "ssr", "ssr_n", "ssr_excluded")


def _pairs(pairs, predicted=None):
    if predicted is not None:
        real, pred = np.asarray(pairs, dtype=float), np.asarray(predicted, dtype=float)
    else:
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=float)
        if arr.size == 0:
            raise EmptyInput("no forecast pairs")
        arr = arr.reshape(-1, 2)
        real, pred = arr[:, 0], arr[:, 1]
    real, pred = real.reshape(-1), pred.reshape(-1)
    if real.size == 0:
        raise EmptyInput("no forecast pairs")
    if real.size != pred.size:
        raise ValueError("realized and predicted lengths differ")
    if not np.all(np.isfinite(real)):
        raise ValueError("realized values must be finite")
    return real, pred


def _percent_errors(real, pred):
    if np.any(real == 0):
        raise ZeroRealized("realized value of zero in a percentage metric")
    return 100.0 * (real - pred) / real


def rmse(pairs, predicted=None) -> float:
    """Root mean squared error of (realized, predicted) pairs.

    Pass either an iterable of pairs or two aligned arrays.
    """
    real, pred = _pairs(pairs, predicted)
    e = real - pred
    return math.sqrt(math.fsum(e * e) / e.size)


def rmspe(pairs, predicted=None) -> float:
    real, pred = _pairs(pairs, predicted)
    pe = _percent_errors(real, pred)
    return math.sqrt(math.fsum(pe * pe) / pe.size)


def mape(pairs, predicted=None) -> float:
    real, pred = _pairs(pairs, predicted)
    pe = _percent_errors(real, pred)
    return math.fsum(np.abs(pe)) / pe.size


@dataclass(frozen=True)
class SignRatio:
    value: float
    n: int
    excluded: int


def sign_success(pred, real, anchor) -> SignRatio:
    """Share (percent) of records whose forecast moves in the realized direction.

    Records with a missing (NaN) anchor are excluded and counted. A zero
    change on both sides counts as agreement, on one side as disagreement.
    """
    pred, real, anchor = (np.asarray(a, dtype=float).reshape(-1) for a in (pred, real, anchor))
    keep = np.isfinite(anchor)
    excluded = int((~keep).sum())
    if not keep.any():
        raise EmptyInput("no records with an origin-date anchor")
    hit = np.sign(pred[keep] - anchor[keep]) == np.sign(real[keep] - anchor[keep])
    return SignRatio(100.0 * float(hit.mean()), int(keep.sum()), excluded)


def ssr(records, anchor: str = "quote") -> float:
    """Sign success ratio of a forecast-record frame, in percent.

    ``anchor="quote"`` measures changes from the realized IV quoted at the
    same coordinate on the origin date; ``anchor="fit"`` uses the fitted CT
    surface of the origin date instead.
    """
    frame = records.records if hasattr(records, "records") else records
    col = _anchor_column(anchor)
    return sign_success(frame["pred_iv"], frame["real_iv"], frame[col]).value


def _anchor_column(anchor: str) -> str:
    if anchor == "quote":
        return "origin_iv"
    if anchor == "fit":
        return "origin_fit_iv"
    raise ValueError("anchor must be 'quote' or 'fit'")


@dataclass(frozen=True)
class BucketScheme:
    """Named moneyness and maturity intervals; a quote may fall in no bucket.

    Each interval is ``(lo, hi, lo_closed, hi_closed)``; use ``-inf``/``inf``
    for open ends.
    """

    moneyness: tuple = (
        ("OTM", -math.inf, 95.0, False, True),
        ("ATM", 97.5, 102.5, True, True),
        ("ITM", 105.0, math.inf, True, False),
    )
    maturity: tuple = (
        ("short", 1 / 12, 3 / 12, True, False),
        ("medium", 3 / 12, 6 / 12, True, False),
        ("long", 6 / 12, math.inf, True, False),
    )

    def __post_init__(self):
        for dim in (self.moneyness, self.maturity):
            spans = sorted((lo, hi) for _, lo, hi, _, _ in dim)
            for (lo1, hi1), (lo2, _) in zip(spans, spans[1:]):
                if lo2 < hi1:
                    raise ValueError("buckets overlap")

    @staticmethod
    def _member(values, lo, hi, lo_closed, hi_closed):
        v = np.asarray(values, dtype=float)
        left = v >= lo if lo_closed else v > lo
        right = v <= hi if hi_closed else v < hi
        return left & right

    def masks(self, moneyness, maturity) -> dict[str, np.ndarray]:
        out = {}
        for name, lo, hi, lc, hc in self.moneyness:
            out[name] = self._member(moneyness, lo, hi, lc, hc)
        for name, lo, hi, lc, hc in self.maturity:
            out[name] = self._member(maturity, lo, hi, lc, hc)
        return out

    @classmethod
    def exhaustive(cls, moneyness_edges, maturity_edges) -> "BucketScheme":
        """Scheme of left-closed bins covering the whole line (for partition checks)."""

        def bins(prefix, edges):
            edges = [-math.inf, *edges, math.inf]
            return tuple((f"{prefix}{i}", lo, hi, True, False) for i, (lo, hi) in enumerate(zip(edges, edges[1:])))

        return cls(bins("m", moneyness_edges), bins("t", maturity_edges))


def _score_row(frame: pd.DataFrame, anchor_col: str) -> dict:
    real = frame["real_iv"].to_numpy(dtype=float)
    pred = frame["pred_iv"].to_numpy(dtype=float)
    row = {"n": int(real.size), "rmse": rmse(real, pred)}
    try:
        row["rmspe"] = rmspe(real, pred)
        row["mape"] = mape(real, pred)
    except ZeroRealized:
        row["rmspe"] = row["mape"] = math.nan
    try:
        s = sign_success(pred, real, frame[anchor_col].to_numpy(dtype=float))
        row.update(ssr=s.value, ssr_n=s.n, ssr_excluded=s.excluded)
    except EmptyInput:
        row.update(ssr=math.nan, ssr_n=0, ssr_excluded=int(real.size))
    return row


def _records(fset) -> pd.DataFrame:
    frame = fset.records if hasattr(fset, "records") else fset
    if len(frame) == 0:
        raise EmptyInput("empty forecast set")
    return frame


def score_table(fset, anchor: str = "quote") -> pd.DataFrame:
    """Aggregate metrics per (model, horizon); ``bucket`` is ``"all"``."""
    frame = _records(fset)
    col = _anchor_column(anchor)
    rows = []
    for (model, h), grp in frame.groupby(["model", "h"], sort=False):
        rows.append({"model": model, "h": int(h), "bucket": "all", **_score_row(grp, col)})
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


def bucket_scores(fset, scheme: BucketScheme | None = None, anchor: str = "quote") -> pd.DataFrame:
    """Aggregate rows plus one row per non-empty (model, horizon, bucket)."""
    scheme = scheme or BucketScheme()
    frame = _records(fset).reset_index(drop=True)
    col = _anchor_column(anchor)
    masks = scheme.masks(frame["moneyness"].to_numpy(), frame["maturity"].to_numpy())
    rows = []
    for (model, h), grp in frame.groupby(["model", "h"], sort=False):
        rows.append({"model": model, "h": int(h), "bucket": "all", **_score_row(grp, col)})
        pos = grp.index.to_numpy()
        for name, mask in masks.items():
            sub = grp[mask[pos]]
            if len(sub):
                rows.append({"model": model, "h": int(h), "bucket": name, **_score_row(sub, col)})
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


_KEY = ["origin_date", "h", "moneyness", "maturity"]


def rmse_ratio(fset, benchmark_model: str, scheme: BucketScheme | None = None) -> pd.DataFrame:
    """RMSE of each model over the benchmark's RMSE on the shared coordinates.

    Rows cover every (model, horizon) in aggregate (``bucket="all"``) and per
    bucket of ``scheme`` when one is given.
    """
    frame = _records(fset)
    bench = frame[frame["model"] == benchmark_model]
    if bench.empty:
        raise BenchmarkMissing(f"benchmark {benchmark_model!r} not in forecast set")
    bench = bench.assign(_occ=bench.groupby(_KEY).cumcount())
    rows = []
    for (model, h), grp in frame.groupby(["model", "h"], sort=False):
        grp = grp.assign(_occ=grp.groupby(_KEY).cumcount())
        merged = grp.merge(
            bench[bench["h"] == h][_KEY + ["_occ", "pred_iv"]], on=_KEY + ["_occ"], suffixes=("", "_bench")
        )
        if merged.empty:
            continue
        groups = {"all": np.ones(len(merged), dtype=bool)}
        if scheme is not None:
            groups.update(scheme.masks(merged["moneyness"].to_numpy(), merged["maturity"].to_numpy()))
        for name, mask in groups.items():
            if not mask.any():
                continue
            sub = merged[mask]
            real = sub["real_iv"].to_numpy(dtype=float)
            denom = rmse(real, sub["pred_iv_bench"].to_numpy(dtype=float))
            if denom == 0:
                raise ZeroBenchmarkRMSE(f"benchmark RMSE is zero for h={h}, bucket={name}")
            rows.append(
                {
                    "model": model,
                    "h": int(h),
                    "bucket": name,
                    "n": int(real.size),
                    "ratio": rmse(real, sub["pred_iv"].to_numpy(dtype=float)) / denom,
                }
            )
    return pd.DataFrame(rows, columns=["model", "h", "bucket", "n", "ratio"])


def wide_table(scores: pd.DataFrame, metric: str, commodity: str = "synthetic") -> pd.DataFrame:
    """One metric laid out with models as rows and (horizon, commodity) as columns."""
    agg = scores[scores["bucket"] == "all"]
    table = agg.pivot_table(index="model", columns="h", values=metric, sort=False)
    table.columns = [f"h{h}_{commodity}" for h in table.columns]
    return table.reset_index()
