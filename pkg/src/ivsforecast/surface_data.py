"""Implied-volatility quote panels: containers, filters, CSV I/O and a synthetic generator."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    AllGroupsDropped,
    EmptySeries,
    InvalidConfig,
    SchemaMismatch,
    UnreadableFile,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("date", "moneyness", "maturity", "iv", "volume")
RAW_IV_CEILING = 5.0
FLOAT_FORMAT = "%.10g"


def _as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]").astype(dt.date)
    return dt.date.fromisoformat(str(value))


@dataclass(frozen=True)
class IVQuote:
    """A single implied-volatility observation.

    ``moneyness`` is strike / underlying x 100, ``maturity`` is an ACT/365
    year fraction and ``iv`` is a decimal fraction.
    """

    date: dt.date
    moneyness: float
    maturity: float
    iv: float
    volume: int = 1

    def __post_init__(self):
        if not (0.0 < self.iv < RAW_IV_CEILING):
            raise ValueError(f"iv out of range: {self.iv}")
        if not self.maturity > 0.0:
            raise ValueError(f"maturity must be positive: {self.maturity}")
        if self.volume < 0:
            raise ValueError(f"negative volume: {self.volume}")


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SurfacePanel:
    """One day's cross-section of quotes, stored column-wise."""

    date: dt.date
    moneyness: np.ndarray
    maturity: np.ndarray
    iv: np.ndarray
    volume: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "date", _as_date(self.date))
        m = _frozen(self.moneyness, float)
        tau = _frozen(self.maturity, float)
        iv = _frozen(self.iv, float)
        vol = np.ones(m.size, dtype=np.int64) if self.volume is None else self.volume
        vol = _frozen(vol, np.int64)
        if not (m.size == tau.size == iv.size == vol.size):
            raise ValueError("quote columns have different lengths")
        if m.size:
            if not np.all((iv > 0) & (iv < RAW_IV_CEILING)):
                raise ValueError("iv outside (0, 5)")
            if not np.all(tau > 0):
                raise ValueError("non-positive maturity")
            if not np.all(vol >= 0):
                raise ValueError("negative volume")
        object.__setattr__(self, "moneyness", m)
        object.__setattr__(self, "maturity", tau)
        object.__setattr__(self, "iv", iv)
        object.__setattr__(self, "volume", vol)

    @classmethod
    def from_quotes(cls, quotes: Sequence[IVQuote], date=None) -> "SurfacePanel":
        quotes = list(quotes)
        if date is None:
            if not quotes:
                raise ValueError("date required for an empty panel")
            date = quotes[0].date
        date = _as_date(date)
        if any(q.date != date for q in quotes):
            raise ValueError("all quotes in a panel must share its date")
        return cls(
            date,
            [q.moneyness for q in quotes],
            [q.maturity for q in quotes],
            [q.iv for q in quotes],
            [q.volume for q in quotes],
        )

    @property
    def quotes(self) -> tuple[IVQuote, ...]:
        return tuple(
            IVQuote(self.date, float(m), float(t), float(s), int(v))
            for m, t, s, v in zip(self.moneyness, self.maturity, self.iv, self.volume)
        )

    def __len__(self):
        return int(self.iv.size)

    def take(self, mask) -> "SurfacePanel":
        return SurfacePanel(
            self.date, self.moneyness[mask], self.maturity[mask], self.iv[mask], self.volume[mask]
        )

    def with_iv(self, iv) -> "SurfacePanel":
        return SurfacePanel(self.date, self.moneyness, self.maturity, iv, self.volume)

    def __eq__(self, other):
        if not isinstance(other, SurfacePanel):
            return NotImplemented
        return (
            self.date == other.date
            and np.array_equal(self.moneyness, other.moneyness)
            and np.array_equal(self.maturity, other.maturity)
            and np.array_equal(self.iv, other.iv)
            and np.array_equal(self.volume, other.volume)
        )

    def __repr__(self):
        return f"SurfacePanel(date={self.date.isoformat()}, n={len(self)})"


@dataclass(frozen=True)
class PanelSeries:
    """Date-ordered panels for one underlying.

    ``convenience_yield_slope`` is a descriptive annotation only; nothing in
    the package computes or consumes it.
    """

    panels: tuple[SurfacePanel, ...]
    commodity_tag: str = ""
    convenience_yield_slope: float | None = None
    effective_max_maturity: float | None = None
    skipped_rows: int = 0

    def __post_init__(self):
        panels = tuple(self.panels)
        object.__setattr__(self, "panels", panels)
        for prev, cur in zip(panels, panels[1:]):
            if not prev.date < cur.date:
                raise ValueError("panel dates must be strictly increasing")

    def __len__(self):
        return len(self.panels)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return self.replace(panels=self.panels[item])
        return self.panels[item]

    def __iter__(self):
        return iter(self.panels)

    @property
    def dates(self) -> list[dt.date]:
        return [p.date for p in self.panels]

    @property
    def n_quotes(self) -> int:
        return sum(len(p) for p in self.panels)

    def replace(self, **changes) -> "PanelSeries":
        fields = dict(
            panels=self.panels,
            commodity_tag=self.commodity_tag,
            convenience_yield_slope=self.convenience_yield_slope,
            effective_max_maturity=self.effective_max_maturity,
            skipped_rows=self.skipped_rows,
        )
        fields.update(changes)
        return PanelSeries(**fields)

    def pooled(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Concatenated (moneyness, maturity, iv) over all panels."""
        if not self.panels:
            return np.empty(0), np.empty(0), np.empty(0)
        return (
            np.concatenate([p.moneyness for p in self.panels]),
            np.concatenate([p.maturity for p in self.panels]),
            np.concatenate([p.iv for p in self.panels]),
        )


@dataclass(frozen=True)
class MaturityGroupRule:
    """Liquidity rule: a maturity group survives only with enough quotes overall.

    ``group_edges`` are month boundaries; groups are left-closed and
    right-open except the last, which is closed.
    """

    group_edges: tuple[float, ...] = (1, 6, 12, 18, 24)
    min_quotes_per_group: int = 15_000
    min_quotes_per_day: int = 5

    def __post_init__(self):
        edges = tuple(float(e) for e in self.group_edges)
        object.__setattr__(self, "group_edges", edges)
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("group edges must be strictly ascending")
        if self.min_quotes_per_group <= 0:
            raise ValueError("min_quotes_per_group must be positive")
        if self.min_quotes_per_day < 0:
            raise ValueError("min_quotes_per_day must be non-negative")

    def group_of(self, maturity) -> np.ndarray:
        """Group index per maturity (years); -1 when outside every group."""
        months = np.round(np.asarray(maturity, dtype=float) * 12.0, 9)
        edges = np.asarray(self.group_edges)
        idx = np.searchsorted(edges, months, side="right") - 1
        idx = np.where(months == edges[-1], len(edges) - 2, idx)
        idx[(months < edges[0]) | (months > edges[-1])] = -1
        return idx


def filter_panel(
    panel: SurfacePanel,
    moneyness_lo: float = 90.0,
    moneyness_hi: float = 110.0,
    maturity_lo: float = 1.0 / 12.0,
    maturity_hi: float = 2.0,
) -> SurfacePanel:
    """Keep traded quotes inside the moneyness and maturity windows (inclusive)."""
    m, tau = panel.moneyness, panel.maturity
    keep = (
        (panel.volume > 0)
        & (m >= moneyness_lo)
        & (m <= moneyness_hi)
        & (tau >= maturity_lo)
        & (tau <= maturity_hi)
    )
    return panel.take(keep)


def filter_series(series: PanelSeries, **bounds) -> PanelSeries:
    return series.replace(panels=tuple(filter_panel(p, **bounds) for p in series.panels))


def apply_liquidity_rule(
    series: PanelSeries, rule: MaturityGroupRule = MaturityGroupRule(), count_panels: int | None = None
) -> PanelSeries:
    """Drop maturity groups whose total quote count falls below the threshold.

    Counts run over the whole series, or over the first ``count_panels``
    panels when given (e.g. the in-sample span only). Quotes outside every
    group are dropped as well.
    """
    n_groups = len(rule.group_edges) - 1
    counted = series.panels if count_panels is None else series.panels[:count_panels]
    counts = np.zeros(n_groups, dtype=np.int64)
    for p in counted:
        g = rule.group_of(p.maturity)
        counts += np.bincount(g[g >= 0], minlength=n_groups)
    surviving = np.flatnonzero(counts >= rule.min_quotes_per_group)
    if surviving.size == 0:
        raise AllGroupsDropped(f"no maturity group reaches {rule.min_quotes_per_group} quotes")
    panels = []
    for p in series.panels:
        panels.append(p.take(np.isin(rule.group_of(p.maturity), surviving)))
    max_maturity = rule.group_edges[int(surviving.max()) + 1] / 12.0
    return series.replace(panels=tuple(panels), effective_max_maturity=max_maturity)


def enforce_daily_minimum(series: PanelSeries, min_quotes: int) -> PanelSeries:
    """Drop whole days that carry fewer than ``min_quotes`` quotes."""
    return series.replace(panels=tuple(p for p in series.panels if len(p) >= min_quotes))


def prepare_series(
    series: PanelSeries,
    moneyness: tuple[float, float] = (90.0, 110.0),
    maturity: tuple[float, float] = (1.0 / 12.0, 2.0),
    rule: MaturityGroupRule | None = MaturityGroupRule(),
    count_panels: int | None = None,
) -> PanelSeries:
    """The full filtering pipeline: range filter, liquidity rule, daily minimum.

    Days left without quotes are dropped even when ``rule`` is None.
    """
    out = filter_series(
        series,
        moneyness_lo=moneyness[0],
        moneyness_hi=moneyness[1],
        maturity_lo=maturity[0],
        maturity_hi=maturity[1],
    )
    if rule is not None:
        out = apply_liquidity_rule(out, rule, count_panels=count_panels)
        out = enforce_daily_minimum(out, rule.min_quotes_per_day)
    out = enforce_daily_minimum(out, 1)
    if len(out) == 0:
        raise EmptySeries("no panels survive filtering")
    return out


# --------------------------------------------------------------------------- CSV


def ingest_csv(
    path,
    schema: Mapping[str, str] | None = None,
    commodity_tag: str = "",
    convenience_yield_slope: float | None = None,
) -> PanelSeries:
    """Read one-row-per-quote CSV into a :class:`PanelSeries`.

    ``schema`` maps the canonical names (date, moneyness, maturity, iv,
    volume) to the file's header names. Rows that fail to parse or violate
    the quote invariants are skipped; the count is kept in
    ``PanelSeries.skipped_rows``.
    """
    mapping = {c: c for c in CSV_COLUMNS}
    if schema:
        mapping.update(schema)
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise UnreadableFile(f"cannot open {path}: {exc}") from exc
    by_date: dict[dt.date, list[tuple[float, float, float, int]]] = {}
    skipped = 0
    with fh:
        try:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
        except UnicodeDecodeError as exc:
            raise UnreadableFile(f"cannot decode {path}") from exc
        if not header:
            raise SchemaMismatch(f"{path} has no header row")
        missing = [c for c in CSV_COLUMNS if mapping[c] not in header]
        if missing:
            raise SchemaMismatch(f"{path} lacks columns for {missing}; header is {header}")
        try:
            for row in reader:
                try:
                    date = dt.date.fromisoformat(row[mapping["date"]].strip())
                    m = float(row[mapping["moneyness"]])
                    tau = float(row[mapping["maturity"]])
                    iv = float(row[mapping["iv"]])
                    vol_f = float(row[mapping["volume"]])
                except (TypeError, ValueError, AttributeError):
                    skipped += 1
                    continue
                ok = (
                    all(math.isfinite(v) for v in (m, tau, iv, vol_f))
                    and 0.0 < iv < RAW_IV_CEILING
                    and tau > 0.0
                    and vol_f >= 0.0
                    and vol_f == int(vol_f)
                )
                if not ok:
                    skipped += 1
                    continue
                by_date.setdefault(date, []).append((m, tau, iv, int(vol_f)))
        except (UnicodeDecodeError, csv.Error) as exc:
            raise UnreadableFile(f"cannot parse {path}: {exc}") from exc
    if not by_date:
        raise EmptySeries(f"{path} holds no valid quotes")
    if skipped:
        logger.warning("skipped %d malformed rows in %s", skipped, path)
    panels = []
    for date in sorted(by_date):
        cols = np.array(by_date[date], dtype=float).T
        panels.append(SurfacePanel(date, cols[0], cols[1], cols[2], cols[3].astype(np.int64)))
    return PanelSeries(
        tuple(panels),
        commodity_tag=commodity_tag,
        convenience_yield_slope=convenience_yield_slope,
        skipped_rows=skipped,
    )


def emit_csv(series: PanelSeries, path) -> None:
    """Write a series in the canonical ``date,moneyness,maturity,iv,volume`` layout."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in series.panels:
            d = p.date.isoformat()
            for m, tau, iv, vol in zip(p.moneyness, p.maturity, p.iv, p.volume):
                w.writerow((d, FLOAT_FORMAT % m, FLOAT_FORMAT % tau, FLOAT_FORMAT % iv, int(vol)))


# --------------------------------------------------------------------- synthetic


_COEF_COUNT = {"GG": 5, "CT": 7}


@dataclass(frozen=True)
class SyntheticConfig:
    """Ground-truth process for :func:`generate_synthetic`.

    Coefficients follow independent AR(1) paths around ``mean``. For
    ``model="piecewise"`` the coefficients are the IV levels of the
    moneyness bands cut at ``moneyness_breaks``, flat in maturity.
    """

    n_days: int = 250
    quotes_per_day: int = 50
    model: str = "CT"
    mean: tuple[float, ...] = (0.45, 0.50, 1.20, -0.30, 0.50, -0.20, -0.40)
    phi: float | tuple[float, ...] = 0.98
    innovation_sd: float | tuple[float, ...] = 0.0
    lam: float = 1.5
    noise_sd: float = 0.0
    moneyness_range: tuple[float, float] = (90.0, 110.0)
    maturity_range: tuple[float, float] = (1.0 / 12.0, 2.0)
    coordinates: str = "lattice"
    lattice_moneyness_step: float = 2.5
    lattice_maturity_months: tuple[int, ...] = tuple(range(1, 25))
    moneyness_breaks: tuple[float, ...] = (95.0, 105.0)
    start_date: str = "2006-01-02"
    commodity_tag: str = "synthetic"

    def __post_init__(self):
        for name in ("mean", "moneyness_range", "maturity_range", "lattice_maturity_months", "moneyness_breaks"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("phi", "innovation_sd"):
            v = getattr(self, name)
            if not np.isscalar(v):
                object.__setattr__(self, name, tuple(float(x) for x in v))

    @property
    def n_coefficients(self) -> int:
        if self.model == "piecewise":
            return len(self.moneyness_breaks) + 1
        return _COEF_COUNT[self.model]

    def validate(self) -> None:
        if self.model not in ("GG", "CT", "piecewise"):
            raise InvalidConfig(f"unknown synthetic model {self.model!r}")
        if int(self.n_days) <= 0 or int(self.quotes_per_day) <= 0:
            raise InvalidConfig("n_days and quotes_per_day must be positive")
        if self.noise_sd < 0:
            raise InvalidConfig("noise_sd must be non-negative")
        if len(self.mean) != self.n_coefficients:
            raise InvalidConfig(f"{self.model} needs {self.n_coefficients} coefficient means")
        k = self.n_coefficients
        for name in ("phi", "innovation_sd"):
            if np.size(getattr(self, name)) not in (1, k):
                raise InvalidConfig(f"{name} must be a scalar or have {k} entries")
        if np.any(np.asarray(self.innovation_sd) < 0):
            raise InvalidConfig("innovation_sd must be non-negative")
        if np.any(np.abs(np.asarray(self.phi)) >= 1):
            raise InvalidConfig("phi must lie strictly inside (-1, 1)")
        if self.model == "CT" and not self.lam > 0:
            raise InvalidConfig("lam must be positive")
        if self.coordinates not in ("lattice", "uniform"):
            raise InvalidConfig("coordinates must be 'lattice' or 'uniform'")
        if self.coordinates == "lattice" and self.quotes_per_day > self.lattice_size:
            raise InvalidConfig(f"quotes_per_day exceeds the {self.lattice_size}-point lattice")

    def lattice(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.moneyness_range
        step = self.lattice_moneyness_step
        m = np.arange(lo, hi + step / 2, step)
        tau = np.array([mo / 12.0 for mo in self.lattice_maturity_months])
        tau = tau[(tau >= self.maturity_range[0] - 1e-12) & (tau <= self.maturity_range[1] + 1e-12)]
        mm, tt = np.meshgrid(m, tau)
        return mm.ravel(), tt.ravel()

    @property
    def lattice_size(self) -> int:
        return self.lattice()[0].size


def coefficient_paths(config: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    k = config.n_coefficients
    mean = np.asarray(config.mean, dtype=float)
    phi = np.broadcast_to(np.asarray(config.phi, dtype=float), (k,))
    sd = np.broadcast_to(np.asarray(config.innovation_sd, dtype=float), (k,))
    shocks = rng.standard_normal((config.n_days, k)) * sd
    path = np.empty((config.n_days, k))
    state = mean.copy()
    for t in range(config.n_days):
        if t:
            state = mean + phi * (state - mean) + shocks[t]
        path[t] = state
    return path


def surface_value(config: SyntheticConfig, coefs, moneyness, maturity) -> np.ndarray:
    """Ground-truth IV of the generator's model at the given points (unclamped)."""
    from . import cross_section as cs

    if config.model == "GG":
        return cs.evaluate_gg(cs.GGCoefficients(np.asarray(coefs)), moneyness, maturity)
    if config.model == "CT":
        return cs.evaluate_ct(cs.CTCoefficients(np.asarray(coefs), config.lam), moneyness, maturity)
    band = np.searchsorted(np.asarray(config.moneyness_breaks), np.asarray(moneyness), side="right")
    return np.asarray(coefs)[band] + 0.0 * np.asarray(maturity)


def business_days(start, n: int) -> list[dt.date]:
    first = np.busday_offset(np.datetime64(_as_date(start), "D"), 0, roll="forward")
    days = np.busday_offset(first, np.arange(n), roll="forward")
    return [d.astype(dt.date) for d in days]


def generate_synthetic_with_truth(config: SyntheticConfig, seed: int) -> tuple[PanelSeries, np.ndarray]:
    """Synthetic series plus the (n_days x k) ground-truth coefficient path."""
    config.validate()
    rng = np.random.default_rng(seed)
    truth = coefficient_paths(config, rng)
    dates = business_days(config.start_date, config.n_days)
    lat_m, lat_t = config.lattice() if config.coordinates == "lattice" else (None, None)
    panels = []
    n = config.quotes_per_day
    for t, date in enumerate(dates):
        if lat_m is not None:
            pick = np.sort(rng.choice(lat_m.size, size=n, replace=False))
            m, tau = lat_m[pick], lat_t[pick]
        else:
            m = rng.uniform(*config.moneyness_range, size=n)
            tau = rng.uniform(*config.maturity_range, size=n)
        noise = rng.standard_normal(n) * config.noise_sd
        vol = rng.integers(1, 101, size=n)
        iv = surface_value(config, truth[t], m, tau) + noise
        iv = np.clip(iv, 1e-4, 1.0)
        panels.append(SurfacePanel(date, m, tau, iv, vol))
    series = PanelSeries(tuple(panels), commodity_tag=config.commodity_tag)
    return series, truth


def generate_synthetic(config: SyntheticConfig, seed: int) -> PanelSeries:
    """Deterministic synthetic panel series for ``config`` and ``seed``."""
    return generate_synthetic_with_truth(config, seed)[0]


def synthetic_config_from_dict(d: Mapping) -> SyntheticConfig:
    known = set(SyntheticConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise InvalidConfig(f"unknown synthetic config keys: {sorted(unknown)}")
    try:
        cfg = SyntheticConfig(**dict(d))
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc
    cfg.validate()
    return cfg
