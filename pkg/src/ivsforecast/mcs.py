"""Model Confidence Set with the range statistic and a moving-block bootstrap.

Losses are daily mean squared errors. Pairwise loss differentials are
studentised with bootstrap variances; the largest absolute t-statistic is
compared with its recentred bootstrap distribution and, while the test
rejects, the model with the largest worst-case t-statistic is removed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import kernels
from .errors import DegenerateVariance, NoCommonDates, SeriesTooShort

DEGENERATE_VAR = 1e-16
T_CRIT = 1.96
MCS_COLUMNS = ("model", "eliminated_at_step", "p_value", "survivor")


@dataclass(frozen=True)
class LossMatrix:
    losses: np.ndarray
    model_ids: tuple
    dates: tuple = ()

    def __post_init__(self):
        L = np.array(self.losses, dtype=float)
        if L.ndim != 2:
            raise ValueError("losses must be a (days x models) matrix")
        n, m = L.shape
        if m < 2:
            raise ValueError("at least two models are required")
        if n < 20:
            raise SeriesTooShort(f"{n} loss days; at least 20 are required")
        if not np.all(np.isfinite(L)) or np.any(L < 0):
            raise ValueError("losses must be finite and non-negative")
        if len(self.model_ids) != m:
            raise ValueError("one model id per loss column required")
        dates = tuple(self.dates) if len(self.dates) else tuple(range(n))
        if len(dates) != n:
            raise ValueError("one date per loss row required")
        L = np.ascontiguousarray(L)
        L.setflags(write=False)
        object.__setattr__(self, "losses", L)
        object.__setattr__(self, "model_ids", tuple(self.model_ids))
        object.__setattr__(self, "dates", dates)

    @property
    def n(self) -> int:
        return self.losses.shape[0]

    @property
    def m(self) -> int:
        return self.losses.shape[1]


def build_losses(fset, horizon: int, models=None, aggregate: str = "daily") -> LossMatrix:
    """Squared-error losses per model at ``horizon``.

    With ``aggregate="daily"`` each row is one target date and holds the
    mean squared error over that day's quotes; a date is kept only if every
    model has forecasts there over the same number of quotes. With
    ``aggregate="quote"`` every quote forecast by all models is its own row.
    """
    if aggregate not in ("daily", "quote"):
        raise ValueError("aggregate must be 'daily' or 'quote'")
    frame = fset.records if hasattr(fset, "records") else fset
    frame = frame[frame["h"] == horizon]
    if models is not None:
        frame = frame[frame["model"].isin(list(models))]
    if frame.empty:
        raise NoCommonDates(f"no forecasts at h={horizon}")
    order = list(models) if models is not None else list(pd.unique(frame["model"]))
    sq = (frame["real_iv"].to_numpy(float) - frame["pred_iv"].to_numpy(float)) ** 2
    frame = frame.assign(_sq=sq)
    if aggregate == "daily":
        daily = frame.groupby(["target_date", "model"], sort=True)["_sq"].agg(["mean", "size"]).unstack("model")
        loss = daily["mean"].reindex(columns=order)
        count = daily["size"].reindex(columns=order)
        keep = loss.notna().all(axis=1) & count.nunique(axis=1).eq(1)
    else:
        key = ["target_date", "moneyness", "maturity"]
        frame = frame.assign(_occ=frame.groupby(key + ["model"]).cumcount())
        loss = frame.pivot_table(index=key + ["_occ"], columns="model", values="_sq", sort=True).reindex(columns=order)
        keep = loss.notna().all(axis=1)
    loss = loss[keep]
    if loss.empty:
        raise NoCommonDates(f"no date has forecasts from every model at h={horizon}")
    dates = tuple(loss.index) if aggregate == "daily" else tuple(loss.index.get_level_values(0))
    return LossMatrix(loss.to_numpy(), tuple(order), dates)


def _ar_significant(d: np.ndarray, p: int) -> int:
    n = d.size
    if float(np.ptp(d)) == 0.0:
        return 0
    rows = np.arange(p, n)
    X = np.column_stack([np.ones(rows.size)] + [d[rows - i - 1] for i in range(p)])
    y = d[rows]
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * diag.max():
        return 0
    coef = np.linalg.solve(R, Q.T @ y)
    r = y - X @ coef
    dof = rows.size - X.shape[1]
    s2 = float(r @ r) / dof
    Rinv = np.linalg.inv(R)
    se = np.sqrt(s2 * np.sum(Rinv * Rinv, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, 0.0)
    return int(np.sum(np.abs(t[1:]) > T_CRIT))


def block_length(losses: LossMatrix, p_cap: int = 5) -> int:
    """Largest count of significant AR(p_cap) lag coefficients over all model pairs, at least 1."""
    L = losses.losses
    if L.shape[0] <= 2 * p_cap + 2:
        raise SeriesTooShort(f"{L.shape[0]} days are too few for AR({p_cap}) fits")
    best = 0
    for i in range(L.shape[1]):
        for j in range(i + 1, L.shape[1]):
            best = max(best, _ar_significant(L[:, i] - L[:, j], p_cap))
    return max(best, 1)


@dataclass
class BootstrapVariances:
    """Bootstrap replicates of the mean losses and Var(d_ij) for every pair."""

    mean_losses: np.ndarray
    replicate_means: np.ndarray
    variances: np.ndarray
    degenerate: np.ndarray
    block_len: int

    def pair_variance(self, i: int, j: int) -> float:
        return float(self.variances[i, j])


def block_starts(n: int, block_len: int, n_boot: int, seed: int) -> np.ndarray:
    """Block start indices, one row per replicate, drawn once from ``seed``."""
    n_blocks = math.ceil(n / block_len)
    rng = np.random.default_rng(seed)
    return rng.integers(0, n - block_len + 1, size=(n_boot, n_blocks), dtype=np.int64)


def bootstrap_variances(losses: LossMatrix, block_len: int, n_boot: int = 5000, seed: int = 0) -> BootstrapVariances:
    """Moving-block bootstrap variances of all pairwise mean loss differentials.

    Every replicate applies one resample of day indices to all models, so
    cross-model dependence is kept. Variances below 1e-16 mark the pair as
    tied and raise a :class:`DegenerateVariance` warning.
    """
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    n = losses.n
    if not 1 <= block_len <= n:
        raise ValueError("block_len must lie in [1, n]")
    starts = block_starts(n, block_len, n_boot, seed)
    reps = kernels.block_bootstrap_means(losses.losses, starts, int(block_len))
    dstar = reps[:, :, None] - reps[:, None, :]
    var = dstar.var(axis=0, ddof=1)
    degenerate = var < DEGENERATE_VAR
    np.fill_diagonal(degenerate, False)
    if degenerate.any():
        pairs = [(losses.model_ids[i], losses.model_ids[j]) for i, j in zip(*np.nonzero(np.triu(degenerate)))]
        warnings.warn(f"zero bootstrap variance, treated as ties: {pairs}", DegenerateVariance, stacklevel=2)
    return BootstrapVariances(losses.losses.mean(axis=0), reps, var, degenerate, int(block_len))


@dataclass
class MCSResult:
    surviving: tuple
    elimination_order: list
    mcs_pvalues: dict
    alpha: float
    n_boot: int
    block_len: int
    model_ids: tuple = ()
    step_pvalues: list = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        step = {m: k + 1 for k, (m, _) in enumerate(self.elimination_order)}
        rows = []
        for m in self.model_ids:
            rows.append(
                {
                    "model": m,
                    "eliminated_at_step": step.get(m, pd.NA),
                    "p_value": self.mcs_pvalues[m],
                    "survivor": m in self.surviving,
                }
            )
        frame = pd.DataFrame(rows, columns=MCS_COLUMNS)
        frame["eliminated_at_step"] = frame["eliminated_at_step"].astype("Int64")
        return frame

    def to_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def _t_stats(dbar, var, degenerate):
    usable = ~degenerate
    np.fill_diagonal(usable, False)
    t = np.zeros_like(dbar)
    t[usable] = dbar[usable] / np.sqrt(var[usable])
    return t


def run_mcs(
    losses: LossMatrix,
    alpha: float = 0.25,
    n_boot: int = 5000,
    seed: int = 0,
    block_len: int | None = None,
    p_cap: int = 5,
) -> MCSResult:
    """Sequential elimination with the range statistic T_R = max |t_ij|.

    The full elimination sequence is computed; models whose running-maximum
    p-value stays below ``alpha`` form the eliminated set and the rest
    survive with p-value 1.
    """
    if not 0 < alpha <= 0.5:
        raise ValueError("alpha must lie in (0, 0.5]")
    if block_len is None:
        block_len = block_length(losses, p_cap)
    boot = bootstrap_variances(losses, block_len, n_boot, seed)
    mbar = boot.mean_losses
    dbar = mbar[:, None] - mbar[None, :]
    t_all = _t_stats(dbar, boot.variances, boot.degenerate)
    centred = boot.replicate_means - mbar
    usable = ~boot.degenerate
    np.fill_diagonal(usable, False)
    scale = np.zeros_like(boot.variances)
    scale[usable] = 1.0 / np.sqrt(boot.variances[usable])

    alive = list(range(losses.m))
    sequence = []
    while len(alive) > 1:
        idx = np.array(alive)
        t = t_all[np.ix_(idx, idx)]
        stat = float(np.abs(t).max())
        sub = centred[:, idx]
        tstar = np.abs(sub[:, :, None] - sub[:, None, :]) * scale[np.ix_(idx, idx)][None]
        null = tstar.reshape(n_boot, -1).max(axis=1)
        pval = float(np.mean(null >= stat)) if stat > 0 else 1.0
        worst = int(idx[int(np.argmax(t.max(axis=1)))])
        sequence.append((losses.model_ids[worst], pval))
        alive.remove(worst)

    ids = losses.model_ids
    eliminated, pvals, running = [], {}, 0.0
    for model, p in sequence:
        running = max(running, p)
        if running >= alpha:
            break
        eliminated.append((model, p))
        pvals[model] = running
    surviving = tuple(m for m in ids if m not in pvals)
    for m in surviving:
        pvals[m] = 1.0
    return MCSResult(surviving, eliminated, pvals, alpha, n_boot, int(block_len), ids, sequence)
