"""Command-line driver: ``ivsforecast {generate,fit,run,evaluate,mcs,report}``.

Every command takes a YAML config (``--config``) whose values can be
overridden by flags. Commands that produce results also write
``manifest.yaml``: the fully resolved config plus the library version, which
can be passed back through ``--config`` to replay the run.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 compute error.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from . import cross_section as cs
from . import evaluation as ev
from . import harness
from . import mcs
from .errors import ComputeError, ConfigError, DataError, InvalidConfig, NoRunFound
from .surface_data import (
    MaturityGroupRule,
    emit_csv,
    generate_synthetic_with_truth,
    ingest_csv,
    prepare_series,
    synthetic_config_from_dict,
)

log = logging.getLogger("ivsforecast")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_COMPUTE = 0, 2, 3, 4
MANIFEST = "manifest.yaml"
FORECASTS = "forecasts.csv"
METADATA_KEYS = ("library_version", "command")

DEFAULT_CONFIG = {
    "seed": None,
    "output_dir": "ivs_run",
    "threads": 1,
    "commodity": "synthetic",
    "data": {
        "source": "synthetic",
        "csv": None,
        "schema": None,
        "convenience_yield_slope": None,
        "synthetic": {},
    },
    "filters": {
        "moneyness": [90.0, 110.0],
        "maturity": [1.0 / 12.0, 2.0],
        "liquidity": {"group_edges": [1, 6, 12, 18, 24], "min_quotes_per_group": 15000, "min_quotes_per_day": 5},
        "liquidity_span": "full",
    },
    "rolling": {
        "window_len": 1167,
        "n_oos": 500,
        "horizons": list(harness.dyn.HORIZONS),
        "models": list(harness.MODEL_IDS),
        "p_max": 5,
        "q_max": 3,
        "d_max": 2,
        "max_leaves": 10,
        "min_leaf": 5,
        "cv_folds": 10,
        "lambda_policy": "frozen",
        "lam": None,
        "alpha_star": None,
    },
    "evaluation": {
        "metrics": list(ev.METRICS),
        "ssr_anchor": "quote",
        "benchmarks": ["GG-RW", "CT-RW"],
    },
    "mcs": {"enabled": True, "alpha": 0.25, "n_boot": 5000, "p_cap": 5, "loss": "daily"},
}

# keys whose values are free-form mappings rather than nested config sections
_OPEN_KEYS = {("data", "synthetic"), ("data", "schema"), ("filters", "liquidity")}


# --------------------------------------------------------------------- config


def _merge(base: dict, update: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = path + (key,)
        if key not in base:
            raise InvalidConfig(f"unknown config key {'.'.join(where)}")
        if isinstance(base[key], dict) and where not in _OPEN_KEYS:
            if not isinstance(value, dict):
                raise InvalidConfig(f"{'.'.join(where)} must be a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _csv_list(text: str, cast=str) -> list:
    try:
        return [cast(tok.strip()) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise InvalidConfig(f"cannot parse list {text!r}") from exc


def load_config(args) -> dict:
    """Defaults, then the config file, then flag overrides."""
    user = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                user = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise InvalidConfig(f"cannot read config {args.config}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise InvalidConfig(f"malformed config {args.config}: {exc}") from exc
        if not isinstance(user, dict):
            raise InvalidConfig("config file must hold a mapping")
        for key in METADATA_KEYS:
            user.pop(key, None)
    cfg = _merge(DEFAULT_CONFIG, user)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["output_dir"] = args.out
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
    if getattr(args, "horizons", None):
        cfg["rolling"]["horizons"] = _csv_list(args.horizons, int)
    if getattr(args, "models", None):
        cfg["rolling"]["models"] = _csv_list(args.models)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if cfg["seed"] is None:
        raise InvalidConfig("a seed is required (config 'seed' or --seed)")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise InvalidConfig("seed must be a non-negative integer")
    if not isinstance(cfg["threads"], int) or cfg["threads"] < 1:
        raise InvalidConfig("threads must be a positive integer")
    src = cfg["data"]["source"]
    if src not in ("synthetic", "csv"):
        raise InvalidConfig("data.source must be 'synthetic' or 'csv'")
    if src == "csv" and not cfg["data"]["csv"]:
        raise InvalidConfig("data.csv path required for a csv source")
    if src == "synthetic":
        synthetic_config_from_dict(cfg["data"]["synthetic"])
    rolling_config(cfg)
    bad = [m for m in cfg["evaluation"]["metrics"] if m not in ev.METRICS]
    if bad:
        raise InvalidConfig(f"unknown metrics {bad}")
    if cfg["evaluation"]["ssr_anchor"] not in ("quote", "fit"):
        raise InvalidConfig("evaluation.ssr_anchor must be 'quote' or 'fit'")
    m = cfg["mcs"]
    if not 0 < float(m["alpha"]) <= 0.5:
        raise InvalidConfig("mcs.alpha must lie in (0, 0.5]")
    if int(m["n_boot"]) < 100:
        raise InvalidConfig("mcs.n_boot must be at least 100")
    if m["loss"] not in ("daily", "quote"):
        raise InvalidConfig("mcs.loss must be 'daily' or 'quote'")
    if cfg["filters"]["liquidity_span"] not in ("full", "in_sample"):
        raise InvalidConfig("filters.liquidity_span must be 'full' or 'in_sample'")
    liquidity_rule(cfg)


def rolling_config(cfg: dict) -> harness.RollingConfig:
    try:
        return harness.RollingConfig(threads=cfg["threads"], **cfg["rolling"])
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc


def liquidity_rule(cfg: dict) -> MaturityGroupRule | None:
    liq = cfg["filters"]["liquidity"]
    if liq is None:
        return None
    try:
        return MaturityGroupRule(**liq)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"filters.liquidity: {exc}") from exc


def write_manifest(cfg: dict, out_dir: Path, command: str) -> None:
    doc = copy.deepcopy(cfg)
    doc["library_version"] = __version__
    doc["command"] = command
    with (out_dir / MANIFEST).open("w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True, default_flow_style=False)


# ----------------------------------------------------------------------- data


def load_series(cfg: dict, prepare: bool = True):
    data = cfg["data"]
    if data["source"] == "csv":
        series = ingest_csv(
            data["csv"],
            data["schema"],
            commodity_tag=cfg["commodity"],
            convenience_yield_slope=data["convenience_yield_slope"],
        )
    else:
        synth = synthetic_config_from_dict({"commodity_tag": cfg["commodity"], **data["synthetic"]})
        series, _ = generate_synthetic_with_truth(synth, cfg["seed"])
    if not prepare:
        return series
    f = cfg["filters"]
    return prepare_series(
        series,
        tuple(f["moneyness"]),
        tuple(f["maturity"]),
        liquidity_rule(cfg),
        count_panels=cfg["rolling"]["window_len"] if f["liquidity_span"] == "in_sample" else None,
    )


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=harness.CSV_FLOAT_FORMAT, lineterminator="\n")


def _prepare_out(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------- commands


def cmd_generate(cfg: dict) -> Path:
    """Write a synthetic panel CSV and its ground-truth coefficients."""
    synth = synthetic_config_from_dict({"commodity_tag": cfg["commodity"], **cfg["data"]["synthetic"]})
    series, truth = generate_synthetic_with_truth(synth, cfg["seed"])
    cols = [f"c{i}" for i in range(truth.shape[1])]
    truth_frame = pd.DataFrame(truth, columns=cols)
    truth_frame.insert(0, "model", synth.model)
    truth_frame.insert(0, "date", [d.isoformat() for d in series.dates])
    truth_frame["lambda"] = synth.lam if synth.model == "CT" else np.nan
    out = _prepare_out(cfg)
    emit_csv(series, out / "panels.csv")
    _write_csv(truth_frame, out / "truth.csv")
    write_manifest(cfg, out, "generate")
    return out


def cmd_fit(cfg: dict) -> Path:
    """Daily GG and CT cross-section fits with the in-sample frozen decay rate."""
    series = load_series(cfg)
    window = min(cfg["rolling"]["window_len"], len(series))
    stage1 = cs.fit_ct_stage1(list(series)[:window])
    lam = cfg["rolling"]["lam"] or cs.fix_lambda(stage1)
    rows = []
    for panel in series:
        for model in ("GG", "CT"):
            try:
                rows.append(cs.fit_model(model, panel, lam))
            except (ComputeError, ValueError) as exc:
                log.warning("%s fit failed on %s: %s", model, panel.date, exc)
    lam_frame = pd.DataFrame(
        {
            "date": [e.date.isoformat() for e in stage1],
            "lambda": [e.lam for e in stage1],
            "sse": [e.sse for e in stage1],
            "at_bound": [e.at_bound for e in stage1],
        }
    )
    out = _prepare_out(cfg)
    cs.write_coefficients_csv(rows, out / "coefficients.csv")
    _write_csv(lam_frame, out / "lambda_stage1.csv")
    write_manifest(cfg, out, "fit")
    return out


def evaluate_tables(fset, cfg: dict) -> dict[str, pd.DataFrame]:
    """Score tables keyed by output file name."""
    anchor = cfg["evaluation"]["ssr_anchor"]
    commodity = cfg["commodity"]
    scores = ev.bucket_scores(fset, ev.BucketScheme(), anchor=anchor)
    scores.insert(0, "commodity", commodity)
    tables = {"scores.csv": scores}
    for metric in cfg["evaluation"]["metrics"]:
        tables[f"{metric}.csv"] = ev.wide_table(scores, metric, commodity)
    models = set(fset.models)
    ratios = []
    for bench in cfg["evaluation"]["benchmarks"]:
        if bench not in models:
            continue
        family = [m for m in fset.models if m.split("-")[0] == bench.split("-")[0]]
        r = ev.rmse_ratio(fset.select(model=family), bench, ev.BucketScheme())
        r.insert(0, "benchmark", bench)
        ratios.append(r)
    if ratios:
        tables["rmse_ratio.csv"] = pd.concat(ratios, ignore_index=True)
    return tables


def mcs_tables(fset, cfg: dict, horizons) -> dict[str, pd.DataFrame]:
    m = cfg["mcs"]
    tables = {}
    models = fset.models
    for h in horizons:
        name = f"mcs_h{h}.csv"
        if len(models) < 2:
            tables[name] = _empty_mcs(models)
            continue
        try:
            losses = mcs.build_losses(fset, h, models, aggregate=m["loss"])
        except ComputeError as exc:
            log.warning("MCS skipped at h=%d: %s", h, exc)
            tables[name] = _empty_mcs(models)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=mcs.DegenerateVariance)
            result = mcs.run_mcs(losses, float(m["alpha"]), int(m["n_boot"]), cfg["seed"], p_cap=int(m["p_cap"]))
        tables[name] = result.to_frame()
    return tables


def _empty_mcs(models) -> pd.DataFrame:
    frame = pd.DataFrame(
        {"model": list(models), "eliminated_at_step": pd.NA, "p_value": np.nan, "survivor": pd.NA},
        columns=mcs.MCS_COLUMNS,
    )
    frame["eliminated_at_step"] = frame["eliminated_at_step"].astype("Int64")
    return frame


def cmd_run(cfg: dict) -> Path:
    """Rolling forecasts, metric tables and MCS tables for one configuration."""
    rcfg = rolling_config(cfg)
    series = load_series(cfg)
    fset = harness.run_rolling(series, rcfg, seed=cfg["seed"])
    if len(fset) == 0:
        raise ComputeError("the run produced no forecasts")
    tables = evaluate_tables(fset, cfg)
    if cfg["mcs"]["enabled"]:
        tables.update(mcs_tables(fset, cfg, rcfg.horizons))
    out = _prepare_out(cfg)
    fset.to_csv(out / FORECASTS)
    for name, frame in tables.items():
        _write_csv(frame, out / name)
    harness.write_diagnostics(fset, out / "diagnostics.csv")
    harness.write_gaps(fset, out / "gaps.csv")
    frozen = pd.DataFrame({"lambda": [fset.lam], "alpha_star": [fset.alpha_star]})
    _write_csv(frozen, out / "frozen_parameters.csv")
    write_manifest(cfg, out, "run")
    return out


def _load_run(run_dir) -> tuple[dict, harness.ForecastSet]:
    run_dir = Path(run_dir)
    manifest = run_dir / MANIFEST
    forecasts = run_dir / FORECASTS
    if not manifest.is_file() or not forecasts.is_file():
        raise NoRunFound(f"{run_dir} holds no run outputs ({MANIFEST} and {FORECASTS})")
    with manifest.open(encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    for key in METADATA_KEYS:
        doc.pop(key, None)
    cfg = _merge(DEFAULT_CONFIG, doc)
    return cfg, harness.ForecastSet.from_csv(forecasts)


def cmd_evaluate(run_dir, out=None) -> Path:
    cfg, fset = _load_run(run_dir)
    target = Path(out) if out else Path(run_dir)
    tables = evaluate_tables(fset, cfg)
    target.mkdir(parents=True, exist_ok=True)
    for name, frame in tables.items():
        _write_csv(frame, target / name)
    return target


def cmd_mcs(run_dir, out=None, alpha=None, n_boot=None) -> Path:
    cfg, fset = _load_run(run_dir)
    if alpha is not None:
        cfg["mcs"]["alpha"] = alpha
    if n_boot is not None:
        cfg["mcs"]["n_boot"] = n_boot
    target = Path(out) if out else Path(run_dir)
    tables = mcs_tables(fset, cfg, fset.horizons)
    target.mkdir(parents=True, exist_ok=True)
    for name, frame in tables.items():
        _write_csv(frame, target / name)
    return target


_LOWER_IS_BETTER = {"rmse": True, "rmspe": True, "mape": True, "ssr": False}


def report_frames(cfg: dict, fset) -> dict[str, pd.DataFrame]:
    """Long-format metric table with a ``best`` flag per (commodity, horizon, metric)."""
    scores = ev.score_table(fset, anchor=cfg["evaluation"]["ssr_anchor"])
    scores.insert(0, "commodity", cfg["commodity"])
    long = scores.melt(
        id_vars=["model", "h", "commodity"], value_vars=list(cfg["evaluation"]["metrics"]),
        var_name="metric", value_name="value",
    )
    best = []
    for _, grp in long.groupby(["commodity", "h", "metric"], sort=False):
        vals = grp["value"].to_numpy(dtype=float)
        ok = np.isfinite(vals)
        flag = np.zeros(vals.size, dtype=bool)
        if ok.any():
            target = np.nanmin(vals) if _LOWER_IS_BETTER[grp["metric"].iloc[0]] else np.nanmax(vals)
            flag = ok & (vals == target)
        best.append(pd.Series(flag, index=grp.index))
    long["best"] = pd.concat(best).reindex(long.index).to_numpy()
    long = long[["model", "h", "commodity", "metric", "value", "best"]]
    frames = {"report_long.csv": long}
    for metric in cfg["evaluation"]["metrics"]:
        frames[f"{metric}_table.csv"] = ev.wide_table(scores, metric, cfg["commodity"])
    return frames


def cmd_report(run_dir, out=None) -> Path:
    """Readable tables and a long-format CSV for plotting; written to ``run_dir/report``."""
    cfg, fset = _load_run(run_dir)
    frames = report_frames(cfg, fset)
    target = Path(out) if out else Path(run_dir) / "report"
    target.mkdir(parents=True, exist_ok=True)
    lines = []
    long = frames["report_long.csv"]
    for metric in cfg["evaluation"]["metrics"]:
        sub = long[long["metric"] == metric]
        table = sub.pivot_table(index="model", columns="h", values="value", sort=False)
        marks = sub.pivot_table(index="model", columns="h", values="best", aggfunc="any", sort=False)
        shown = table.map(lambda v: "nan" if not math.isfinite(v) else f"{v:.6g}")
        shown = shown.where(~marks.astype(bool), shown + "*")
        lines.append(f"{metric} ({cfg['commodity']}); * marks the best model per horizon")
        lines.append(shown.to_string())
        lines.append("")
    for path in sorted(Path(run_dir).glob("mcs_h*.csv")):
        lines.append(f"model confidence set, {path.stem[4:]}")
        lines.append(pd.read_csv(path).to_string(index=False))
        lines.append("")
    for name, frame in frames.items():
        _write_csv(frame, target / name)
    (target / "report.txt").write_text("\n".join(lines), encoding="utf-8")
    return target


# ------------------------------------------------------------------------ CLI


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ivsforecast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, run_flags=True):
        p.add_argument("--config", help="YAML config or a previous manifest.yaml")
        p.add_argument("--seed", type=int, help="random seed (required here or in the config)")
        p.add_argument("--out", help="output directory")
        if run_flags:
            p.add_argument("--threads", type=int, help="worker threads for the rolling loop")
            p.add_argument("--horizons", help="comma-separated horizons, e.g. 1,5")
            p.add_argument("--models", help="comma-separated model ids, e.g. RT,CT-AR")

    common(sub.add_parser("generate", help="write a synthetic panel CSV and its ground truth"), run_flags=False)
    common(sub.add_parser("fit", help="fit daily GG and CT cross-sections"))
    common(sub.add_parser("run", help="rolling forecasts, metrics and MCS"))
    for name, text in (("evaluate", "recompute metric tables"), ("mcs", "recompute MCS tables"), ("report", "render tables")):
        p = sub.add_parser(name, help=f"{text} for an existing run directory")
        p.add_argument("run_dir")
        p.add_argument("--out", help="output directory (defaults inside the run directory)")
        if name == "mcs":
            p.add_argument("--alpha", type=float)
            p.add_argument("--n-boot", type=int, dest="n_boot")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command in ("generate", "fit", "run"):
            cfg = load_config(args)
            out = {"generate": cmd_generate, "fit": cmd_fit, "run": cmd_run}[args.command](cfg)
        elif args.command == "evaluate":
            out = cmd_evaluate(args.run_dir, args.out)
        elif args.command == "mcs":
            out = cmd_mcs(args.run_dir, args.out, args.alpha, args.n_boot)
        else:
            out = cmd_report(args.run_dir, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ComputeError as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    log.info("outputs in %s", out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
