"""End-to-end pipeline: snapshot -> datasets -> estimates -> report tables."""

from __future__ import annotations

import datetime as dt
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import scipy

import maskroadmap
from maskroadmap.config import RunConfig
from maskroadmap.dataset import (
    LOOKBACKS,
    PANEL_COLUMNS,
    POLICY_COLUMNS,
    STATES,
    STATIC_COLUMNS,
    AnalysisDataset,
    DataError,
    atomic_write_text,
    build_dataset,
    format_table1,
    load_snapshot,
    read_policies,
    secondary_target_dates,
    summarize_table1,
    write_dataset,
)
from maskroadmap.estimators import (
    EstimationError,
    PropensitySummary,
    fit_nuisance,
    gcomp_estimate,
    tmle_estimate,
    unadjusted_estimate,
)

log = logging.getLogger(__name__)

ENDPOINT_LABEL = {"cases": "Cases", "deaths": "Deaths"}


class CellError(RuntimeError):
    """A failure inside one (endpoint, horizon) cell; `cause` is the original error."""

    def __init__(self, endpoint: str, horizon: int, cause: Exception):
        super().__init__(f"[{endpoint}, {horizon} days] {type(cause).__name__}: {cause}")
        self.endpoint = endpoint
        self.horizon = horizon
        self.cause = cause


# ---------------------------------------------------------------- validation


def validate_snapshot(directory: Path | str, config: RunConfig | None = None) -> list[str]:
    """Schema and coverage problems in a snapshot directory; empty when valid.

    Checks headers, that all 50 states are present, that cumulative series
    never decrease, and that every date needed by the configured targets and
    horizons (or the primary design when `config` is None) is covered.
    """
    directory = Path(directory)
    problems: list[str] = []
    if not directory.is_dir():
        return [f"{directory}: not a directory"]
    frames: dict[str, pd.DataFrame] = {}
    required = {"panel.csv": PANEL_COLUMNS, "policies.csv": POLICY_COLUMNS, "static_covariates.csv": ("state",) + STATIC_COLUMNS}
    for name, cols in required.items():
        path = directory / name
        if not path.is_file():
            problems.append(f"{name}: missing file")
            continue
        try:
            df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
        except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
            problems.append(f"{name}: unreadable ({exc})")
            continue
        missing = [c for c in cols if c not in df.columns]
        if missing:
            problems.append(f"{name}: missing columns {missing}")
            continue
        frames[name] = df
    for name in ("panel.csv", "static_covariates.csv"):
        if name in frames:
            absent = sorted(set(STATES) - set(frames[name]["state"]))
            if absent:
                problems.append(f"{name}: missing states {absent}")
    if "static_covariates.csv" in frames:
        static = frames["static_covariates.csv"]
        for col in STATIC_COLUMNS:
            blank = static.loc[static[col] == "", "state"].tolist()
            if blank:
                problems.append(f"static_covariates.csv: {col} blank for {blank}")
    if "panel.csv" not in frames:
        return problems
    panel = frames["panel.csv"]
    try:
        dates = pd.Series([dt.date.fromisoformat(d) for d in panel["date"]], index=panel.index)
    except ValueError as exc:
        return problems + [f"panel.csv: bad date ({exc})"]
    numeric = panel[["cum_cases", "cum_deaths", "cum_tests"]].apply(pd.to_numeric, errors="coerce")
    coverage: dict[str, set[dt.date]] = {}
    for state, idx in panel.groupby("state").groups.items():
        order = dates.loc[idx].sort_values()
        coverage[state] = set(order)
        for col in numeric.columns:
            v = numeric.loc[order.index, col].to_numpy()
            if np.isnan(v).any():
                problems.append(f"panel.csv: {state} {col} has missing or non-numeric values")
                continue
            drops = np.flatnonzero(np.diff(v) < 0)
            for k in drops:
                problems.append(f"panel.csv: {state} {col} decreases on {order.iloc[k + 1]}")
    problems += _coverage_problems(directory, frames, coverage, config)
    return problems


def _coverage_problems(directory, frames, coverage, config: RunConfig | None) -> list[str]:
    if config is None or config.mode == "primary_sep1":
        date = config.target_date if config else dt.date(2020, 9, 1)
        targets = {s: date for s in STATES}
    elif config.mode == "custom":
        targets = dict(config.custom_targets)
    else:
        if "policies.csv" not in frames:
            return []
        try:
            policies = read_policies(directory / "policies.csv")
        except (DataError, ValueError) as exc:
            return [f"policies.csv: {exc}"]
        targets = secondary_target_dates(policies, STATES, config.sah_fallback, config.window_end)[0].to_dict()
    horizons = config.horizons if config else (21, 30, 45, 60)
    problems = []
    for state, target in sorted(targets.items()):
        have = coverage.get(state)
        if have is None:
            continue
        needed = [target - dt.timedelta(days=d) for d in LOOKBACKS] + [target] + [target + dt.timedelta(days=h) for h in horizons]
        gaps = [d.isoformat() for d in needed if d not in have]
        if gaps:
            problems.append(f"panel.csv: {state} lacks dates {gaps}")
    return problems


# ---------------------------------------------------------------- estimation


@dataclass
class CellResult:
    endpoint: str
    horizon: int
    records: dict[str, dict[str, Any]]
    propensity: dict[str, float] | None


def _run_cell(args) -> CellResult:
    config, dataset = args
    endpoint, horizon = dataset.outcome_spec["endpoint"], dataset.outcome_spec["horizon_days"]
    try:
        records: dict[str, dict[str, Any]] = {}
        nuisance = None
        if {"tmle", "gcomp"} & set(config.estimators):
            nuisance = fit_nuisance(dataset, config.q_config, config.g_config, config.gbound, config.seed)
        for name in config.estimators:
            if name == "tmle":
                est = tmle_estimate(dataset, nuisance=nuisance, seed=config.seed)
            elif name == "gcomp":
                est = gcomp_estimate(dataset, nuisance=nuisance, seed=config.seed)
            else:
                est = unadjusted_estimate(dataset)
            records[name] = {"endpoint": endpoint, "horizon": horizon, **est.to_record()}
        prop = records["tmle"]["propensity"] if "tmle" in records else (records.get("gcomp") or {}).get("propensity")
        return CellResult(endpoint, horizon, records, prop)
    except (EstimationError, DataError, ValueError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise CellError(endpoint, horizon, exc) from exc


def build_datasets(config: RunConfig, snapshot=None) -> list[AnalysisDataset]:
    snapshot = snapshot or load_snapshot(config.data_dir)
    out = []
    for endpoint, horizon in config.cells:
        try:
            out.append(build_dataset(snapshot, endpoint, horizon, config.targets, config.date_key))
        except DataError as exc:
            raise CellError(endpoint, horizon, exc) from exc
    return out


def estimate_cells(config: RunConfig, datasets: list[AnalysisDataset]) -> list[CellResult]:
    """Estimate every cell; results come back in grid order whatever `n_jobs` is."""
    args = [(config, ds) for ds in datasets]
    if config.n_jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(config.n_jobs, len(args))) as pool:
            return list(pool.map(_run_cell, args))
    return [_run_cell(a) for a in args]


# ---------------------------------------------------------------- tables


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _cell(point: float, ci) -> str:
    return f"{_fmt(point)} ({_fmt(ci[0])}, {_fmt(ci[1])})"


def effect_row(rec: dict[str, Any]) -> dict[str, str]:
    return {
        "At": f"{rec['horizon']} days",
        "Early (95% CI)": _cell(rec["psi1"], rec["ci_psi1"]),
        "Delayed (95% CI)": _cell(rec["psi0"], rec["ci_psi0"]),
        "RR (95% CI)": _cell(rec["rr"], rec["ci_rr"]),
        "RD (95% CI)": _cell(rec["rd"], rec["ci_rd"]),
    }


def table2(records: list[dict[str, Any]]) -> pd.DataFrame:
    rows = [{"Outcome": ENDPOINT_LABEL[r["endpoint"]], **effect_row(r)} for r in records if r["estimator"] == "tmle"]
    return pd.DataFrame(rows)


def comparison_table(records: list[dict[str, Any]], endpoint: str) -> pd.DataFrame:
    """TMLE beside the other estimators for one endpoint."""
    order = {"tmle": 0, "unadjusted": 1, "gcomp": 2}
    label = {"tmle": "TMLE", "unadjusted": "Unadjusted", "gcomp": "G-computation"}
    sel = sorted((r for r in records if r["endpoint"] == endpoint), key=lambda r: (order[r["estimator"]], r["horizon"]))
    return pd.DataFrame([{"Estimator": label[r["estimator"]], **effect_row(r)} for r in sel])


def etable3(records: list[dict[str, Any]]) -> pd.DataFrame:
    rows = []
    for r in records:
        if r["estimator"] != "tmle":
            continue
        rows.append({"Outcome": ENDPOINT_LABEL[r["endpoint"]], "At": f"{r['horizon']} days", **{k: f"{v:.3f}" for k, v in r["propensity"].items()}})
    return pd.DataFrame(rows, columns=["Outcome", "At", *PropensitySummary.LABELS])


def figure2_series(records: list[dict[str, Any]]) -> pd.DataFrame:
    rows = [
        {"endpoint": r["endpoint"], "horizon": r["horizon"], "rr": r["rr"], "ci_lo": r["ci_rr"][0], "ci_hi": r["ci_rr"][1]}
        for r in records
        if r["estimator"] == "tmle"
    ]
    return pd.DataFrame(rows, columns=["endpoint", "horizon", "rr", "ci_lo", "ci_hi"])


def _write_csv(df: pd.DataFrame, path: Path, float_format: str | None = None) -> None:
    atomic_write_text(path, df.to_csv(index=False, lineterminator="\n", float_format=float_format))


def render_reports(records: list[dict[str, Any]], out_dir: Path | str, mode: str) -> list[Path]:
    """Write the estimate tables derived from ``estimates.json`` records."""
    out_dir = Path(out_dir)
    written = []
    if any(r["estimator"] == "tmle" for r in records):
        for name, df in (("table2.csv", table2(records)), ("etable3.csv", etable3(records))):
            _write_csv(df, out_dir / name)
            written.append(out_dir / name)
        _write_csv(figure2_series(records), out_dir / "figure2_series.csv", "%.10g")
        written.append(out_dir / "figure2_series.csv")
    prefix = "etable2" if mode == "secondary_sah" else "etable1"
    for endpoint, suffix in (("cases", "a"), ("deaths", "b")):
        if any(r["endpoint"] == endpoint for r in records):
            path = out_dir / f"{prefix}{suffix}.csv"
            _write_csv(comparison_table(records, endpoint), path)
            written.append(path)
    return written


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (dt.date, Path)):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def run_pipeline(config: RunConfig, write_datasets: bool = True) -> Path:
    """Run every (endpoint, horizon) cell and write all reports to ``config.output_dir``."""
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    snapshot = load_snapshot(config.data_dir)
    datasets = build_datasets(config, snapshot)
    if write_datasets:
        for ds in datasets:
            write_dataset(ds, out / "datasets")
    _write_csv(format_table1(summarize_table1(datasets[0])), out / "table1.csv")
    results = estimate_cells(config, datasets)
    records = [rec for res in results for rec in res.records.values()]
    atomic_write_text(out / "estimates.json", dumps(records))
    render_reports(records, out, config.mode)
    manifest = {
        "config": config.to_dict(),
        "seed": config.seed,
        "input_checksums": snapshot.checksums,
        "versions": {
            "maskroadmap": maskroadmap.__version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        "targets": datasets[0].metadata.get("targets", {}),
        "target_dates": datasets[0].outcome_spec["target_dates"],
        "notes": (
            ["secondary mode: outcome horizons and covariate windows are anchored at each state's own target date"]
            if config.mode == "secondary_sah"
            else []
        ),
        "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }
    atomic_write_text(out / "run_manifest.json", dumps(manifest))
    return out
