"""Ingest frozen state-level snapshots and build the analysis dataset (W, A, Y).

A snapshot directory holds three UTF-8 CSV files:

``panel.csv``
    state, date, cum_cases, cum_deaths, cum_tests, mobility_residential_pct
``policies.csv``
    state, kind, mask_level, issued, enacted, expired, end
``static_covariates.csv``
    state plus the demographic, commuting and political columns in
    :data:`STATIC_COLUMNS` (and optionally :data:`DESCRIPTIVE_COLUMNS`)
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import pandas as pd

STATES = (
    "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DE", "FL", "GA",
    "HI", "IA", "ID", "IL", "IN", "KS", "KY", "LA", "MA", "MD",
    "ME", "MI", "MN", "MO", "MS", "MT", "NC", "ND", "NE", "NH",
    "NJ", "NM", "NV", "NY", "OH", "OK", "OR", "PA", "RI", "SC",
    "SD", "TN", "TX", "UT", "VA", "VT", "WA", "WI", "WV", "WY",
)  # fmt: skip

PRIMARY_TARGET = dt.date(2020, 9, 1)
SAH_FALLBACK_TARGET = dt.date(2020, 5, 15)
HORIZONS = (21, 30, 45, 60)
ENDPOINTS = ("cases", "deaths")
LOOKBACKS = (30, 14, 7)
MOBILITY_LOOKBACKS = (14, 7)

PANEL_COLUMNS = ("state", "date", "cum_cases", "cum_deaths", "cum_tests", "mobility_residential_pct")
POLICY_COLUMNS = ("state", "kind", "mask_level", "issued", "enacted", "expired", "end")

STATIC_COLUMNS = (
    "pct_age65plus",
    "pct_black",
    "pct_hispanic",
    "pct_asian",
    "pct_mixed_race",
    "pct_white",
    "median_age",
    "pct_households_below_poverty",
    "pct_people_below_poverty",
    "pct_smoker",
    "pct_diabetic",
    "pop_density",
    "pct_commute_drive",
    "pct_commute_work_from_home",
    "pct_commute_public_transit",
    "pct_commute_bike",
    "pct_commute_walk",
    "pct_commute_other",
    "total_population",
    "republican",
)
# summarized in Table 1 but never used for adjustment
DESCRIPTIVE_COLUMNS = ("pct_urban_2010",)

MASKING_KINDS = ("public_masking", "business_masking", "school_masking")
POLICY_KINDS = MASKING_KINDS + (
    "stay_at_home",
    "gathering_restriction",
    "restaurant_restriction",
    "business_closure_nonessential",
    "business_closure_other",
)
EVER_POLICY_KINDS = (
    "stay_at_home",
    "gathering_restriction",
    "restaurant_restriction",
    "business_closure_nonessential",
    "business_closure_other",
    "business_masking",
    "school_masking",
)

ENDPOINT_COLUMN = {"cases": "cum_cases", "deaths": "cum_deaths", "tests": "cum_tests"}


def _dynamic_columns() -> tuple[str, ...]:
    cols = []
    for series in ("cases", "deaths", "tests"):
        cols += [f"{series}_per100k_{d}d" for d in LOOKBACKS]
    cols += [f"ever_{kind}" for kind in EVER_POLICY_KINDS]
    cols += [f"mobility_residential_{d}d" for d in MOBILITY_LOOKBACKS]
    return tuple(cols)


COVARIATE_COLUMNS = STATIC_COLUMNS + _dynamic_columns()
assert len(COVARIATE_COLUMNS) == 38


class DataError(ValueError):
    """Snapshot content cannot support the requested analysis."""


class PositivityError(DataError):
    """One exposure arm is empty."""


def _date(value) -> dt.date | None:
    if value is None or (isinstance(value, float) and np.isnan(value)) or value == "":
        return None
    if isinstance(value, pd.Timestamp):
        return value.date()
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(str(value))


# ---------------------------------------------------------------- domain types


@dataclass(frozen=True)
class PolicyRecord:
    state_id: str
    policy_kind: str
    mask_level: int | None = None
    issued_date: dt.date | None = None
    enacted_date: dt.date | None = None
    expired_date: dt.date | None = None
    end_date: dt.date | None = None

    def __post_init__(self):
        if self.policy_kind not in POLICY_KINDS:
            raise DataError(f"{self.state_id}: unknown policy kind {self.policy_kind!r}")
        masking = self.policy_kind in MASKING_KINDS
        if masking and self.mask_level not in (1, 2, 3):
            raise DataError(f"{self.state_id}: {self.policy_kind} needs mask_level in {{1,2,3}}, got {self.mask_level!r}")
        if not masking and self.mask_level is not None:
            raise DataError(f"{self.state_id}: mask_level given for non-masking policy {self.policy_kind}")
        if self.issued_date and self.enacted_date and self.enacted_date < self.issued_date:
            raise DataError(f"{self.state_id}: {self.policy_kind} enacted {self.enacted_date} before issued {self.issued_date}")

    def start(self, date_key: str = "enacted") -> dt.date | None:
        """Date the policy took effect; falls back to the issued date."""
        if date_key == "issued":
            return self.issued_date or self.enacted_date
        if date_key == "enacted":
            return self.enacted_date or self.issued_date
        raise ValueError(f"date_key must be 'enacted' or 'issued', got {date_key!r}")

    def termination(self) -> dt.date | None:
        return self.end_date or self.expired_date

    def in_place(self, date: dt.date, date_key: str = "enacted") -> bool:
        start = self.start(date_key)
        if start is None or start > date:
            return False
        for stop in (self.end_date, self.expired_date):
            if stop is not None:
                if stop < start:
                    raise DataError(f"{self.state_id}: {self.policy_kind} ends {stop} before it starts {start}")
                if stop < date:
                    return False
        return True


@dataclass(frozen=True)
class StatePanel:
    """Daily cumulative series for one state, indexed by calendar date."""

    state_id: str
    population: float
    series: pd.DataFrame

    def __post_init__(self):
        if not self.population > 0:
            raise DataError(f"{self.state_id}: population must be positive")

    @property
    def first_date(self) -> dt.date:
        return self.series.index[0]

    @property
    def last_date(self) -> dt.date:
        return self.series.index[-1]

    def value(self, column: str, date: dt.date) -> float:
        if date not in self.series.index:
            raise DataError(
                f"{self.state_id}: {date} is outside the series coverage "
                f"{self.first_date}..{self.last_date} or missing"
            )
        v = self.series.at[date, column]
        if pd.isna(v):
            raise DataError(f"{self.state_id}: {column} missing on {date}")
        return float(v)


@dataclass(frozen=True)
class Snapshot:
    panels: dict[str, StatePanel]
    policies: tuple[PolicyRecord, ...]
    static: pd.DataFrame
    source: Path | None = None
    checksums: dict[str, str] = field(default_factory=dict)

    @property
    def states(self) -> tuple[str, ...]:
        return tuple(sorted(self.static.index))


@dataclass
class AnalysisDataset:
    W: pd.DataFrame
    A: pd.Series
    Y: pd.Series
    outcome_spec: dict[str, Any]
    descriptors: pd.DataFrame | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.W) == len(self.A) == len(self.Y)):
            raise DataError("W, A and Y differ in length")
        y = np.asarray(self.Y, dtype=float)
        if not np.all(np.isfinite(y)) or np.any(y < 1):
            bad = list(self.Y.index[~(np.isfinite(y) & (y >= 1))]) if hasattr(self.Y, "index") else []
            raise DataError(f"relative growth must be finite and >= 1 (offending: {bad})")
        a = np.asarray(self.A)
        if a.sum() == 0 or a.sum() == a.size:
            raise PositivityError("positivity: one exposure arm is empty")

    @property
    def n(self) -> int:
        return len(self.Y)

    def to_frame(self) -> pd.DataFrame:
        return self.W.assign(A=self.A.astype(int), Y=self.Y)


# ---------------------------------------------------------------- ingestion


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_policies(path: Path | str) -> tuple[PolicyRecord, ...]:
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = set(POLICY_COLUMNS) - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    records = []
    for row in df.itertuples(index=False):
        level = getattr(row, "mask_level")
        records.append(
            PolicyRecord(
                state_id=row.state,
                policy_kind=row.kind,
                mask_level=int(float(level)) if level not in ("", None) else None,
                issued_date=_date(row.issued),
                enacted_date=_date(row.enacted),
                expired_date=_date(row.expired),
                end_date=_date(row.end),
            )
        )
    return tuple(records)


def read_panel(path: Path | str, population: Mapping[str, float]) -> dict[str, StatePanel]:
    df = pd.read_csv(path, encoding="utf-8")
    missing = set(PANEL_COLUMNS) - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    df["date"] = [dt.date.fromisoformat(d) for d in df["date"]]
    panels = {}
    for state, g in df.groupby("state", sort=True):
        g = g.sort_values("date")
        if g["date"].duplicated().any():
            raise DataError(f"{state}: duplicate dates in panel")
        series = g.set_index("date")[list(PANEL_COLUMNS[2:])]
        for col in ("cum_cases", "cum_deaths", "cum_tests"):
            values = series[col]
            if values.isna().any():
                raise DataError(f"{state}: {col} has missing values")
            if (values < 0).any() or not np.all(np.asarray(values) == np.round(values)):
                raise DataError(f"{state}: {col} must be non-negative integers")
            drops = np.flatnonzero(np.diff(values.to_numpy()) < 0)
            if drops.size:
                raise DataError(f"{state}: {col} decreases on {series.index[drops[0] + 1]}")
        if state not in population:
            raise DataError(f"{state}: no population in static covariates")
        panels[state] = StatePanel(state, float(population[state]), series)
    return panels


def read_static(path: Path | str) -> pd.DataFrame:
    df = pd.read_csv(path, encoding="utf-8")
    missing = ({"state"} | set(STATIC_COLUMNS)) - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    if df["state"].duplicated().any():
        raise DataError(f"{path}: duplicate states")
    return df.set_index("state").sort_index()


def load_snapshot(directory: Path | str) -> Snapshot:
    """Read and validate the three snapshot files in `directory`."""
    directory = Path(directory)
    files = {name: directory / name for name in ("panel.csv", "policies.csv", "static_covariates.csv")}
    for name, path in files.items():
        if not path.is_file():
            raise DataError(f"snapshot is missing {name} in {directory}")
    static = read_static(files["static_covariates.csv"])
    panels = read_panel(files["panel.csv"], static["total_population"].to_dict())
    policies = read_policies(files["policies.csv"])
    checksums = {name: _sha256(path) for name, path in files.items()}
    return Snapshot(panels, policies, static, directory, checksums)


# ---------------------------------------------------------------- exposure


def _by_state(policies: Iterable[PolicyRecord], kind: str) -> dict[str, list[PolicyRecord]]:
    out: dict[str, list[PolicyRecord]] = {}
    for rec in policies:
        if rec.policy_kind == kind:
            out.setdefault(rec.state_id, []).append(rec)
    return out


def _targets(target_dates: Mapping[str, dt.date] | pd.Series) -> dict[str, dt.date]:
    out = {}
    for state, d in dict(target_dates).items():
        d = _date(d)
        if d is None:
            raise DataError(f"{state}: missing target date")
        out[state] = d
    return out


def build_exposure(policies: Iterable[PolicyRecord], target_dates, date_key: str = "enacted", level: int = 3) -> pd.Series:
    """A = 1 when a public masking mandate at `level` is in place on the state's target date."""
    targets = _targets(target_dates)
    masks = _by_state(policies, "public_masking")
    values = {}
    for state, target in sorted(targets.items()):
        recs = [r for r in masks.get(state, []) if r.mask_level == level]
        values[state] = int(any(r.in_place(target, date_key) for r in recs))
    return pd.Series(values, name="A", dtype=int)


def classify_exposure(policies: Iterable[PolicyRecord], target_dates, date_key: str = "enacted", level: int = 3) -> pd.Series:
    """Label each state early / late / weaker / never.

    ``late``: the strict mandate started after the target date. ``weaker``:
    only less strict public masking mandates. ``never``: no public masking
    mandate on record.
    """
    policies = tuple(policies)
    A = build_exposure(policies, target_dates, date_key, level)
    masks = _by_state(policies, "public_masking")
    labels = {}
    for state, a in A.items():
        recs = masks.get(state, [])
        if a == 1:
            labels[state] = "early"
        elif any(r.mask_level == level for r in recs):
            labels[state] = "late"
        elif recs:
            labels[state] = "weaker"
        else:
            labels[state] = "never"
    return pd.Series(labels, name="exposure_class")


def secondary_target_dates(
    policies: Iterable[PolicyRecord],
    states: Iterable[str] = STATES,
    fallback: dt.date | str = SAH_FALLBACK_TARGET,
    window_end: dt.date | str = dt.date(2020, 12, 31),
) -> tuple[pd.Series, dict[str, Any]]:
    """Per-state target date: when the stay-at-home order was lifted.

    States that never issued one get `fallback`; pass ``"median"`` to use the
    median termination date among states that did. An order with no end or
    expiry on record is treated as lifted at `window_end`, and the state is
    listed under ``"open_orders"`` in the returned metadata.
    """
    sah = _by_state(policies, "stay_at_home")
    window_end = _date(window_end)
    meta: dict[str, Any] = {"open_orders": [], "never_issued": []}
    targets: dict[str, dt.date | None] = {}
    for state in sorted(states):
        recs = sah.get(state, [])
        if not recs:
            targets[state] = None
            meta["never_issued"].append(state)
            continue
        stops = [r.termination() for r in recs]
        if any(s is None for s in stops):
            meta["open_orders"].append(state)
            targets[state] = window_end
        else:
            targets[state] = max(stops)
    if fallback == "median":
        issued = sorted(d for d in targets.values() if d is not None)
        if not issued:
            raise DataError("no state issued a stay-at-home order; median fallback undefined")
        ordinals = np.array([d.toordinal() for d in issued], dtype=float)
        fallback_date = dt.date.fromordinal(int(np.floor(np.median(ordinals))))
    else:
        fallback_date = _date(fallback)
    meta["fallback"] = fallback_date.isoformat()
    out = {s: (d if d is not None else fallback_date) for s, d in targets.items()}
    return pd.Series(out, name="target_date"), meta


# ---------------------------------------------------------------- outcome


def build_outcome(panel: StatePanel, target_date, horizon_days: int, endpoint: str) -> float:
    """Cumulative count `horizon_days` after the target divided by the count on it."""
    if endpoint not in ENDPOINT_COLUMN:
        raise ValueError(f"unknown endpoint {endpoint!r}")
    target = _date(target_date)
    col = ENDPOINT_COLUMN[endpoint]
    base = panel.value(col, target)
    if base <= 0:
        raise DataError(f"{panel.state_id}: zero cumulative {endpoint} on target date {target}")
    later = panel.value(col, target + dt.timedelta(days=horizon_days))
    return later / base


# ---------------------------------------------------------------- covariates


def build_covariates(
    panels: Mapping[str, StatePanel],
    policies: Iterable[PolicyRecord],
    static: pd.DataFrame,
    target_dates,
    date_key: str = "enacted",
) -> pd.DataFrame:
    """The 38-column confounder table, one row per state, relative to each state's target."""
    targets = _targets(target_dates)
    policies = tuple(policies)
    by_kind = {kind: _by_state(policies, kind) for kind in EVER_POLICY_KINDS}
    rows, problems = {}, []
    for state, target in sorted(targets.items()):
        row: dict[str, float] = {}
        if state not in static.index:
            problems.append(f"{state}: all static columns")
            continue
        for col in STATIC_COLUMNS:
            v = static.at[state, col]
            if pd.isna(v):
                problems.append(f"{state}: {col}")
            row[col] = float(v)
        panel = panels.get(state)
        if panel is None:
            problems.append(f"{state}: panel series")
            continue
        for series in ("cases", "deaths", "tests"):
            for d in LOOKBACKS:
                name = f"{series}_per100k_{d}d"
                try:
                    row[name] = 1e5 * panel.value(ENDPOINT_COLUMN[series], target - dt.timedelta(days=d)) / panel.population
                except DataError as exc:
                    problems.append(f"{state}: {name} ({exc})")
        for kind in EVER_POLICY_KINDS:
            recs = by_kind[kind].get(state, [])
            row[f"ever_{kind}"] = float(any((s := r.start(date_key)) is not None and s <= target for r in recs))
        for d in MOBILITY_LOOKBACKS:
            name = f"mobility_residential_{d}d"
            try:
                row[name] = panel.value("mobility_residential_pct", target - dt.timedelta(days=d))
            except DataError as exc:
                problems.append(f"{state}: {name} ({exc})")
        rows[state] = row
    if problems:
        raise DataError("unresolvable covariate cells:\n  " + "\n  ".join(problems))
    W = pd.DataFrame.from_dict(rows, orient="index").loc[:, list(COVARIATE_COLUMNS)]
    W.index.name = "state"
    _check_covariates(W)
    return W


def _check_covariates(W: pd.DataFrame) -> None:
    pct = [c for c in W.columns if c.startswith("pct_")]
    bad = W[pct].lt(0).any() | W[pct].gt(100).any()
    if bad.any():
        raise DataError(f"percentage columns outside [0, 100]: {list(bad[bad].index)}")
    nonneg = [c for c in W.columns if "per100k" in c] + ["pop_density", "total_population"]
    if W[nonneg].lt(0).any().any():
        raise DataError("per-capita or population columns are negative")
    ind = ["republican"] + [c for c in W.columns if c.startswith("ever_")]
    if not W[ind].isin([0.0, 1.0]).all().all():
        raise DataError("indicator columns must be 0/1")


# ---------------------------------------------------------------- assembly


@dataclass(frozen=True)
class TargetSpec:
    """How target dates are assigned: one shared date, stay-at-home lifting, or explicit per-state dates."""

    mode: str = "primary_sep1"
    date: dt.date = PRIMARY_TARGET
    custom: Mapping[str, dt.date] | None = None
    sah_fallback: dt.date | str = SAH_FALLBACK_TARGET
    window_end: dt.date = dt.date(2020, 12, 31)

    def resolve(self, snapshot: Snapshot) -> tuple[pd.Series, dict[str, Any]]:
        states = snapshot.states
        if self.mode == "primary_sep1":
            return pd.Series({s: self.date for s in states}, name="target_date"), {}
        if self.mode == "secondary_sah":
            return secondary_target_dates(snapshot.policies, states, self.sah_fallback, self.window_end)
        if self.mode == "custom":
            if not self.custom:
                raise DataError("custom mode needs per-state target dates")
            return pd.Series(_targets(self.custom), name="target_date"), {}
        raise ValueError(f"unknown analysis mode {self.mode!r}")


def build_dataset(
    snapshot: Snapshot,
    endpoint: str,
    horizon_days: int,
    targets: TargetSpec = TargetSpec(),
    date_key: str = "enacted",
) -> AnalysisDataset:
    """Assemble (W, A, Y) for one endpoint and horizon."""
    target_dates, target_meta = targets.resolve(snapshot)
    W = build_covariates(snapshot.panels, snapshot.policies, snapshot.static, target_dates, date_key)
    A = build_exposure(snapshot.policies, target_dates, date_key).loc[W.index]
    Y = pd.Series(
        {s: build_outcome(snapshot.panels[s], target_dates[s], horizon_days, endpoint) for s in W.index},
        name="Y",
    ).loc[W.index]
    desc_cols = [c for c in DESCRIPTIVE_COLUMNS if c in snapshot.static.columns]
    descriptors = snapshot.static.loc[W.index, desc_cols] if desc_cols else None
    spec = {
        "endpoint": endpoint,
        "horizon_days": int(horizon_days),
        "mode": targets.mode,
        "target_dates": {s: target_dates[s].isoformat() for s in W.index},
        "date_key": date_key,
    }
    meta = {"targets": target_meta, "exposure_class": classify_exposure(snapshot.policies, target_dates, date_key).loc[W.index].to_dict()}
    if snapshot.checksums:
        meta["checksums"] = dict(snapshot.checksums)
    return AnalysisDataset(W, A, Y, spec, descriptors, meta)


def config_tag(ds: AnalysisDataset) -> str:
    return f"{ds.outcome_spec['mode']}_{ds.outcome_spec['endpoint']}_{ds.outcome_spec['horizon_days']}d"


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(ds: AnalysisDataset, out_dir: Path | str) -> Path:
    """Write ``dataset_<config>.csv`` and its JSON metadata sidecar."""
    out_dir = Path(out_dir)
    tag = config_tag(ds)
    csv_path = out_dir / f"dataset_{tag}.csv"
    atomic_write_text(csv_path, ds.to_frame().to_csv(lineterminator="\n", float_format="%.17g"))
    sidecar = {"outcome_spec": ds.outcome_spec, "metadata": ds.metadata, "columns": list(ds.W.columns)}
    atomic_write_text(out_dir / f"dataset_{tag}.json", json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return csv_path


# ---------------------------------------------------------------- Table 1

TABLE1_ROWS = (
    ("Population Demographics", None, None),
    ("Black or African American (%)", "pct_black", "continuous"),
    ("Hispanic (%)", "pct_hispanic", "continuous"),
    ("Mixed Race (%)", "pct_mixed_race", "continuous"),
    ("Caucasian (%)", "pct_white", "continuous"),
    ("Median Age", "median_age", "continuous"),
    ("Smoker (%)", "pct_smoker", "continuous"),
    ("Political Leaning", None, None),
    ("Republican", "republican", "indicator"),
    ("Population Density & Urbanicity", None, None),
    ("Total Population", "total_population", "continuous"),
    ("Population Density (people per km2)", "pop_density", "continuous"),
    ("Urbanicity in 2010 (%)", "pct_urban_2010", "continuous"),
    ("Public Transportation Usage (%)", "pct_commute_public_transit", "continuous"),
    ("Prior COVID-19 Outcomes (per 100,000 residents)", None, None),
    ("Confirmed Cases 30 days prior", "cases_per100k_30d", "continuous"),
    ("Confirmed Cases 14 days prior", "cases_per100k_14d", "continuous"),
    ("Confirmed Cases 7 days prior", "cases_per100k_7d", "continuous"),
    ("Deaths 30 days prior", "deaths_per100k_30d", "continuous"),
    ("Deaths 14 days prior", "deaths_per100k_14d", "continuous"),
    ("Deaths 7 days prior", "deaths_per100k_7d", "continuous"),
    ("Prior COVID-19 Policies", None, None),
    ("Implemented Stay-at-Home", "ever_stay_at_home", "indicator"),
    ("Implemented Gathering Restrictions", "ever_gathering_restriction", "indicator"),
    ("Implemented School Masking", "ever_school_masking", "indicator"),
    ("Changes in Mobility", None, None),
    ("Mobility Change 14 days prior (%)", "mobility_residential_14d", "continuous"),
    ("Mobility Change 7 days prior (%)", "mobility_residential_7d", "continuous"),
)


def summarize_table1(ds: AnalysisDataset) -> pd.DataFrame:
    """Long-format baseline summary: one row per characteristic and group.

    Continuous columns get the median and quartiles (linear interpolation
    between order statistics); indicators get the count and percentage.
    """
    frame = ds.W if ds.descriptors is None else ds.W.join(ds.descriptors)
    A = np.asarray(ds.A)
    groups = {"all": np.ones(A.size, bool), "early": A == 1, "delayed": A == 0}
    rows = []
    for label, col, kind in TABLE1_ROWS:
        if col is None or col not in frame.columns:
            continue
        for group, mask in groups.items():
            x = frame[col].to_numpy(float)[mask]
            rec = {"characteristic": label, "column": col, "kind": kind, "group": group, "n": int(mask.sum())}
            if kind == "indicator":
                rec["count"] = int(x.sum())
                rec["percent"] = 100.0 * x.mean()
            else:
                q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
                rec.update(median=float(med), q1=float(q1), q3=float(q3))
            rows.append(rec)
    return pd.DataFrame(rows)


def _fmt1(x: float, digits: int = 1) -> str:
    s = f"{round(x, digits):.{digits}f}"
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def format_table1(summary: pd.DataFrame) -> pd.DataFrame:
    """Presentation layout: median (q1, q3) or count (percent%)."""
    n = summary.drop_duplicates("group").set_index("group")["n"]
    headers = {
        "all": f"All (N={n['all']})",
        "early": f"Early Masking (N={n['early']})",
        "delayed": f"Delayed Masking (N={n['delayed']})",
    }
    out = []
    for label, col, kind in TABLE1_ROWS:
        if col is None:
            out.append({"Characteristic": label, **{h: "" for h in headers.values()}})
            continue
        sub = summary[summary["column"] == col].set_index("group")
        if sub.empty:
            continue
        row = {"Characteristic": label}
        for group, header in headers.items():
            r = sub.loc[group]
            if kind == "indicator":
                row[header] = f"{int(r['count'])} ({_fmt1(r['percent'], 0)}%)"
            else:
                digits = 0 if col == "total_population" else 1
                row[header] = f"{_fmt1(r['median'], digits)} ({_fmt1(r['q1'], digits)}, {_fmt1(r['q3'], digits)})"
        out.append(row)
    return pd.DataFrame(out)
