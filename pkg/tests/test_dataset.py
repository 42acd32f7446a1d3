import datetime as dt
import shutil

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskroadmap.dataset import (
    COVARIATE_COLUMNS,
    AnalysisDataset,
    DataError,
    PolicyRecord,
    PositivityError,
    StatePanel,
    TargetSpec,
    build_covariates,
    build_dataset,
    build_exposure,
    classify_exposure,
    format_table1,
    load_snapshot,
    secondary_target_dates,
    summarize_table1,
    write_dataset,
)

D = dt.date.fromisoformat
TARGET = D("2020-09-01")


def mask(state, level, enacted, end=None, expired=None, issued=None):
    return PolicyRecord(state, "public_masking", level, issued_date=issued, enacted_date=D(enacted),
                        end_date=end and D(end), expired_date=expired and D(expired))  # fmt: skip


def sah(state, enacted, end=None, expired=None):
    return PolicyRecord(state, "stay_at_home", None, enacted_date=D(enacted), end_date=end and D(end), expired_date=expired and D(expired))


def panel(state="XX", population=1_000_000, start="2020-07-01", days=120, cases=None, mobility=5.0):
    dates = [D(start) + dt.timedelta(days=k) for k in range(days)]
    cases = np.arange(100, 100 + days) if cases is None else np.asarray(cases)
    series = pd.DataFrame(
        {"cum_cases": cases, "cum_deaths": cases // 50, "cum_tests": cases * 10, "mobility_residential_pct": mobility},
        index=dates,
    )
    return StatePanel(state, population, series)


# ---------------------------------------------------------------- policy records


def test_mask_level_required_for_masking_kinds():
    with pytest.raises(DataError):
        PolicyRecord("MA", "public_masking", None, enacted_date=TARGET)
    with pytest.raises(DataError):
        PolicyRecord("MA", "stay_at_home", 3, enacted_date=TARGET)


def test_enacted_not_before_issued():
    with pytest.raises(DataError):
        PolicyRecord("MA", "public_masking", 3, issued_date=D("2020-05-02"), enacted_date=D("2020-05-01"))


# ---------------------------------------------------------------- exposure


def test_exposure_rules():
    recs = [
        mask("AA", 3, "2020-05-01"),
        mask("BB", 2, "2020-05-01"),
        mask("CC", 3, "2020-09-15"),
        mask("DD", 3, "2020-05-01", end="2020-08-01"),
        mask("EE", 3, "2020-09-01"),
        mask("FF", 3, "2020-05-01", end="2020-09-01"),
        mask("GG", 3, "2020-09-03", issued=D("2020-08-28")),
    ]
    targets = {s: TARGET for s in ("AA", "BB", "CC", "DD", "EE", "FF", "GG", "HH")}
    A = build_exposure(recs, targets)
    assert A.to_dict() == {"AA": 1, "BB": 0, "CC": 0, "DD": 0, "EE": 1, "FF": 1, "GG": 0, "HH": 0}
    assert build_exposure(recs, targets, date_key="issued")["GG"] == 1


def test_exposure_classes():
    recs = [mask("AA", 3, "2020-05-01"), mask("BB", 1, "2020-05-01"), mask("CC", 3, "2020-10-01")]
    labels = classify_exposure(recs, {s: TARGET for s in ("AA", "BB", "CC", "DD")})
    assert labels.to_dict() == {"AA": "early", "BB": "weaker", "CC": "late", "DD": "never"}


def test_end_before_start_is_contradictory():
    with pytest.raises(DataError):
        build_exposure([mask("AA", 3, "2020-05-01", end="2020-04-01")], {"AA": TARGET})


def test_exposure_monotone_in_target_date(demo_snapshot):
    dates = [D("2020-04-01") + dt.timedelta(days=15 * k) for k in range(18)]
    prev = None
    for d in dates:
        A = build_exposure(demo_snapshot.policies, {s: d for s in demo_snapshot.states})
        if prev is not None:
            assert np.all(A.to_numpy() >= prev.to_numpy())
        prev = A


# ---------------------------------------------------------------- secondary targets


def test_secondary_targets():
    recs = [
        sah("AA", "2020-03-20", end="2020-05-15"),
        sah("BB", "2020-03-20", end="2020-05-01"),
        sah("BB", "2020-07-01", expired="2020-07-20"),
        sah("CC", "2020-03-20"),
    ]
    targets, meta = secondary_target_dates(recs, ["AA", "BB", "CC", "DD"])
    assert targets["AA"] == D("2020-05-15")
    assert targets["BB"] == D("2020-07-20")
    assert targets["CC"] == D("2020-12-31") and meta["open_orders"] == ["CC"]
    assert targets["DD"] == D("2020-05-15") and meta["never_issued"] == ["DD"]


def test_secondary_median_fallback():
    recs = [sah("AA", "2020-03-20", end="2020-05-01"), sah("BB", "2020-03-20", end="2020-05-11")]
    targets, meta = secondary_target_dates(recs, ["AA", "BB", "CC"], fallback="median")
    assert targets["CC"] == D("2020-05-06")


def test_secondary_design_on_demo(demo_snapshot):
    ds = build_dataset(demo_snapshot, "cases", 60, TargetSpec("secondary_sah"))
    assert sorted(ds.A[ds.A == 1].index) == ["CT", "DE", "IL", "MA", "ME", "NM", "NY", "RI"]


# ---------------------------------------------------------------- outcome and covariates


def test_outcome_examples():
    from maskroadmap.dataset import build_outcome

    flat = panel(cases=np.full(120, 100))
    assert build_outcome(flat, D("2020-08-01"), 21, "cases") == 1.0
    doubling = panel(cases=np.r_[np.full(31, 100), np.full(89, 200)])
    assert build_outcome(doubling, D("2020-07-01"), 60, "cases") == 2.0


def test_outcome_errors():
    from maskroadmap.dataset import build_outcome

    zero = panel(cases=np.r_[np.zeros(40, int), np.full(80, 5)])
    with pytest.raises(DataError, match="zero"):
        build_outcome(zero, D("2020-07-10"), 21, "cases")
    with pytest.raises(DataError, match="outside"):
        build_outcome(panel(), D("2020-10-01"), 60, "cases")


def static_row(state, population):
    row = {c: 10.0 for c in COVARIATE_COLUMNS[:20]}
    row.update(total_population=population, republican=1.0)
    return pd.DataFrame([row], index=pd.Index([state], name="state"))


def test_per_capita_arithmetic():
    cases = np.full(120, 5000)
    cases[-20:] = 10_000  # cumulative count 7 days before the target
    p = panel("ZZ", cases=cases, start="2020-05-01")
    target = p.last_date - dt.timedelta(days=12)
    W = build_covariates({"ZZ": p}, [], static_row("ZZ", 1_000_000), {"ZZ": target})
    assert W.loc["ZZ", "cases_per100k_7d"] == 1000.0
    assert list(W.columns) == list(COVARIATE_COLUMNS)


@settings(max_examples=20, deadline=None)
@given(pop=st.integers(10_000, 50_000_000))
def test_per_capita_scales_inversely_with_population(pop):
    target = D("2020-08-15")
    W1 = build_covariates({"ZZ": panel("ZZ", pop)}, [], static_row("ZZ", pop), {"ZZ": target})
    W2 = build_covariates({"ZZ": panel("ZZ", 2 * pop)}, [], static_row("ZZ", 2 * pop), {"ZZ": target})
    cols = [c for c in COVARIATE_COLUMNS if "per100k" in c]
    np.testing.assert_allclose(W2.loc["ZZ", cols].to_numpy(float), W1.loc["ZZ", cols].to_numpy(float) / 2, rtol=1e-12)


def test_missing_cells_fail_loudly():
    p = panel("ZZ", mobility=np.nan)
    with pytest.raises(DataError, match="mobility_residential_7d"):
        build_covariates({"ZZ": p}, [], static_row("ZZ", 1e6), {"ZZ": D("2020-08-15")})


def test_policy_indicators():
    recs = [
        PolicyRecord("ZZ", "school_masking", 3, enacted_date=D("2020-08-15")),
        PolicyRecord("ZZ", "gathering_restriction", None, enacted_date=D("2020-09-10")),
    ]
    W = build_covariates({"ZZ": panel("ZZ")}, recs, static_row("ZZ", 1e6), {"ZZ": D("2020-08-20")})
    assert W.loc["ZZ", "ever_school_masking"] == 1.0
    assert W.loc["ZZ", "ever_gathering_restriction"] == 0.0


# ---------------------------------------------------------------- assembled dataset


def test_outcome_domain_and_positivity_enforced():
    W = pd.DataFrame({"w": [0.0, 1.0, 2.0]})
    with pytest.raises(DataError):
        AnalysisDataset(W, pd.Series([1, 0, 1]), pd.Series([1.0, 0.9, 1.2]), {})
    with pytest.raises(PositivityError):
        AnalysisDataset(W, pd.Series([1, 1, 1]), pd.Series([1.0, 1.1, 1.2]), {})


def test_primary_design_on_demo(demo_snapshot):
    ds = build_dataset(demo_snapshot, "deaths", 45)
    assert ds.n == 50 and ds.W.shape[1] == 38
    assert ds.A.sum() == 25
    assert (ds.Y >= 1).all()
    counts = pd.Series(ds.metadata["exposure_class"]).value_counts()
    assert counts.to_dict() == {"early": 25, "weaker": 12, "never": 7, "late": 6}


def test_dataset_rebuild_is_byte_identical(demo_snapshot, tmp_path):
    a = write_dataset(build_dataset(demo_snapshot, "cases", 30), tmp_path / "a")
    b = write_dataset(build_dataset(demo_snapshot, "cases", 30), tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()


def test_decreasing_series_rejected(tmp_path):
    from conftest import DEMO_SNAPSHOT

    shutil.copytree(DEMO_SNAPSHOT, tmp_path / "snap")
    path = tmp_path / "snap" / "panel.csv"
    df = pd.read_csv(path)
    i = df.index[(df.state == "OH") & (df.date == "2020-08-01")][0]
    df.loc[i, "cum_cases"] = df.loc[i - 1, "cum_cases"] - 1
    df.to_csv(path, index=False)
    with pytest.raises(DataError, match="OH: cum_cases decreases on 2020-08-01"):
        load_snapshot(tmp_path / "snap")


# ---------------------------------------------------------------- Table 1


def test_table1_degenerate_column_and_counts(demo_snapshot):
    ds = build_dataset(demo_snapshot, "cases", 21)
    ds.W["pct_smoker"] = 15.0
    summary = summarize_table1(ds)
    smoker = summary[summary.column == "pct_smoker"]
    assert (smoker[["median", "q1", "q3"]] == 15.0).all().all()
    rep = summary[summary.column == "republican"].set_index("group")
    A = ds.A.to_numpy()
    assert rep.loc["all", "count"] == ds.W["republican"].sum()
    assert rep.loc["early", "count"] == ds.W["republican"][A == 1].sum()
    table = format_table1(summary)
    assert list(table.columns) == ["Characteristic", "All (N=50)", "Early Masking (N=25)", "Delayed Masking (N=25)"]
    row = table.set_index("Characteristic").loc["Republican"]
    assert row.iloc[0] == f"{int(rep.loc['all', 'count'])} ({round(100 * rep.loc['all', 'count'] / 50)}%)"


def test_table1_quantiles_are_type7(demo_snapshot):
    ds = build_dataset(demo_snapshot, "cases", 21)
    summary = summarize_table1(ds).set_index(["column", "group"])
    x = np.sort(ds.W["pct_hispanic"].to_numpy())
    h = 49 * 0.25
    q1 = x[int(h)] + (h - int(h)) * (x[int(h) + 1] - x[int(h)])
    assert summary.loc[("pct_hispanic", "all"), "q1"] == pytest.approx(q1, abs=1e-12)
