"""Write a synthetic 50-state snapshot in the pipeline's input format.

The numbers are invented. They follow the study design closely enough to
exercise every code path: 25 states with a strict public masking mandate by
September 1 (8 of them already before lifting stay-at-home), 6 that adopted one
later, 12 with only weaker mandates and 7 with none.

Usage: python scripts/make_demo_snapshot.py [OUT_DIR] [--seed SEED]
"""

from __future__ import annotations

import argparse
import datetime as dt
from pathlib import Path

import numpy as np
import pandas as pd

from maskroadmap.dataset import STATES, STATIC_COLUMNS

EARLY_BEFORE_SAH_LIFT = ("CT", "DE", "IL", "MA", "ME", "NM", "NY", "RI")
EARLY_SUMMER = ("CA", "CO", "HI", "KS", "KY", "MD", "MI", "MN", "NC", "NJ", "NV", "OH", "OR", "PA", "TX", "VA", "WA")
LATE = ("IA", "IN", "ND", "UT", "WI", "WV")
WEAKER = ("AL", "AR", "AZ", "GA", "ID", "LA", "MO", "MS", "NE", "OK", "SC", "VT")
NEVER = tuple(s for s in STATES if s not in EARLY_BEFORE_SAH_LIFT + EARLY_SUMMER + LATE + WEAKER)

START, STOP = dt.date(2020, 1, 22), dt.date(2021, 3, 31)
TARGET = dt.date(2020, 9, 1)


def day(d0: str, rng: np.random.Generator, spread: int) -> dt.date:
    return dt.date.fromisoformat(d0) + dt.timedelta(days=int(rng.integers(0, spread + 1)))


def policies(rng: np.random.Generator) -> tuple[pd.DataFrame, dict[str, dt.date | None]]:
    rows = []
    sah_end: dict[str, dt.date | None] = {}

    def add(state, kind, enacted, level=None, expired=None, end=None):
        issued = enacted - dt.timedelta(days=int(rng.integers(0, 4)))
        rows.append(dict(state=state, kind=kind, mask_level=level, issued=issued, enacted=enacted, expired=expired, end=end))

    for s in STATES:
        has_sah = s in EARLY_BEFORE_SAH_LIFT or rng.random() < 0.8
        if has_sah:
            start = day("2020-03-19", rng, 14)
            lift = day("2020-06-01", rng, 25) if s in EARLY_BEFORE_SAH_LIFT else day("2020-04-28", rng, 30)
            add(s, "stay_at_home", start, end=lift)
            sah_end[s] = lift
        else:
            sah_end[s] = None
        if s in EARLY_BEFORE_SAH_LIFT:
            add(s, "public_masking", day("2020-04-15", rng, 30), 3)
        elif s in EARLY_SUMMER:
            lower = max(sah_end[s] or dt.date(2020, 5, 15), dt.date(2020, 6, 5)) + dt.timedelta(days=1)
            add(s, "public_masking", lower + dt.timedelta(days=int(rng.integers(0, (dt.date(2020, 8, 25) - lower).days))), 3)
        elif s in LATE:
            add(s, "public_masking", day("2020-09-15", rng, 60), 3)
        elif s in WEAKER:
            add(s, "public_masking", day("2020-05-01", rng, 90), int(rng.integers(1, 3)))
        for kind, p in (
            ("gathering_restriction", 0.9),
            ("restaurant_restriction", 0.85),
            ("business_closure_nonessential", 0.7),
            ("business_closure_other", 0.6),
            ("business_masking", 0.6),
            ("school_masking", 0.55),
        ):
            if rng.random() < p:
                level = 3 if kind.endswith("masking") else None
                enacted = day("2020-03-15", rng, 150)
                expired = enacted + dt.timedelta(days=int(rng.integers(30, 120))) if rng.random() < 0.3 else None
                add(s, kind, enacted, level, expired=expired)
    df = pd.DataFrame(rows).sort_values(["state", "kind", "enacted"]).reset_index(drop=True)
    df["mask_level"] = df["mask_level"].astype("Int64")
    return df, sah_end


def static(rng: np.random.Generator, early: set[str]) -> pd.DataFrame:
    n = len(STATES)
    black = np.clip(rng.gamma(1.2, 7.0, n), 0.5, 40)
    hisp = np.clip(rng.gamma(1.3, 7.0, n), 1.5, 50)
    asian = np.clip(rng.gamma(1.5, 2.0, n), 0.5, 38)
    mixed = np.clip(rng.normal(2.7, 1.2, n), 1.2, 24)
    white = np.clip(100 - black - hisp - asian - mixed - rng.uniform(0, 3, n), 20, 95)
    commute = rng.dirichlet([76, 5, 5, 0.6, 2.7, 1.2], n) * 100
    df = pd.DataFrame(
        {
            "state": STATES,
            "pct_age65plus": rng.normal(17, 1.8, n),
            "pct_black": black,
            "pct_hispanic": hisp,
            "pct_asian": asian,
            "pct_mixed_race": mixed,
            "pct_white": white,
            "median_age": rng.normal(39, 2.3, n),
            "pct_households_below_poverty": rng.normal(12.5, 2.5, n),
            "pct_people_below_poverty": rng.normal(12.0, 2.7, n),
            "pct_smoker": rng.normal(16, 3, n),
            "pct_diabetic": rng.normal(10.5, 1.8, n),
            "pop_density": np.exp(rng.normal(4.0, 1.3, n)),
            "pct_commute_drive": commute[:, 0],
            "pct_commute_work_from_home": commute[:, 1],
            "pct_commute_public_transit": commute[:, 2],
            "pct_commute_bike": commute[:, 3],
            "pct_commute_walk": commute[:, 4],
            "pct_commute_other": commute[:, 5],
            "total_population": np.round(np.exp(rng.normal(15.2, 0.95, n))),
            "republican": 0,
            "pct_urban_2010": np.clip(rng.normal(74, 13, n), 38, 95),
        }
    )
    lean = np.array([s in early for s in STATES], float)
    df["republican"] = (rng.random(n) < 0.8 - 0.6 * lean).astype(int)
    assert list(df.columns[1:-1]) == list(STATIC_COLUMNS)
    return df.round(4)


def panel(rng: np.random.Generator, static_df: pd.DataFrame, early: set[str], sah_end) -> pd.DataFrame:
    dates = pd.date_range(START, STOP, freq="D")
    t = np.arange(dates.size, dtype=float)
    frames = []
    for _, row in static_df.iterrows():
        s = row["state"]
        pop = row["total_population"]
        onset = 40 + rng.integers(0, 15)
        spring = rng.uniform(5, 25) * np.exp(-0.5 * ((t - onset - 30) / 15) ** 2)
        summer = rng.uniform(5, 30) * np.exp(-0.5 * ((t - 175 - rng.integers(-10, 10)) / 20) ** 2)
        # fall growth is slower where a strict mandate was in place, faster in Republican-leaning states
        fall_rate = 0.024 - 0.004 * (s in early) + 0.003 * row["republican"] + rng.normal(0, 0.002)
        fall = 8.0 * np.exp(np.clip(fall_rate * (t - 223), None, 0.024 * 110))
        fall[t < 200] *= 0.0
        rate = (spring + summer + fall) * (t >= onset)
        daily_cases = rng.poisson(pop * rate / 1e5)
        cum_cases = np.cumsum(daily_cases)
        lagged = np.concatenate([np.zeros(14), daily_cases[:-14]])
        cum_deaths = np.cumsum(rng.poisson(lagged * rng.uniform(0.012, 0.025)))
        cum_tests = np.cumsum(rng.poisson(daily_cases * rng.uniform(8, 15) + pop * 1e-4 * (t >= onset)))
        lift = sah_end[s]
        lockdown = ((dates.date >= dt.date(2020, 3, 20)) & ((dates.date <= lift) if lift else (dates.date <= dt.date(2020, 4, 30)))).astype(float)
        mobility = np.round(2 + 10 * lockdown + 3 * (t > 300) + rng.normal(0, 1.2, t.size), 1)
        mobility = np.where(dates.date < dt.date(2020, 2, 15), np.nan, mobility)
        frames.append(
            pd.DataFrame(
                {
                    "state": s,
                    "date": [d.isoformat() for d in dates.date],
                    "cum_cases": cum_cases,
                    "cum_deaths": cum_deaths,
                    "cum_tests": cum_tests,
                    "mobility_residential_pct": mobility,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", nargs="?", type=Path, default=Path(__file__).resolve().parents[1] / "data" / "demo_snapshot")
    parser.add_argument("--seed", type=int, default=2020)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    early = set(EARLY_BEFORE_SAH_LIFT + EARLY_SUMMER)
    pol, sah_end = policies(rng)
    st = static(rng, early)
    pn = panel(rng, st, early, sah_end)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, df in (("policies.csv", pol), ("static_covariates.csv", st), ("panel.csv", pn)):
        df.to_csv(args.out / name, index=False, lineterminator="\n")
    (args.out / "README.md").write_text(
        "Synthetic snapshot written by scripts/make_demo_snapshot.py "
        f"(seed {args.seed}). All values are invented; use it only to exercise the pipeline.\n",
        encoding="utf-8",
    )
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
