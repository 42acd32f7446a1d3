"""maskroadmap: validate snapshots, build datasets, estimate effects, render reports and run simulations.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 estimation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from maskroadmap import simlab
from maskroadmap.config import ConfigError, RunConfig, load_config
from maskroadmap.dataset import DataError, write_dataset
from maskroadmap.estimators import EstimationError
from maskroadmap.pipeline import CellError, build_datasets, render_reports, run_pipeline, validate_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION = 0, 1, 2, 3

log = logging.getLogger("maskroadmap")


def _csv_list(cast):
    def parse(text: str):
        return [cast(x) for x in text.split(",") if x.strip()]

    return parse


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, required=True, help="YAML run config")
    p.add_argument("--data-dir", type=Path)
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--mode", choices=("primary_sep1", "secondary_sah", "custom"))
    p.add_argument("--endpoints", type=_csv_list(str), help="comma-separated, e.g. cases,deaths")
    p.add_argument("--horizons", type=_csv_list(int), help="comma-separated days, e.g. 21,30,45,60")
    p.add_argument("--estimators", type=_csv_list(str))
    p.add_argument("--gbound", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", type=int, dest="n_jobs")


def _run_config(args) -> RunConfig:
    overrides = {k: getattr(args, k) for k in ("data_dir", "output_dir", "mode", "endpoints", "horizons", "estimators", "gbound", "seed", "n_jobs")}
    for key in ("data_dir", "output_dir"):
        if overrides[key] is not None:
            overrides[key] = str(overrides[key].resolve())
    return load_config(args.config, **overrides)


def cmd_validate(args) -> int:
    config = _run_config(args) if args.config else None
    directory = args.data_dir or (config.data_dir if config else None)
    if directory is None:
        raise ConfigError("validate needs --data-dir or --config")
    problems = validate_snapshot(directory, config)
    for p in problems:
        print(p)
    print(f"{len(problems)} problem(s) in {directory}")
    return EXIT_DATA if problems else EXIT_OK


def cmd_dataset(args) -> int:
    config = _run_config(args)
    for ds in build_datasets(config):
        print(write_dataset(ds, config.output_dir / "datasets"))
    return EXIT_OK


def cmd_estimate(args) -> int:
    config = _run_config(args)
    out = run_pipeline(config)
    print(f"reports written to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = args.output_dir / "estimates.json"
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    mode = args.mode
    if mode is None:
        manifest = args.output_dir / "run_manifest.json"
        mode = json.loads(manifest.read_text(encoding="utf-8"))["config"]["mode"] if manifest.is_file() else "primary_sep1"
    for p in render_reports(records, args.output_dir, mode):
        print(p)
    return EXIT_OK


def cmd_simulate(args) -> int:
    raw = {}
    if args.config:
        try:
            raw = yaml.safe_load(args.config.read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if "output_dir" in raw:
            raw["output_dir"] = (args.config.parent / raw["output_dir"]).resolve()
    for key in ("dgp", "scenario", "n", "replicates", "seed", "n_jobs", "output_dir", "mc_draws"):
        v = getattr(args, key)
        if v is not None:
            raw[key] = v
    if "seed" not in raw:
        raise ConfigError("simulate needs a seed")
    try:
        dgp = simlab.DgpSpec.from_dict(raw["dgp"]) if isinstance(raw.get("dgp"), dict) else simlab.get_dgp(raw.get("dgp", "confounded"))
        scenarios = raw.get("scenarios") or [raw.get("scenario", "both_correct")]
        for sc in scenarios:
            if sc not in simlab.SCENARIOS:
                raise ValueError(f"unknown scenario {sc!r}")
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    truth = simlab.true_parameters(dgp, mc_draws=int(raw.get("mc_draws", 10_000_000)), seed=int(raw["seed"]))
    out = Path(raw.get("output_dir", "sim_output"))
    for sc in scenarios:
        report = simlab.run_experiment(
            dgp, int(raw.get("n", 2000)), int(raw.get("replicates", 200)), sc, int(raw["seed"]),
            truth=truth, n_jobs=int(raw.get("n_jobs", 1)),
        )  # fmt: skip
        path = simlab.write_report(report, out)
        print(path)
        print(report.metrics.to_string(index=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskroadmap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a snapshot for schema and coverage problems")
    p.add_argument("--data-dir", type=Path)
    p.add_argument("--config", type=Path)
    for flag in ("output-dir", "mode", "endpoints", "horizons", "estimators", "gbound", "seed", "n-jobs"):
        p.set_defaults(**{flag.replace("-", "_"): None})
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dataset", help="build and write the analysis datasets")
    _add_run_flags(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("estimate", help="run the full estimation pipeline")
    _add_run_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("report", help="re-render tables from estimates.json")
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--mode", choices=("primary_sep1", "secondary_sah", "custom"))
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="run a simulation experiment")
    p.add_argument("--config", type=Path)
    p.add_argument("--dgp", choices=sorted(simlab.DGPS))
    p.add_argument("--scenario", choices=simlab.SCENARIOS)
    p.add_argument("--n", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mc-draws", type=int, dest="mc_draws")
    p.add_argument("--n-jobs", type=int, dest="n_jobs")
    p.add_argument("--output-dir", type=Path, dest="output_dir")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA if isinstance(exc.cause, DataError) else EXIT_ESTIMATION
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, simlab.SimulationError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
