"""Batch command-line front end.

Subcommands: ``simulate`` (dataset generation), ``run`` (filter execution
over a dataset directory), ``compare`` (side-by-side metrics of run files),
``montecarlo`` (seed sweeps with optional process-level parallelism).

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numerical failure.  ``EQUINAV_THREADS`` caps Monte-Carlo worker processes.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import InitConfig, RunConfig
from .evaluate import compare_runs, error_at, format_compare_table, summarize
from .io import (
    DataError,
    load_dataset,
    read_json,
    read_run_csv,
    save_dataset,
    summary_payload,
    write_json,
    write_run_csv,
)
from .lie import BranchPointError
from .runner import FILTER_KINDS, run_filter
from .sim import PROFILES, SimScenario, simulate_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    """Invalid flag values or configuration."""


class NumericalError(ArithmeticError):
    """Filter produced non-finite estimates."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_vector_list(text: str) -> list[list[float]]:
    """Parse ``"x,y,z;x,y,z"`` into a list of 3-vectors."""
    out = []
    for chunk in text.split(";"):
        parts = [p for p in chunk.split(",") if p.strip()]
        if len(parts) != 3:
            raise UsageError(f"expected 3 comma-separated numbers per vector, got {chunk!r}")
        try:
            out.append([float(p) for p in parts])
        except ValueError as exc:
            raise UsageError(f"bad vector {chunk!r}: {exc}") from exc
    return out


def _parse_seeds(text: str) -> list[int]:
    """Parse ``"0:20"`` (half-open range) or ``"0,1,5"`` into seed lists."""
    try:
        if ":" in text:
            lo, hi = text.split(":")
            seeds = list(range(int(lo), int(hi)))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad seed list {text!r}: {exc}") from exc
    if not seeds:
        raise UsageError(f"seed list {text!r} is empty")
    return seeds


def _resolve_scenario(name_or_path: str, args) -> SimScenario:
    """A profile name or a scenario.json path, plus flag overrides."""
    if name_or_path in PROFILES:
        scenario = SimScenario(profile=name_or_path)
    elif Path(name_or_path).exists():
        scenario = SimScenario.from_dict(read_json(name_or_path))
    else:
        raise UsageError(
            f"--scenario {name_or_path!r} is neither a profile {PROFILES} "
            "nor an existing file"
        )
    updates = {}
    if getattr(args, "duration", None) is not None:
        updates["duration"] = args.duration
    if getattr(args, "imu_rate", None) is not None:
        updates["imu_rate"] = args.imu_rate
    if getattr(args, "gnss_rates", None) is not None:
        rates = tuple(float(r) for r in args.gnss_rates.split(","))
        updates["gnss_rates"] = rates
    if getattr(args, "levers", None) is not None:
        levers = tuple(tuple(v) for v in _parse_vector_list(args.levers))
        updates["lever_arms"] = levers
    if getattr(args, "gnss_sigma", None) is not None:
        updates["gnss_sigma"] = args.gnss_sigma
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if updates:
        try:
            scenario = replace(scenario, **updates)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    if getattr(args, "noise_free", False):
        scenario = scenario.noise_free()
    return scenario


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None) is not None:
        try:
            config = RunConfig.from_dict(read_json(args.config))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise UsageError(f"{args.config}: invalid config: {exc}") from exc
    else:
        config = RunConfig()
    init = config.init
    if getattr(args, "init_yaw_deg", None) is not None:
        init = replace(init, yaw_deg=args.init_yaw_deg)
    if getattr(args, "init_calib", None) is not None:
        init = replace(init, calib=np.asarray(_parse_vector_list(args.init_calib)))
    if getattr(args, "init_from_truth", False):
        init = replace(init, from_truth=True)
    config = replace(config, init=init)
    if getattr(args, "t0", None) is not None:
        config = replace(config, t0=args.t0)
    if getattr(args, "filter", None) is not None:
        config = replace(config, filter=args.filter)
    return config


def _check_finite(record) -> None:
    for name, arr in (("position", record.est_p), ("velocity", record.est_v),
                      ("covariance diagonal", record.p_diag)):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"filter {record.filter_name} produced non-finite {name}")


def _summary_or_partial(record, t0: float) -> dict:
    if record.has_truth:
        return summary_payload(record, summarize(record, t0))
    payload = {"filter": record.filter_name, "rmse_pos": None, "rmse_att": None,
               "rmse_calib": None, "nees_mean": None, "t0": float(t0)}
    payload["final_calib"] = [list(map(float, row)) for row in record.est_calib[-1]]
    payload["n_updates"] = record.n_updates
    payload["n_rejected"] = record.n_rejected
    return payload


def cmd_simulate(args) -> int:
    scenario = _resolve_scenario(args.scenario, args)
    dataset = simulate_dataset(scenario)
    save_dataset(args.out, dataset)
    n_rows = len(dataset.imu.t)
    print(f"wrote {n_rows} IMU rows and {scenario.n_sensors} GNSS streams to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args)
    kinds = list(FILTER_KINDS) if config.filter == "both" else [config.filter]
    for kind in kinds:
        if kind not in FILTER_KINDS:
            raise UsageError(f"unknown filter {kind!r}; choose eqf, mekf, or both")
    dataset = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = {}
    for kind in kinds:
        record = run_filter(dataset, kind, config)
        _check_finite(record)
        records[kind] = record
        prefix = f"{kind}_" if len(kinds) > 1 else ""
        write_run_csv(out / f"{prefix}run.csv", record)
        write_json(out / f"{prefix}summary.json", _summary_or_partial(record, config.t0))
    if len(kinds) > 1:
        if all(rec.has_truth for rec in records.values()):
            comparison = compare_runs(records, config.t0)
            write_json(out / "compare.json", comparison)
            print(format_compare_table(comparison))
        else:
            logger.warning("dataset has no ground truth; compare.json skipped")
    for kind in kinds:
        summary = _summary_or_partial(records[kind], config.t0)
        if summary["rmse_pos"] is not None:
            print(f"{kind}: rmse_pos {summary['rmse_pos']:.4f} m, "
                  f"rmse_att {summary['rmse_att']:.4f} deg, "
                  f"nees {summary['nees_mean']:.3f} (t0={summary['t0']:g}s)")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        raise UsageError("need at least two run files")
    records = {}
    for path in args.runs:
        record = read_run_csv(path)
        if record.filter_name in records:
            raise UsageError(f"duplicate run label {record.filter_name!r}")
        records[record.filter_name] = record
    try:
        comparison = compare_runs(records, args.t0)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    print(format_compare_table(comparison))
    if args.json is not None:
        write_json(args.json, comparison)
    return EXIT_OK


def _mc_worker(payload):
    """One Monte-Carlo seed: simulate, run each filter, summarize."""
    scenario_dict, config_dict, kinds, checkpoint_t, seed = payload
    scenario = SimScenario.from_dict(scenario_dict)
    scenario = replace(scenario, seed=seed)
    config = RunConfig.from_dict(config_dict)
    dataset = simulate_dataset(scenario)
    result = {"seed": seed}
    for kind in kinds:
        try:
            record = run_filter(dataset, kind, config)
            _check_finite(record)
            entry = _summary_or_partial(record, config.t0)
            entry.update(error_at(record, checkpoint_t))
            entry["error"] = None
        except Exception as exc:  # reported per seed, aggregated by the parent
            entry = {"error": f"{type(exc).__name__}: {exc}"}
        result[kind] = entry
    return result


def _percentiles(values):
    arr = np.asarray(values, dtype=float)
    return {
        "median": float(np.median(arr)),
        "p10": float(np.percentile(arr, 10)),
        "p90": float(np.percentile(arr, 90)),
    }


def cmd_montecarlo(args) -> int:
    scenario = _resolve_scenario(args.scenario, args)
    config = _load_config(args)
    if args.attitude_error_deg is not None:
        config = replace(config, init=replace(config.init, yaw_deg=args.attitude_error_deg))
    kinds = tuple(FILTER_KINDS) if config.filter == "both" else (config.filter,)
    seeds = _parse_seeds(args.seeds)
    config = replace(config, seeds=tuple(seeds))
    payloads = [
        (scenario.to_dict(), config.to_dict(), kinds, args.checkpoint_t, seed)
        for seed in seeds
    ]
    env_threads = os.environ.get("EQUINAV_THREADS")
    max_workers = int(env_threads) if env_threads else (os.cpu_count() or 1)
    max_workers = max(1, min(max_workers, len(seeds)))
    if max_workers == 1:
        results = [_mc_worker(p) for p in payloads]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_mc_worker, payloads))
    results.sort(key=lambda r: r["seed"])

    failures = []
    aggregates = {}
    for kind in kinds:
        ok = [r for r in results if r[kind].get("error") is None]
        failures += [
            {"seed": r["seed"], "filter": kind, "error": r[kind]["error"]}
            for r in results if r[kind].get("error") is not None
        ]
        if ok:
            aggregates[kind] = {
                metric: _percentiles([r[kind][metric] for r in ok])
                for metric in ("rmse_pos", "rmse_att", "nees_mean", "att_err_deg")
            }
    win_rate = None
    if set(kinds) >= {"eqf", "mekf"}:
        paired = [
            r for r in results
            if r["eqf"].get("error") is None and r["mekf"].get("error") is None
        ]
        if paired:
            wins = sum(
                1 for r in paired if r["eqf"]["att_err_deg"] < r["mekf"]["att_err_deg"]
            )
            win_rate = {
                "metric": f"attitude error at t={args.checkpoint_t:g} s, degrees",
                "eqf_lower_than_mekf": wins / len(paired),
                "wins": wins,
                "n": len(paired),
            }
    payload = {
        "scenario": scenario.to_dict(),
        "config": config.to_dict(),
        "seeds": seeds,
        "checkpoint_t": args.checkpoint_t,
        "per_seed": results,
        "aggregates": aggregates,
        "win_rate": win_rate,
        "failures": failures,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "mc_summary.json", payload)
    rows = ["seed,filter,rmse_pos,rmse_att,nees_mean,att_err_deg,pos_err_m"]
    for r in results:
        for kind in kinds:
            entry = r[kind]
            if entry.get("error") is None:
                rows.append(",".join([str(r["seed"]), kind] + [
                    repr(float(entry[m]))
                    for m in ("rmse_pos", "rmse_att", "nees_mean", "att_err_deg", "pos_err_m")
                ]))
    (out / "mc_seeds.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    for kind in kinds:
        if kind in aggregates:
            agg = aggregates[kind]
            print(f"{kind}: median rmse_pos {agg['rmse_pos']['median']:.4f} m, "
                  f"median rmse_att {agg['rmse_att']['median']:.4f} deg, "
                  f"median nees {agg['nees_mean']['median']:.3f}")
    if win_rate is not None:
        print(f"win rate ({win_rate['metric']}): eqf lower in "
              f"{win_rate['wins']}/{win_rate['n']} seeds")
    if failures:
        for f in failures:
            print(f"seed {f['seed']} [{f['filter']}] failed: {f['error']}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="equinav",
                     description="Biased-INS + multi-GNSS filter toolbox")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a dataset directory")
    p_sim.add_argument("--scenario", required=True,
                       help=f"profile name {PROFILES} or scenario.json path")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--duration", type=float, default=None, help="seconds")
    p_sim.add_argument("--imu-rate", type=float, default=None, help="Hz")
    p_sim.add_argument("--gnss-rates", default=None, help='per-sensor Hz, e.g. "5,5"')
    p_sim.add_argument("--gnss-sigma", type=float, default=None, help="meters, 1-sigma")
    p_sim.add_argument("--levers", default=None,
                       help='true lever arms "x,y,z;x,y,z" (meters)')
    p_sim.add_argument("--noise-free", action="store_true",
                       help="zero all noise densities and biases")
    p_sim.set_defaults(func=cmd_simulate)

    p_run = sub.add_parser("run", help="run filters over a dataset directory")
    p_run.add_argument("--data", required=True, help="dataset directory")
    p_run.add_argument("--filter", choices=("eqf", "mekf", "both"), default=None)
    p_run.add_argument("--config", default=None, help="RunConfig JSON path")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--t0", type=float, default=None,
                       help="asymptotic-phase start (seconds)")
    p_run.add_argument("--init-yaw-deg", type=float, default=None)
    p_run.add_argument("--init-calib", default=None,
                       help='initial lever-arm estimates "x,y,z;x,y,z"')
    p_run.add_argument("--init-from-truth", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two or more run.csv files")
    p_cmp.add_argument("--runs", nargs="+", required=True)
    p_cmp.add_argument("--t0", type=float, default=40.0)
    p_cmp.add_argument("--json", default=None, help="also write the comparison JSON here")
    p_cmp.set_defaults(func=cmd_compare)

    p_mc = sub.add_parser("montecarlo", help="seed sweep with aggregation")
    p_mc.add_argument("--scenario", required=True)
    p_mc.add_argument("--seeds", required=True, help='"0:20" or "0,1,5"')
    p_mc.add_argument("--filter", choices=("eqf", "mekf", "both"), default="both")
    p_mc.add_argument("--attitude-error-deg", type=float, default=None,
                      help="initial yaw offset applied to every run")
    p_mc.add_argument("--checkpoint-t", type=float, default=20.0,
                      help="time of the transient checkpoint (seconds)")
    p_mc.add_argument("--t0", type=float, default=None)
    p_mc.add_argument("--config", default=None)
    p_mc.add_argument("--duration", type=float, default=None)
    p_mc.add_argument("--out", required=True)
    p_mc.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError, BranchPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
