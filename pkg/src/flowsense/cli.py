"""Batch command-line interface: generate / filter / optimize / report.

Every command is pure in (configuration, seed, input paths): reruns
produce byte-identical result files.  A manifest.json capturing the
resolved configuration and seed is written to the output directory
before any results.  Exit codes: 0 success, 2 configuration or flag
error, 3 I/O failure, 4 numerical degeneracy.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .apf import DegeneracyError
from .config import ConfigError, load_scenario, scenario_to_dict
from .experiment import (load_observations, load_truth, load_run_summary,
                         observation_header, rmse_report, run_filter,
                         save_observations, save_run, save_truth,
                         synthesize_observations, time_mean_rmse, write_csv)
from .interval import OptimizationError, optimize_interval

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEGENERACY = 4


def _common_flags(sub):
    sub.add_argument("--seed", type=int, default=None,
                     help="master seed (overrides the config seed)")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker threads for independent sub-tasks")
    sub.add_argument("--degeneracy", choices=("abort", "uniform-reset"),
                     default="abort",
                     help="policy when every particle weight vanishes")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flowsense",
        description="Soft-sensing twin experiments: APF flow-rate "
                    "estimation with automatic jump-noise variances.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate",
                          help="synthesize truth and observation series")
    gen.add_argument("config", help="scenario YAML path or bundled name")
    _common_flags(gen)
    gen.set_defaults(func=cmd_generate)

    filt = subs.add_parser("filter", help="run the APF over an observation "
                                          "window")
    filt.add_argument("config")
    filt.add_argument("observations", help="observations.csv path")
    filt.add_argument("--regime",
                      choices=("manual", "fixed_interval", "lag1_em"),
                      default=None,
                      help="variance regime (default: config value)")
    filt.add_argument("--sigma", default=None,
                      help="comma-separated manual variances, e.g. 0.5,0.5")
    _common_flags(filt)
    filt.set_defaults(func=cmd_filter)

    opt = subs.add_parser("optimize", help="fixed-interval variance search")
    opt.add_argument("config")
    opt.add_argument("observations")
    opt.add_argument("--starts", type=int, default=None,
                     help="number of optimizer starts (default: config)")
    _common_flags(opt)
    opt.set_defaults(func=cmd_optimize)

    rep = subs.add_parser("report", help="RMSE comparison table from run "
                                         "directories")
    rep.add_argument("run_dirs", nargs="+")
    _common_flags(rep)
    rep.set_defaults(func=cmd_report)
    return parser


def _out_dir(args, default):
    out = args.out if args.out else default
    os.makedirs(out, exist_ok=True)
    return out


def _start_manifest(command, out_dir, scenario, seed, extra=None):
    manifest = {
        "command": command,
        "artifact_version": __version__,
        "seed": seed,
        "output_directory": os.path.abspath(out_dir),
        "config": scenario_to_dict(scenario) if scenario else None,
        "wall_clock": {"started_unix_s": time.time(), "elapsed_s": None},
    }
    if extra:
        manifest.update(extra)
    _write_manifest(out_dir, manifest)
    return manifest


def _write_manifest(out_dir, manifest):
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finish_manifest(out_dir, manifest):
    started = manifest["wall_clock"]["started_unix_s"]
    manifest["wall_clock"]["elapsed_s"] = time.time() - started
    _write_manifest(out_dir, manifest)


def _degeneracy_mode(args):
    return "uniform-reset" if args.degeneracy == "uniform-reset" else "raise"


def cmd_generate(args):
    scenario = load_scenario(args.config)
    seed = args.seed if args.seed is not None else scenario.seed
    out = _out_dir(args, "generate_out")
    manifest = _start_manifest("generate", out, scenario, seed)
    records = synthesize_observations(scenario, seed=seed)
    times = scenario.schedule.times()
    rates = scenario.schedule.rates_series()
    save_truth(os.path.join(out, "truth.csv"), times, rates)
    save_observations(os.path.join(out, "observations.csv"), records)
    _finish_manifest(out, manifest)
    print(f"wrote {len(records)} observation rows to {out}")
    return EXIT_OK


def _parse_sigma(text, n_zones):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--sigma must be comma-separated numbers, "
                          f"got {text!r}")
    if len(values) != n_zones:
        raise ConfigError(f"--sigma must list {n_zones} values")
    if any(v <= 0 for v in values):
        raise ConfigError("--sigma entries must be > 0")
    return np.asarray(values)


def cmd_filter(args):
    scenario = load_scenario(args.config)
    regime = args.regime or scenario.variance_regime
    if regime == "manual" and args.sigma is None:
        raise ConfigError("--sigma is required for --regime manual")
    if regime != "manual" and args.sigma is not None:
        raise ConfigError("--sigma is only valid with --regime manual")
    sigma = _parse_sigma(args.sigma, scenario.n_zones) if args.sigma else None
    seed = args.seed if args.seed is not None else scenario.seed
    out = _out_dir(args, "filter_out")
    manifest = _start_manifest("filter", out, scenario, seed, extra={
        "regime": regime,
        "sigma": list(map(float, sigma)) if sigma is not None else None,
        "observations_path": os.path.abspath(args.observations)})
    observations = load_observations(args.observations)

    truth_path = os.path.join(os.path.dirname(os.path.abspath(
        args.observations)), "truth.csv")
    truth = None
    if os.path.exists(truth_path):
        _, truth = load_truth(truth_path)

    report = run_filter(scenario, observations, regime=regime, sigma=sigma,
                        seed=seed, degeneracy=_degeneracy_mode(args),
                        truth=truth, threads=args.threads)
    save_run(report, out, scenario=scenario, observations=observations)
    _finish_manifest(out, manifest)
    if truth is not None:
        print(f"time-mean RMSE: {report.time_mean_rmse:.6g}")
    print(f"run artifacts in {out}")
    return EXIT_OK


def cmd_optimize(args):
    scenario = load_scenario(args.config)
    seed = args.seed if args.seed is not None else scenario.seed
    n_starts = args.starts if args.starts is not None \
        else scenario.optimizer.n_starts
    out = _out_dir(args, "optimize_out")
    manifest = _start_manifest("optimize", out, scenario, seed, extra={
        "n_starts": n_starts,
        "observations_path": os.path.abspath(args.observations)})
    observations = load_observations(args.observations)
    report = optimize_interval(
        observations, scenario, bounds=scenario.optimizer.bounds,
        n_starts=n_starts, seed=seed,
        max_evals=scenario.optimizer.max_evals_per_start,
        xtol_log=scenario.optimizer.xtol_log, threads=args.threads)

    rows = []
    for start_id, start in enumerate(report.starts):
        for eval_id, (sigma, cost) in enumerate(start.eval_log):
            rows.append([start_id, eval_id, *map(float, sigma), float(cost)])
    sigma_cols = [f"sigma_{z.phase}" for z in scenario.zones] \
        if len({z.phase for z in scenario.zones}) == len(scenario.zones) \
        else [f"sigma_q{i + 1}" for i in range(scenario.n_zones)]
    write_csv(os.path.join(out, "evaluations.csv"),
              ["start_id", "eval_id", *sigma_cols, "cost"], rows)

    doc = {
        "best_sigma": list(map(float, report.best_sigma)),
        "best_cost": float(report.best_cost),
        "seed": report.seed,
        "bounds": list(map(float, report.bounds)),
        "starts": [{
            "start_sigma": list(map(float, s.start_sigma)),
            "final_sigma": list(map(float, s.final_sigma)),
            "final_cost": float(s.final_cost),
            "evaluations": s.evaluations,
        } for s in report.starts],
    }
    with open(os.path.join(out, "optimizer_report.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _finish_manifest(out, manifest)
    print(f"best sigma {doc['best_sigma']} cost {doc['best_cost']:.6g}")
    return EXIT_OK


def cmd_report(args):
    out = _out_dir(args, "report_out")
    summaries = [load_run_summary(d) for d in args.run_dirs]
    table = rmse_report(summaries)
    header, rows = table.to_csv_rows()
    write_csv(os.path.join(out, "report.csv"), header, rows)
    text = table.to_text()
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(text + "\n")
    print(text)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegeneracyError, OptimizationError) as err:
        print(f"degeneracy: {err}", file=sys.stderr)
        return EXIT_DEGENERACY
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
