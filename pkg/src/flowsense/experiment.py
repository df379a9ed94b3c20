"""Twin-experiment orchestration: truth, observations, filter runs, RMSE.

A run derives three independent random streams from one master seed
(observation noise, filter, optimizer), so the whole pipeline is
reproducible from a single integer and regimes compared on the same
observations share common filter randomness.

Run directories are self-contained: the resolved configuration snapshot,
the truth and observation series, per-step estimates and diagnostics,
the lag-1 variance trace when applicable, and a one-row summary.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .apf import run_apf, DegeneracyError
from .config import Scenario, TruthSchedule, load_scenario, dump_scenario
from .interval import optimize_interval
from .lag1em import em_estimate
from .wellsim import GaugeRecord, observe, simulate_gauges_batch

__all__ = [
    "RunReport",
    "default_scenario",
    "derived_seeds",
    "synthesize_observations",
    "run_filter",
    "rmse_report",
    "ReportTable",
    "time_mean_rmse",
    "save_run",
    "load_run_summary",
    "read_csv_columns",
    "write_csv",
    "observations_to_records",
]

REGIMES = ("manual", "fixed_interval", "lag1_em")
_FLOAT_FMT = "%.17g"


def default_scenario():
    """The bundled perfect-observation reference scenario."""
    return load_scenario("pos_default")


def derived_seeds(seed):
    """Child seeds (observation noise, filter, optimizer) of a master seed."""
    children = np.random.SeedSequence(seed).spawn(3)
    return {"observations": children[0], "filter": children[1],
            "optimizer": children[2]}


def synthesize_observations(scenario, seed=None, add_noise=True):
    """Truth rates -> truth-geometry gauges -> per-channel Gaussian noise.

    Truth-side noise always uses the unscaled W; assimilation-side
    mis-scaling never touches the synthetic data.  ``add_noise=False`` is
    the noise-off test mode.
    """
    seed = scenario.seed if seed is None else seed
    rng = np.random.default_rng(derived_seeds(seed)["observations"])
    times = scenario.schedule.times()
    rates = scenario.schedule.rates_series()
    channels = simulate_gauges_batch(scenario.geometry_truth, scenario.zones,
                                     rates, scenario.physics)
    noise = scenario.noise_model()
    records = []
    g = len(scenario.geometry_truth.gauge_mds)
    for t, row in zip(times, channels):
        rec = GaugeRecord(t, row[:g], row[g:])
        records.append(observe(rec, noise, rng) if add_noise else rec)
    return records


@dataclass
class RunReport:
    """Everything a filter run produced, RMSE recomputable from the series."""
    scenario_name: str
    regime: str
    seed: int
    covariance_scaling: float
    n_particles: int
    times: np.ndarray       # (T,)
    truth: np.ndarray       # (T, r)
    est_mean: np.ndarray    # (T, r)
    est_std: np.ndarray     # (T, r)
    ess: np.ndarray         # (T,)
    loglik_terms: np.ndarray  # (T,)
    time_mean_rmse: float
    sigma_const: np.ndarray = None      # manual / fixed_interval regimes
    sigma_series: np.ndarray = None     # (T-1, r), lag1_em regime
    em_iterations: np.ndarray = None    # (T-1,)
    em_converged: np.ndarray = None     # (T-1,)
    optimizer_report: object = None


def time_mean_rmse(est_mean, truth):
    """Per-step RMSE across zones, then averaged over the window."""
    err = np.asarray(est_mean) - np.asarray(truth)
    return float(np.mean(np.sqrt(np.mean(err * err, axis=1))))


class _Lag1Provider:
    def __init__(self, dist, obs_model, em_config):
        self.dist = dist
        self.obs_model = obs_model
        self.em_config = em_config
        self.traces = []

    def __call__(self, k, state, y_next, rng):
        sigma, trace = em_estimate(state.ensemble, y_next, self.dist,
                                   self.obs_model, self.em_config, rng)
        self.traces.append(trace)
        return sigma


def run_filter(scenario, observations, regime=None, sigma=None,
               sigma_interval=None, seed=None, degeneracy="abort",
               truth=None, threads=1):
    """Assimilate a window under one variance regime.

    ``sigma`` overrides the manual variances; ``sigma_interval`` skips the
    internal optimizer call for the fixed_interval regime.  ``truth``
    overrides the schedule-derived series used for RMSE (test hook and
    co-located truth files).
    """
    regime = regime or scenario.variance_regime
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    seed = scenario.seed if seed is None else seed
    seeds = derived_seeds(seed)
    rng = np.random.default_rng(seeds["filter"])
    obs_model = scenario.assim_observation_model()
    dist = scenario.jump_dist()
    init = scenario.initial_particles(rng)

    optimizer_report = None
    provider = None
    if regime == "manual":
        sigma_const = np.asarray(sigma if sigma is not None
                                 else scenario.sigma0(), dtype=float)
        sigma_fn = lambda k, state, y, r: sigma_const
    elif regime == "fixed_interval":
        if sigma_interval is None:
            optimizer_report = optimize_interval(
                observations, scenario,
                bounds=scenario.optimizer.bounds,
                n_starts=scenario.optimizer.n_starts,
                seed=int(seeds["optimizer"].generate_state(1)[0]),
                max_evals=scenario.optimizer.max_evals_per_start,
                xtol_log=scenario.optimizer.xtol_log,
                threads=threads)
            sigma_const = optimizer_report.best_sigma
        else:
            sigma_const = np.asarray(sigma_interval, dtype=float)
        sigma_fn = lambda k, state, y, r: sigma_const
    else:
        sigma_const = None
        provider = _Lag1Provider(dist, obs_model, scenario.em)
        sigma_fn = provider

    result = run_apf(observations, obs_model, dist, sigma_fn, init, rng,
                     method=scenario.resampling, on_degeneracy=degeneracy)

    times = np.asarray([rec.time for rec in observations])
    if truth is None:
        truth = np.asarray([scenario.schedule.rates_at(t) for t in times])
    rmse = time_mean_rmse(result.means, truth)
    report = RunReport(
        scenario_name=scenario.name, regime=regime, seed=seed,
        covariance_scaling=scenario.covariance_scaling_assim,
        n_particles=scenario.n_particles,
        times=times, truth=truth, est_mean=result.means,
        est_std=result.stds, ess=result.ess,
        loglik_terms=result.log_predictive_terms,
        time_mean_rmse=rmse, sigma_const=sigma_const,
        optimizer_report=optimizer_report)
    if provider is not None:
        report.sigma_series = result.sigmas
        report.em_iterations = np.asarray([len(t) for t in provider.traces])
        report.em_converged = np.asarray([t.converged
                                          for t in provider.traces])
    return report


# ---------------------------------------------------------------------------
# Persistence

def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_FLOAT_FMT % v if isinstance(v, float)
                             else v for v in row])


def read_csv_columns(path):
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    cols = {name: [] for name in header}
    for row in rows:
        for name, value in zip(header, row):
            cols[name].append(value)
    return cols


def _zone_labels(scenario):
    phases = [z.phase for z in scenario.zones]
    if len(set(phases)) == len(phases):
        return phases
    return [f"q{i + 1}" for i in range(len(phases))]


def observation_header(n_gauges):
    return (["time_s"]
            + [f"p_gauge{i + 1}_pa" for i in range(n_gauges)]
            + [f"t_gauge{i + 1}_k" for i in range(n_gauges)])


def save_observations(path, records):
    n_gauges = records[0].pressures.size
    rows = [[rec.time, *map(float, rec.vector())] for rec in records]
    write_csv(path, observation_header(n_gauges), rows)


def load_observations(path):
    cols = read_csv_columns(path)
    names = list(cols)
    times = [float(v) for v in cols["time_s"]]
    data = np.asarray([[float(v) for v in cols[name]]
                       for name in names[1:]]).T
    return [GaugeRecord.from_vector(t, row) for t, row in zip(times, data)]


def observations_to_records(observations):
    return [rec.vector() for rec in observations]


def save_truth(path, times, rates):
    r = rates.shape[1]
    header = ["time_s"] + [f"q{i + 1}_kg_s" for i in range(r)]
    write_csv(path, header, [[t, *map(float, row)]
                             for t, row in zip(times, rates)])


def load_truth(path):
    cols = read_csv_columns(path)
    times = np.asarray([float(v) for v in cols["time_s"]])
    rates = np.asarray([[float(v) for v in cols[name]]
                        for name in list(cols)[1:]]).T
    return times, rates


def save_run(report, run_dir, scenario=None, observations=None):
    """Persist a run directory (estimates, diagnostics, summary, traces)."""
    os.makedirs(run_dir, exist_ok=True)
    r = report.truth.shape[1]
    zone_cols = [f"q{i + 1}" for i in range(r)]

    if scenario is not None:
        with open(os.path.join(run_dir, "config.snapshot"), "w") as fh:
            fh.write(dump_scenario(scenario))
            fh.write(f"run_regime: {report.regime}\n")
            fh.write(f"run_seed: {report.seed}\n")
    if observations is not None:
        save_observations(os.path.join(run_dir, "observations.csv"),
                          observations)
    save_truth(os.path.join(run_dir, "truth.csv"), report.times, report.truth)

    est_header = (["time_s"] + [f"mean_{c}" for c in zone_cols]
                  + [f"std_{c}" for c in zone_cols])
    write_csv(os.path.join(run_dir, "estimates.csv"), est_header,
              [[t, *map(float, m), *map(float, s)]
               for t, m, s in zip(report.times, report.est_mean,
                                  report.est_std)])

    diag_header = (["time_s", "ess", "loglik_increment"]
                   + [f"mean_{c}" for c in zone_cols]
                   + [f"std_{c}" for c in zone_cols])
    write_csv(os.path.join(run_dir, "diagnostics.csv"), diag_header,
              [[t, float(e), float(l), *map(float, m), *map(float, s)]
               for t, e, l, m, s in zip(report.times, report.ess,
                                        report.loglik_terms,
                                        report.est_mean, report.est_std)])

    if report.sigma_series is not None and scenario is not None:
        labels = _zone_labels(scenario)
        header = (["time_s", "iterations"]
                  + [f"sigma_{lab}" for lab in labels] + ["converged"])
        write_csv(os.path.join(run_dir, "variances.csv"), header,
                  [[t, int(it), *map(float, s), int(c)]
                   for t, it, s, c in zip(report.times[:-1],
                                          report.em_iterations,
                                          report.sigma_series,
                                          report.em_converged)])

    summary_header = ["scenario", "regime", "seed", "covariance_scaling",
                      "n_particles", "time_mean_rmse",
                      "total_log_predictive"]
    summary_row = [report.scenario_name, report.regime, report.seed,
                   float(report.covariance_scaling), report.n_particles,
                   float(report.time_mean_rmse),
                   float(np.sum(report.loglik_terms))]
    if report.sigma_const is not None:
        summary_header += [f"sigma_{c}" for c in zone_cols]
        summary_row += list(map(float, report.sigma_const))
    write_csv(os.path.join(run_dir, "summary.csv"), summary_header,
              [summary_row])


def load_run_summary(run_dir):
    cols = read_csv_columns(os.path.join(run_dir, "summary.csv"))
    return {name: values[0] for name, values in cols.items()}


def recompute_rmse(run_dir):
    """Re-derive the time-mean RMSE from the persisted series."""
    _, truth = load_truth(os.path.join(run_dir, "truth.csv"))
    cols = read_csv_columns(os.path.join(run_dir, "estimates.csv"))
    r = truth.shape[1]
    mean = np.asarray([[float(v) for v in cols[f"mean_q{i + 1}"]]
                       for i in range(r)]).T
    return time_mean_rmse(mean, truth)


# ---------------------------------------------------------------------------
# Comparison tables

@dataclass
class ReportTable:
    """RMSE comparison: rows = (scenario, scaling), columns = regime."""
    row_keys: list
    col_keys: list
    values: np.ndarray  # (rows, cols), NaN when missing

    def to_csv_rows(self):
        header = ["scenario", "covariance_scaling"] + list(self.col_keys)
        rows = []
        for (name, scaling), vals in zip(self.row_keys, self.values):
            rows.append([name, float(scaling)]
                        + [float(v) for v in vals])
        return header, rows

    def to_text(self):
        header, rows = self.to_csv_rows()
        cells = [header] + [[f"{v:.6g}" if isinstance(v, float) else str(v)
                             for v in row] for row in rows]
        widths = [max(len(row[i]) for row in cells)
                  for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths))
                 for row in cells]
        return "\n".join(lines)


def rmse_report(summaries):
    """Build the comparison table from run summaries (dicts or reports)."""
    if not summaries:
        raise ValueError("at least one run is required")
    entries = []
    for s in summaries:
        if isinstance(s, RunReport):
            entries.append((s.scenario_name, s.covariance_scaling,
                            s.regime, s.time_mean_rmse))
        else:
            entries.append((s["scenario"], float(s["covariance_scaling"]),
                            s["regime"], float(s["time_mean_rmse"])))
    row_keys = sorted({(e[0], e[1]) for e in entries})
    col_keys = [r for r in REGIMES if any(e[2] == r for e in entries)]
    values = np.full((len(row_keys), len(col_keys)), np.nan)
    for name, scaling, regime, rmse in entries:
        i = row_keys.index((name, scaling))
        j = col_keys.index(regime)
        values[i, j] = rmse
    return ReportTable(row_keys, col_keys, values)
