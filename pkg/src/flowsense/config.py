"""Scenario configuration: the single structured document per experiment.

A scenario bundles the truth schedule, well geometry and reservoir
properties, observation noise, jump-process block, particle count and
estimator settings.  Keys carry explicit units (``sample_period_s``,
``noise_rel_std``); the bundled ``pos_default``/``ios_default`` documents
mirror the reference twin experiment so they run with zero edits.
"""

import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .jumpmodel import JumpProcessSpec, MultiplierDistribution
from .lag1em import EmConfig
from .wellsim import (DEFAULT_PHYSICS, WellGeometry, WellPhysics,
                      ZoneProperties, reference_noise_model,
                      WellObservationModel)

__all__ = [
    "ConfigError",
    "TruthSchedule",
    "OptimizerSettings",
    "Scenario",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "bundled_scenario_names",
]

BUNDLED = ("pos_default", "ios_default")


class ConfigError(ValueError):
    """Malformed or inconsistent scenario document."""


@dataclass(frozen=True)
class TruthSchedule:
    """Right-continuous piecewise-constant true rates plus sampling grid."""
    pieces: tuple            # ((t_start, rates array), ...) time-ordered
    t0: float
    t_end: float
    sample_period: float

    def __post_init__(self):
        if self.t0 >= self.t_end:
            raise ConfigError("horizon start must precede its end")
        if self.sample_period <= 0.0:
            raise ConfigError("sample_period_s must be > 0")
        times = [t for t, _ in self.pieces]
        if times != sorted(times):
            raise ConfigError("truth pieces must be time-ordered")
        if not self.pieces or self.pieces[0][0] > self.t0:
            raise ConfigError("truth schedule must cover the horizon start")

    def rates_at(self, t):
        """Piecewise-constant lookup; at a jump time the new value holds."""
        idx = 0
        for i, (ts, _) in enumerate(self.pieces):
            if ts <= t:
                idx = i
            else:
                break
        return np.asarray(self.pieces[idx][1], dtype=float)

    def times(self):
        count = int(round((self.t_end - self.t0) / self.sample_period)) + 1
        return self.t0 + self.sample_period * np.arange(count)

    def rates_series(self):
        return np.asarray([self.rates_at(t) for t in self.times()])


@dataclass(frozen=True)
class OptimizerSettings:
    n_starts: int = 3
    bounds: tuple = (1e-6, 10.0)
    max_evals_per_start: int = 200
    xtol_log: float = 1e-3

    def __post_init__(self):
        if self.n_starts < 1:
            raise ConfigError("optimizer.n_starts must be >= 1")
        lo, hi = self.bounds
        if lo < 0 or hi <= lo:
            raise ConfigError("optimizer.bounds must satisfy 0 <= lo < hi")


@dataclass
class Scenario:
    """Fully resolved twin-experiment definition."""
    name: str
    schedule: TruthSchedule
    geometry_truth: WellGeometry
    geometry_assim: WellGeometry
    zones: tuple
    physics: WellPhysics
    noise_rel_std: float
    covariance_scaling_assim: float
    jump: JumpProcessSpec
    n_particles: int
    seed: int
    variance_regime: str = "manual"
    resampling: str = "multinomial"
    clamp_negative_rates: bool = False
    em: EmConfig = field(default_factory=EmConfig)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    n_repeat_seeds: int = 5
    _noise_cache: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.variance_regime not in ("manual", "fixed_interval",
                                        "lag1_em"):
            raise ConfigError(
                f"unknown variance_regime {self.variance_regime!r}")
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigError(f"unknown resampling {self.resampling!r}")
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")
        gt, ga = self.geometry_truth, self.geometry_assim
        if (gt.zone_intervals != ga.zone_intervals
                or gt.gauge_mds != ga.gauge_mds):
            raise ConfigError("truth and assimilation geometries must share "
                              "the md layout (they differ only in "
                              "segment_length)")

    @property
    def n_zones(self):
        return len(self.zones)

    def noise_model(self):
        """Unscaled W pinned to the truth's initial state (truth geometry)."""
        if self._noise_cache is None:
            q0 = self.schedule.rates_at(self.schedule.t0)
            self._noise_cache = reference_noise_model(
                self.geometry_truth, self.zones, q0, self.noise_rel_std,
                self.physics)
        return self._noise_cache

    def truth_observation_model(self):
        return WellObservationModel(self.geometry_truth, self.zones,
                                    self.noise_model(), self.physics)

    def assim_observation_model(self):
        noise = self.noise_model().with_scaling(self.covariance_scaling_assim)
        return WellObservationModel(self.geometry_assim, self.zones, noise,
                                    self.physics)

    def jump_dist(self):
        return self.jump.dist

    def sigma0(self):
        return self.jump.sigma0

    def initial_particles(self, rng, n=None):
        from .apf import initial_ensemble
        n = n if n is not None else self.n_particles
        q0 = self.schedule.rates_at(self.schedule.t0)
        return initial_ensemble(q0, self.jump.dist, n, rng)


def _require(block, key, path):
    if key not in block:
        raise ConfigError(f"missing required key: {path}{key}")
    return block[key]


def _as_float(value, path):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key {path} must be a number, got {value!r}")


def scenario_from_dict(doc):
    """Validate and resolve a scenario document (plain dict)."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be a mapping")
    name = str(doc.get("name", "scenario"))

    well = _require(doc, "well", "")
    zones_block = _require(well, "zones", "well.")
    zones = []
    intervals = []
    for i, zb in enumerate(zones_block):
        path = f"well.zones[{i}]."
        intervals.append((_as_float(_require(zb, "md_start_m", path), path),
                          _as_float(_require(zb, "md_end_m", path), path)))
        zones.append(ZoneProperties(
            name=str(zb.get("name", f"Z{i + 1}")),
            phase=str(_require(zb, "phase", path)),
            reservoir_pressure=_as_float(
                _require(zb, "reservoir_pressure_pa", path), path),
            reservoir_temperature=_as_float(
                _require(zb, "reservoir_temperature_k", path), path)))
    gauge_mds = [_as_float(g, "well.gauge_mds_m")
                 for g in _require(well, "gauge_mds_m", "well.")]

    def geometry(seg_len):
        return WellGeometry(
            zone_intervals=tuple(intervals),
            gauge_mds=tuple(gauge_mds),
            segment_length=seg_len,
            vertical_depth_top=_as_float(well.get("vertical_depth_top_m",
                                                  0.0), "well."),
            inclined_start_tvd=_as_float(well.get("inclined_start_tvd_m",
                                                  1000.0), "well."),
            inclined_end_tvd=_as_float(well.get("inclined_end_tvd_m",
                                                1500.0), "well."),
            curvature=_as_float(well.get("curvature_deg_per_m", 0.11),
                                "well."))

    seg_truth = _as_float(_require(doc, "segment_length_truth_m", ""), "")
    seg_assim = _as_float(_require(doc, "segment_length_assim_m", ""), "")

    truth = _require(doc, "truth", "")
    pieces = []
    for i, pb in enumerate(_require(truth, "pieces", "truth.")):
        path = f"truth.pieces[{i}]."
        rates = [_as_float(x, path + "rates_kg_s")
                 for x in _require(pb, "rates_kg_s", path)]
        if len(rates) != len(zones):
            raise ConfigError(f"{path}rates_kg_s must list one rate per zone")
        pieces.append((_as_float(_require(pb, "t_start_s", path), path),
                       np.asarray(rates)))
    schedule = TruthSchedule(
        pieces=tuple(pieces),
        t0=_as_float(_require(doc, "horizon_start_s", ""), ""),
        t_end=_as_float(_require(doc, "horizon_end_s", ""), ""),
        sample_period=_as_float(_require(doc, "sample_period_s", ""), ""))

    jump_block = _require(doc, "jump", "")
    for key in ("support", "probs", "sigma0"):
        _require(jump_block, key, "jump.")
    try:
        jump = JumpProcessSpec.from_config(
            {"support": jump_block["support"],
             "probs": jump_block["probs"],
             "sigma0": [_as_float(s, "jump.sigma0")
                        for s in jump_block["sigma0"]]},
            n_zones=len(zones))
    except ValueError as err:
        raise ConfigError(f"jump block invalid: {err}")

    phys_block = doc.get("physics", {})
    physics = WellPhysics(**{k: _as_float(v, f"physics.{k}")
                             for k, v in phys_block.items()}) \
        if phys_block else DEFAULT_PHYSICS

    em_block = doc.get("em", {})
    em = EmConfig(
        initial_sigma=tuple(_as_float(s, "em.initial_sigma")
                            for s in em_block.get("initial_sigma",
                                                  [1.0] * len(zones))),
        rel_tol=_as_float(em_block.get("rel_tol", 1e-3), "em.rel_tol"),
        max_iter=int(em_block.get("max_iter", 100)),
        proposal_inflation=_as_float(em_block.get("proposal_inflation", 3.0),
                                     "em.proposal_inflation"),
        proposal_samples=int(em_block.get("proposal_samples", 200)),
        multiplier_samples=int(em_block.get("multiplier_samples", 50)))

    opt_block = doc.get("optimizer", {})
    optimizer = OptimizerSettings(
        n_starts=int(opt_block.get("n_starts", 3)),
        bounds=tuple(_as_float(b, "optimizer.bounds")
                     for b in opt_block.get("bounds", [1e-6, 10.0])),
        max_evals_per_start=int(opt_block.get("max_evals_per_start", 200)),
        xtol_log=_as_float(opt_block.get("xtol_log", 1e-3),
                           "optimizer.xtol_log"))

    try:
        return Scenario(
            name=name,
            schedule=schedule,
            geometry_truth=geometry(seg_truth),
            geometry_assim=geometry(seg_assim),
            zones=tuple(zones),
            physics=physics,
            noise_rel_std=_as_float(_require(doc, "noise_rel_std", ""), ""),
            covariance_scaling_assim=_as_float(
                doc.get("covariance_scaling_assim", 1.0), ""),
            jump=jump,
            n_particles=int(_require(doc, "n_particles", "")),
            seed=int(doc.get("seed", 0)),
            variance_regime=str(doc.get("variance_regime", "manual")),
            resampling=str(doc.get("resampling", "multinomial")),
            clamp_negative_rates=bool(doc.get("clamp_negative_rates", False)),
            em=em,
            optimizer=optimizer,
            n_repeat_seeds=int(doc.get("n_repeat_seeds", 5)))
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(str(err))


def scenario_to_dict(scenario):
    """Resolved document (plain types), suitable for snapshots/manifests."""
    zones = []
    for z, (a, b) in zip(scenario.zones,
                         scenario.geometry_truth.zone_intervals):
        zones.append({"name": z.name, "phase": z.phase,
                      "md_start_m": a, "md_end_m": b,
                      "reservoir_pressure_pa": z.reservoir_pressure,
                      "reservoir_temperature_k": z.reservoir_temperature})
    phys = scenario.physics
    return {
        "name": scenario.name,
        "horizon_start_s": scenario.schedule.t0,
        "horizon_end_s": scenario.schedule.t_end,
        "sample_period_s": scenario.schedule.sample_period,
        "truth": {"pieces": [{"t_start_s": t,
                              "rates_kg_s": list(map(float, r))}
                             for t, r in scenario.schedule.pieces]},
        "well": {
            "vertical_depth_top_m": scenario.geometry_truth.vertical_depth_top,
            "inclined_start_tvd_m": scenario.geometry_truth.inclined_start_tvd,
            "inclined_end_tvd_m": scenario.geometry_truth.inclined_end_tvd,
            "curvature_deg_per_m": scenario.geometry_truth.curvature,
            "gauge_mds_m": list(scenario.geometry_truth.gauge_mds),
            "zones": zones,
        },
        "segment_length_truth_m": scenario.geometry_truth.segment_length,
        "segment_length_assim_m": scenario.geometry_assim.segment_length,
        "noise_rel_std": scenario.noise_rel_std,
        "covariance_scaling_assim": scenario.covariance_scaling_assim,
        "jump": scenario.jump.to_config(),
        "n_particles": scenario.n_particles,
        "seed": scenario.seed,
        "variance_regime": scenario.variance_regime,
        "resampling": scenario.resampling,
        "clamp_negative_rates": scenario.clamp_negative_rates,
        "physics": {
            "gravity": phys.gravity, "rho_gas": phys.rho_gas,
            "rho_oil": phys.rho_oil, "friction_coeff": phys.friction_coeff,
            "relax_coeff": phys.relax_coeff, "cp_ref": phys.cp_ref,
            "surface_temperature": phys.surface_temperature,
            "geothermal_gradient": phys.geothermal_gradient,
            "dead_fluid_density": phys.dead_fluid_density,
        },
        "em": {"initial_sigma": list(map(float, scenario.em.initial_sigma)),
               "rel_tol": scenario.em.rel_tol,
               "max_iter": scenario.em.max_iter,
               "proposal_inflation": scenario.em.proposal_inflation,
               "proposal_samples": scenario.em.proposal_samples,
               "multiplier_samples": scenario.em.multiplier_samples},
        "optimizer": {"n_starts": scenario.optimizer.n_starts,
                      "bounds": list(scenario.optimizer.bounds),
                      "max_evals_per_start":
                          scenario.optimizer.max_evals_per_start,
                      "xtol_log": scenario.optimizer.xtol_log},
        "n_repeat_seeds": scenario.n_repeat_seeds,
    }


def bundled_scenario_names():
    return BUNDLED


def load_scenario(path_or_name):
    """Load a scenario YAML from a path or a bundled name."""
    if path_or_name in BUNDLED:
        text = resources.files("flowsense.scenarios") \
            .joinpath(f"{path_or_name}.yaml").read_text()
    else:
        try:
            with io.open(path_or_name, "r") as fh:
                text = fh.read()
        except FileNotFoundError:
            raise ConfigError(f"no such scenario file or bundled name: "
                              f"{path_or_name!r}")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"scenario document does not parse: {err}")
    return scenario_from_dict(doc)


def dump_scenario(scenario, stream=None):
    return yaml.safe_dump(scenario_to_dict(scenario), stream,
                          default_flow_style=False, sort_keys=False)
