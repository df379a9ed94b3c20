"""Synthetic wellbore observation operator: zone rates -> gauge P/T.

This module replaces an external transient well flow simulator with a
small steady-state model whose equations are frozen here so that every
derived test value is reproducible.  The estimation machinery only needs
a deterministic, nonlinear, resolution-sensitive map with distinct
pressure/temperature responses to the gas and oil rates; absolute
physical realism is a non-goal.

Physics contract (single-pass march from the well bottom to each gauge,
over segments no longer than ``segment_length``):

1. Zone inflow enters at the deep end of the segment that contains it,
   pro-rated by the overlap of the segment with the zone interval.  The
   stream temperature mixes mass-flow-weighted: each zone contributes at
   its reservoir temperature.
2. Mixture density is the mass-weighted average of the phase densities
   of all streams that have entered so far.
3. Pressure marches upward from the deepest zone's reservoir pressure,
   losing ``rho_mix * g * dTVD`` (hydrostatic) plus
   ``friction_coeff * G^2 / rho_mix * dMD`` (friction, G = total kg/s).
4. Temperature relaxes linearly toward the geothermal profile:
   ``T -= min(relax_coeff / (cp_ref * G) * dMD, 1) * (T - T_geo)``.
   With no flow the temperature IS the geothermal profile and the
   pressure is the pure hydrostatic column at ``dead_fluid_density``.
5. The trajectory is vertical down to ``inclined_start_tvd``, follows a
   circular arc of the given curvature until ``inclined_end_tvd`` (capped
   there), then is horizontal.  The geothermal profile is linear in TVD.

Coarsening ``segment_length`` coarsens the quadrature of (1)-(4), so runs
at 5 m and 50 m genuinely differ: that mismatch is the imperfect
observation scenario.

Channel convention, fixed: ``[p_gauge1, p_gauge2, t_gauge1, t_gauge2]``
(pressures Pa then temperatures K, gauges in ``gauge_mds`` order).
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import _kernels

__all__ = [
    "WellGeometry",
    "ZoneProperties",
    "WellPhysics",
    "GaugeRecord",
    "ObservationNoiseModel",
    "WellObservationModel",
    "simulate_gauges",
    "simulate_gauges_batch",
    "observe",
    "observation_loglik",
    "reference_noise_model",
    "true_vertical_depth",
    "DEFAULT_PHYSICS",
]


@dataclass(frozen=True)
class WellGeometry:
    """Well trajectory, zone intervals, gauge depths and march resolution.

    Depths are meters; ``zone_intervals`` are (md_start, md_end) pairs and
    ``gauge_mds`` pairs each gauge with the zone of the same index (the
    gauge sits above its zone in measured depth).
    """
    zone_intervals: tuple
    gauge_mds: tuple
    segment_length: float
    vertical_depth_top: float = 0.0
    inclined_start_tvd: float = 1000.0
    inclined_end_tvd: float = 1500.0
    curvature: float = 0.11  # degrees per meter of measured depth

    def __post_init__(self):
        object.__setattr__(self, "zone_intervals",
                           tuple((float(a), float(b))
                                 for a, b in self.zone_intervals))
        object.__setattr__(self, "gauge_mds",
                           tuple(float(g) for g in self.gauge_mds))
        if self.segment_length <= 0.0:
            raise ValueError("segment_length must be > 0")
        for i, (a, b) in enumerate(self.zone_intervals):
            if b <= a:
                raise ValueError(f"zone {i}: md_end must exceed md_start")
            length = b - a
            ratio = length / self.segment_length
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(
                    f"zone {i}: segment_length {self.segment_length} does "
                    f"not divide the zone interval length {length}")
        if len(self.gauge_mds) != len(self.zone_intervals):
            raise ValueError("one gauge per zone is required")
        for i, g in enumerate(self.gauge_mds):
            if g >= self.zone_intervals[i][0]:
                raise ValueError(
                    f"gauge {i} at md {g} must precede its zone along "
                    f"measured depth")

    @property
    def n_zones(self):
        return len(self.zone_intervals)

    def with_segment_length(self, segment_length):
        return replace(self, segment_length=float(segment_length))


@dataclass(frozen=True)
class ZoneProperties:
    """Reservoir state of one influx zone."""
    name: str
    phase: str  # "gas" or "oil"
    reservoir_pressure: float  # Pa
    reservoir_temperature: float  # K

    def __post_init__(self):
        if self.phase not in ("gas", "oil"):
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.reservoir_pressure <= 0.0 or self.reservoir_temperature <= 0.0:
            raise ValueError("reservoir pressure and temperature must be > 0")


@dataclass(frozen=True)
class WellPhysics:
    """Named constants of the frozen wellbore model (documented defaults)."""
    gravity: float = 9.81            # m/s^2
    rho_gas: float = 150.0           # kg/m^3, compressed-gas density
    rho_oil: float = 800.0           # kg/m^3
    friction_coeff: float = 1.6e3    # dP/dmd = friction_coeff * G^2 / rho
    relax_coeff: float = 200.0       # W/(m K), conductive relaxation
    cp_ref: float = 2000.0           # J/(kg K), reference heat capacity
    surface_temperature: float = 288.0  # K at tvd 0
    geothermal_gradient: float = 0.03   # K per m of tvd
    dead_fluid_density: float = 800.0   # kg/m^3, no-flow hydrostatic column

    def phase_density(self, phase):
        return self.rho_gas if phase == "gas" else self.rho_oil


DEFAULT_PHYSICS = WellPhysics()


@dataclass
class GaugeRecord:
    """Timestamped gauge pressures and temperatures."""
    time: float
    pressures: np.ndarray
    temperatures: np.ndarray

    def __post_init__(self):
        self.pressures = np.asarray(self.pressures, dtype=float)
        self.temperatures = np.asarray(self.temperatures, dtype=float)
        if self.pressures.shape != self.temperatures.shape:
            raise ValueError("pressure/temperature gauge counts differ")
        if not (np.all(np.isfinite(self.pressures))
                and np.all(np.isfinite(self.temperatures))):
            raise ValueError("gauge record entries must be finite")

    def vector(self):
        """Fixed channel layout: pressures then temperatures."""
        return np.concatenate([self.pressures, self.temperatures])

    @classmethod
    def from_vector(cls, time, vec):
        vec = np.asarray(vec, dtype=float)
        g = vec.size // 2
        return cls(time, vec[:g], vec[g:])


@dataclass
class ObservationNoiseModel:
    """Diagonal Gaussian observation noise, with an optional mis-scaling.

    ``covariance_diagonal`` holds per-channel variances in the fixed
    channel order; ``scaling`` multiplies all of them (0.5/1/2 in the
    covariance mis-specification studies).
    """
    covariance_diagonal: np.ndarray
    scaling: float = 1.0

    def __post_init__(self):
        self.covariance_diagonal = np.asarray(self.covariance_diagonal,
                                              dtype=float)
        if np.any(self.covariance_diagonal <= 0.0):
            raise ValueError("noise variances must be > 0")
        if self.scaling <= 0.0:
            raise ValueError("noise scaling must be > 0")

    @property
    def effective_diagonal(self):
        return self.scaling * self.covariance_diagonal

    def with_scaling(self, scaling):
        return ObservationNoiseModel(self.covariance_diagonal, scaling)


def true_vertical_depth(md, geometry):
    """TVD of a measured depth along the vertical-arc-horizontal path.

    The arc builds inclination at ``curvature`` deg/m starting vertical at
    ``inclined_start_tvd``; TVD is capped at ``inclined_end_tvd`` (after
    which the well is treated as horizontal).
    """
    md = np.asarray(md, dtype=float)
    top = geometry.vertical_depth_top
    md_arc_start = geometry.inclined_start_tvd - top
    k = math.radians(geometry.curvature)
    dtvd_target = geometry.inclined_end_tvd - geometry.inclined_start_tvd
    arg = k * dtvd_target
    arc_len = (math.asin(arg) if arg < 1.0 else 0.5 * math.pi) / k
    s = np.clip(md - md_arc_start, 0.0, arc_len)
    tvd = np.where(
        md <= md_arc_start,
        top + md,
        geometry.inclined_start_tvd + np.sin(k * s) / k)
    return np.minimum(tvd, geometry.inclined_end_tvd)


def _geothermal(tvd, physics):
    return physics.surface_temperature + physics.geothermal_gradient * tvd


@lru_cache(maxsize=32)
def _segment_grid(geometry, zones, physics):
    """Precompute the march grid (bottom -> shallowest gauge).

    Breakpoints at every zone boundary and gauge depth; spans between
    breakpoints are split into equal sub-segments no longer than
    ``segment_length``.
    """
    bottom = max(b for _, b in geometry.zone_intervals)
    top = min(geometry.gauge_mds)
    breaks = {bottom, top}
    for a, b in geometry.zone_intervals:
        for x in (a, b):
            if top <= x <= bottom:
                breaks.add(x)
    for g in geometry.gauge_mds:
        if top <= g <= bottom:
            breaks.add(g)
    breaks = sorted(breaks, reverse=True)

    seg_len, seg_dtvd, seg_tgeo, seg_frac, gauge_after = [], [], [], [], []
    gauge_lookup = {g: i for i, g in enumerate(geometry.gauge_mds)}
    r = geometry.n_zones
    for hi, lo in zip(breaks[:-1], breaks[1:]):
        nseg = max(1, int(math.ceil((hi - lo) / geometry.segment_length - 1e-9)))
        edges = np.linspace(hi, lo, nseg + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            seg_len.append(a - b)
            tvd_a = float(true_vertical_depth(a, geometry))
            tvd_b = float(true_vertical_depth(b, geometry))
            seg_dtvd.append(tvd_a - tvd_b)
            seg_tgeo.append(_geothermal(tvd_b, physics))
            frac = np.zeros(r)
            for z, (za, zb) in enumerate(geometry.zone_intervals):
                overlap = max(0.0, min(a, zb) - max(b, za))
                frac[z] = overlap / (zb - za)
            seg_frac.append(frac)
            gauge_after.append(gauge_lookup.get(b, -1))

    p_start = zones[int(np.argmax([b for _, b in geometry.zone_intervals]))]\
        .reservoir_pressure
    t_start = _geothermal(float(true_vertical_depth(bottom, geometry)),
                          physics)
    return {
        "seg_len": np.asarray(seg_len),
        "seg_dtvd": np.asarray(seg_dtvd),
        "seg_tgeo": np.asarray(seg_tgeo),
        "seg_frac": np.asarray(seg_frac),
        "gauge_after": np.asarray(gauge_after, dtype=np.int64),
        "p_start": float(p_start),
        "t_start": float(t_start),
        "zone_rho": np.asarray([physics.phase_density(z.phase)
                                for z in zones]),
        "zone_tres": np.asarray([z.reservoir_temperature for z in zones]),
    }


def simulate_gauges_batch(geometry, zones, q_batch, physics=DEFAULT_PHYSICS):
    """Noise-free gauge channels for a batch of rate vectors.

    Returns a (B, 2 * n_gauges) channel matrix in the fixed layout.
    Raises ValueError for negative or non-finite rates.
    """
    q_batch = np.ascontiguousarray(q_batch, dtype=float)
    if q_batch.ndim != 2 or q_batch.shape[1] != geometry.n_zones:
        raise ValueError("rate batch must be (B, n_zones)")
    if not np.all(np.isfinite(q_batch)):
        raise ValueError("rates must be finite")
    if np.any(q_batch < 0.0):
        raise ValueError("negative zone rates are outside the model domain")
    grid = _segment_grid(geometry, tuple(zones), physics)
    pres, temp = _kernels.march_batch(
        q_batch, grid["seg_len"], grid["seg_dtvd"], grid["seg_tgeo"],
        grid["seg_frac"], grid["gauge_after"], len(geometry.gauge_mds),
        grid["p_start"], grid["t_start"], grid["zone_rho"],
        grid["zone_tres"], physics.gravity, physics.friction_coeff,
        physics.relax_coeff, physics.cp_ref, physics.dead_fluid_density)
    return np.hstack([pres, temp])


def simulate_gauges(geometry, zones, q, physics=DEFAULT_PHYSICS, time=0.0):
    """Deterministic noise-free gauge record for one rate vector."""
    channels = simulate_gauges_batch(geometry, zones,
                                     np.asarray(q, dtype=float)[None, :],
                                     physics)[0]
    g = len(geometry.gauge_mds)
    return GaugeRecord(time, channels[:g], channels[g:])


def observe(record, noise, rng):
    """Add independent zero-mean Gaussian noise per channel."""
    vec = record.vector() + rng.standard_normal(2 * record.pressures.size) \
        * np.sqrt(noise.effective_diagonal)
    return GaugeRecord.from_vector(record.time, vec)


def _diag_gauss_loglik(residuals, variances):
    return -0.5 * np.sum(np.log(2.0 * np.pi * variances)
                         + residuals * residuals / variances, axis=-1)


class WellObservationModel:
    """Bundles geometry, zones, physics and noise into the filter's H.

    ``loglik_batch`` is the per-particle hot path; particles with any
    negative rate get log-likelihood -inf (the wellbore model rejects
    them, so the estimator treats them as impossible).
    """

    def __init__(self, geometry, zones, noise, physics=DEFAULT_PHYSICS):
        self.geometry = geometry
        self.zones = tuple(zones)
        self.noise = noise
        self.physics = physics

    @property
    def n_channels(self):
        return 2 * len(self.geometry.gauge_mds)

    def simulate_batch(self, q_batch):
        return simulate_gauges_batch(self.geometry, self.zones, q_batch,
                                     self.physics)

    def loglik_batch(self, y_vec, q_batch):
        q_batch = np.asarray(q_batch, dtype=float)
        valid = np.all(q_batch >= 0.0, axis=1) & \
            np.all(np.isfinite(q_batch), axis=1)
        out = np.full(q_batch.shape[0], -np.inf)
        if np.any(valid):
            channels = self.simulate_batch(q_batch[valid])
            out[valid] = _diag_gauss_loglik(
                np.asarray(y_vec, dtype=float) - channels,
                self.noise.effective_diagonal)
        return out

    def loglik(self, y_vec, q):
        return float(self.loglik_batch(y_vec,
                                       np.asarray(q, dtype=float)[None, :])[0])


def observation_loglik(y, q, geometry, zones, noise,
                       physics=DEFAULT_PHYSICS):
    """log N(y; H(q), scaling * W) over all gauge channels."""
    model = WellObservationModel(geometry, zones, noise, physics)
    y_vec = y.vector() if isinstance(y, GaugeRecord) else np.asarray(y)
    return model.loglik(y_vec, q)


def reference_noise_model(geometry, zones, q_ref, rel_std=2e-4,
                          physics=DEFAULT_PHYSICS):
    """Noise model pinned to a reference state: std = rel_std * |channel|.

    Computed once per scenario from the noise-free observation of the
    truth's initial rates, which keeps W constant over the whole window.
    """
    channels = simulate_gauges_batch(
        geometry, zones, np.asarray(q_ref, dtype=float)[None, :], physics)[0]
    return ObservationNoiseModel((rel_std * np.abs(channels)) ** 2)
