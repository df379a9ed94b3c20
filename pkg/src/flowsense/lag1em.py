"""Lag-1 smoothing of the jump-process noise variances by EM.

Once the observation one step ahead of the current posterior arrives,
an importance-sampling bank is built once per time step: posterior
particles, a set of multiplier draws, and proposal points drawn from an
inflated Gaussian fitted to the particle-times-multiplier products.  The
sigma-independent part of the weights over (particle h, multiplier l,
proposal q) is precomputed; each EM iteration only refreshes the
transition factor and applies the closed-form weighted squared-error
variance update.  The update maximizes the quadratic surrogate exactly,
so the surrogate value is non-decreasing within an iteration.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .apf import DegeneracyError
from .jumpmodel import sample_multipliers

__all__ = [
    "EmConfig",
    "EmIteration",
    "EmIterationTrace",
    "EmSampleBank",
    "build_sample_bank",
    "omega_weights",
    "em_update",
    "surrogate_moments",
    "surrogate_from_moments",
    "surrogate_value",
    "em_iterate",
    "em_estimate",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    """EM controls; defaults follow the reference experimental setup."""
    initial_sigma: tuple = (1.0, 1.0)
    rel_tol: float = 1e-3
    max_iter: int = 100
    proposal_inflation: float = 3.0
    proposal_samples: int = 200      # s
    multiplier_samples: int = 50     # m
    variance_floor: float = 1e-8

    def __post_init__(self):
        if self.rel_tol <= 0.0:
            raise ValueError("rel_tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.proposal_inflation < 1.0:
            raise ValueError("proposal_inflation must be >= 1")
        if self.proposal_samples < 1 or self.multiplier_samples < 1:
            raise ValueError("sample counts must be >= 1")


@dataclass
class EmIteration:
    """One EM update with the surrogate moments it maximized.

    ``num``/``denom`` summarize the iteration's weights: the surrogate is
    exactly ``-0.5 * (denom * sum(log(2 pi sigma)) + sum(num / sigma))``
    as a function of sigma, so ascent and stationarity are checkable from
    the trace alone.  ``objective`` is that surrogate at the new sigma,
    with the weights normalized to sum 1.
    """
    sigma: np.ndarray
    objective: float
    num: np.ndarray = None
    denom: float = None


@dataclass
class EmIterationTrace:
    iterations: list
    converged: bool
    stop_reason: str  # "tolerance" or "max_iter"

    def __len__(self):
        return len(self.iterations)


@dataclass
class EmSampleBank:
    """Per-step Monte Carlo bank with the static weight component.

    ``static_hq[h, q] = w_h * f(y | qprop_q) / N(qprop_q; mu, Sigma)`` --
    the part of the weights that does not depend on sigma.  It is
    independent of the multiplier index, so it is stored (h, q)-compact;
    ``static_weight_component`` exposes the full (h, l, q) broadcast view.
    ``static_scaled_hq`` is the same matrix max-normalized in log space,
    which the iteration uses internally: the variance update is invariant
    to rescaling all weights, and the normalized form cannot underflow
    even when the raw observation likelihoods are astronomically small.
    """
    particles: np.ndarray   # (n, r) posterior particles
    weights: np.ndarray     # (n,) posterior weights
    theta: np.ndarray       # (m, r) multiplier draws
    qprop: np.ndarray       # (s, r) proposal points
    mu: np.ndarray          # (r,) proposal mean
    Sigma: np.ndarray       # (r,) inflated proposal variances
    static_hq: np.ndarray   # (n, s)
    static_scaled_hq: np.ndarray = None  # (n, s), raw / max(raw)

    def __post_init__(self):
        if self.static_scaled_hq is None:
            peak = np.max(self.static_hq)
            if peak > 0:
                self.static_scaled_hq = self.static_hq / peak
            else:
                self.static_scaled_hq = self.static_hq

    @property
    def static_weight_component(self):
        n, s = self.static_hq.shape
        m = self.theta.shape[0]
        return np.broadcast_to(self.static_hq[:, None, :], (n, m, s))

    @property
    def shape(self):
        return (self.particles.shape[0], self.theta.shape[0],
                self.qprop.shape[0])

    def _compact(self):
        """Exact-equivalent reduced arrays for the iteration kernel.

        Proposal columns whose static weights underflowed to hard zero
        contribute exactly nothing, so dropping them is bit-exact;
        duplicate multiplier rows are folded into integer counts.
        """
        if getattr(self, "_compact_cache", None) is None:
            active = np.flatnonzero(self.static_scaled_hq.max(axis=0) > 0.0)
            if active.size == 0:
                active = np.arange(self.qprop.shape[0])
            theta_unique, counts = np.unique(self.theta, axis=0,
                                             return_counts=True)
            self._compact_cache = (
                np.ascontiguousarray(self.static_scaled_hq[:, active]),
                theta_unique, counts.astype(np.float64),
                np.ascontiguousarray(self.qprop[active]))
        return self._compact_cache


def build_sample_bank(posterior, y_next, dist, obs_model, config, rng):
    """Draw the bank and precompute the sigma-independent weights.

    The proposal is Gaussian per zone with mean equal to the sample mean
    of all particle-multiplier products and variance ``inflation`` times
    their sample variance (floored at ``variance_floor`` when the
    products are degenerate).
    """
    if posterior.stage != "posterior":
        raise ValueError("build_sample_bank requires a posterior ensemble")
    theta = sample_multipliers(dist, rng, size=config.multiplier_samples)
    products = posterior.particles[:, None, :] * theta[None, :, :]  # (n,m,r)
    flat = products.reshape(-1, posterior.n_zones)
    mu = flat.mean(axis=0)
    empirical = flat.var(axis=0)
    Sigma = config.proposal_inflation * empirical
    if np.any(Sigma < config.variance_floor):
        log.warning("proposal variance floored at %g (empirical %s)",
                    config.variance_floor, empirical)
        Sigma = np.maximum(Sigma, config.variance_floor)
    qprop = mu + rng.standard_normal(
        (config.proposal_samples, posterior.n_zones)) * np.sqrt(Sigma)
    y_vec = y_next.vector() if hasattr(y_next, "vector") else \
        np.asarray(y_next, dtype=float)
    ll_y = obs_model.loglik_batch(y_vec, qprop)
    log_prop = -0.5 * np.sum(np.log(2.0 * np.pi * Sigma)
                             + (qprop - mu) ** 2 / Sigma, axis=1)
    log_static_q = ll_y - log_prop
    with np.errstate(divide="ignore"):
        log_w = np.log(posterior.weights)
    log_static = log_w[:, None] + log_static_q[None, :]
    peak = np.max(log_static)
    if not np.isfinite(peak):
        raise DegeneracyError("static EM weights all vanished",
                              max_loglik=float(np.max(ll_y)))
    static_hq = np.exp(log_static)
    if not np.all(np.isfinite(static_hq)):
        raise DegeneracyError("static EM weights are not finite",
                              max_loglik=float(np.max(ll_y)))
    return EmSampleBank(posterior.particles.copy(), posterior.weights.copy(),
                        theta, qprop, mu, Sigma, static_hq,
                        np.exp(log_static - peak))


def omega_weights(bank, sigma_prev):
    """Full (h, l, q) weights for one EM iteration.

    Only the transition density factor depends on ``sigma_prev``; the
    static component comes precomputed from the bank.
    """
    sigma_prev = np.asarray(sigma_prev, dtype=float)
    if np.any(sigma_prev <= 0.0):
        raise ValueError("sigma_prev must be strictly positive")
    omega = _kernels.omega_tensor(bank.static_hq, bank.particles, bank.theta,
                                  bank.qprop, sigma_prev)
    if not np.any(omega > 0.0):
        raise DegeneracyError("all EM weights are zero")
    return omega


def em_update(bank, omega):
    """Closed-form M-step: weighted squared residuals per zone.

    ``sigma_i = sum omega * (qprop_q_i - theta_l_i * Q_h_i)^2 / sum omega``
    with theta indexed by its multiplier sample and Q by its particle.
    """
    num, denom = _kernels.em_moments(omega, bank.particles, bank.theta,
                                     bank.qprop)
    if denom <= 0.0:
        raise DegeneracyError("EM update denominator is zero")
    return num / denom


def surrogate_moments(bank, omega):
    """Sufficient statistics (num, denom) of the surrogate in sigma.

    num[i] is the omega-weighted sum of squared zone-i residuals and
    denom the total weight; the surrogate objective as a function of
    sigma is ``-0.5 * (denom * sum_i log(2 pi sigma_i) + sum_i
    num_i / sigma_i)``.
    """
    num, denom = _kernels.em_moments(omega, bank.particles, bank.theta,
                                     bank.qprop)
    if denom <= 0.0:
        raise DegeneracyError("EM surrogate weights are zero")
    return num, denom


def surrogate_from_moments(num, denom, sigma, normalized=True):
    """Evaluate the surrogate at sigma from its sufficient statistics."""
    sigma = np.asarray(sigma, dtype=float)
    scale = denom if not normalized else 1.0
    num = np.asarray(num, dtype=float) / (denom if normalized else 1.0)
    return float(-0.5 * (scale * np.sum(np.log(2.0 * np.pi * sigma))
                         + np.sum(num / sigma)))


def surrogate_value(bank, omega, sigma):
    """Monte Carlo surrogate: sum of omega-weighted transition log-pdfs.

    Evaluated with the weights normalized to sum 1, which leaves the
    maximizer unchanged and keeps values comparable across iterations.
    """
    num, denom = surrogate_moments(bank, omega)
    return surrogate_from_moments(num, denom, sigma)


def em_iterate(bank, config):
    """Run the EM loop on a prepared bank; the bank is never rebuilt.

    Each iteration runs the fused kernel (weights computed on the fly,
    never re-materialized), which matches
    ``em_update(bank, omega_weights(bank, sigma_prev))`` to roundoff.
    The recorded objective is the normalized surrogate at the new sigma,
    which the closed-form update makes ``-0.5 * sum(log(2 pi sigma) + 1)``.
    """
    sigma_prev = np.asarray(config.initial_sigma, dtype=float)
    if sigma_prev.shape != (bank.particles.shape[1],):
        raise ValueError("initial_sigma length must equal the zone count")
    if np.any(sigma_prev <= 0.0):
        raise ValueError("initial_sigma must be strictly positive")
    static_c, theta_c, counts_c, qprop_c = bank._compact()
    iterations = []
    converged = False
    for _ in range(config.max_iter):
        num, denom = _kernels.em_iteration(static_c, bank.particles,
                                           theta_c, counts_c, qprop_c,
                                           sigma_prev)
        if denom <= 0.0:
            raise DegeneracyError("all EM weights are zero")
        sigma = num / denom
        if np.any(sigma <= 0.0):
            raise DegeneracyError("EM variance collapsed to zero")
        objective = float(-0.5 * np.sum(np.log(2.0 * np.pi * sigma) + 1.0))
        iterations.append(EmIteration(sigma, objective, num, denom))
        rel = np.linalg.norm(sigma - sigma_prev) / np.linalg.norm(sigma_prev)
        sigma_prev = sigma
        if rel < config.rel_tol:
            converged = True
            break
    trace = EmIterationTrace(iterations, converged,
                             "tolerance" if converged else "max_iter")
    return sigma_prev, trace


def em_estimate(posterior, y_next, dist, obs_model, config, rng):
    """Estimate the step-k noise variances from the k+1 observation."""
    bank = build_sample_bank(posterior, y_next, dist, obs_model, config, rng)
    return em_iterate(bank, config)
