"""Auxiliary particle filter over the jump process.

The filter assimilates each observation in three moves: a Bayes weight
update (``filter_step``), an auxiliary resampling that biases index
selection toward particles whose multiplier-shifted positions match the
NEXT observation (``aux_resample``), and a prediction that adds the
process noise and corrects the weights for the lookahead bias
(``predict_step``).  The prediction's corrected weights are exactly the
Bayes update of the resampled ensemble reweighted back to the prior, so
one ``apf_step`` both advances time and absorbs the new observation.

All weight arithmetic is done in log space with max subtraction before
exponentiation; per-observation predictive log-likelihood terms are
accumulated on the ``FilterState`` for the variance estimators.

Observation models are duck-typed: anything with
``loglik_batch(y_vector, particles) -> (n,) log-likelihoods`` works, which
is how the linear-Gaussian validation hooks plug in.
"""

from dataclasses import dataclass, field

import numpy as np

from .jumpmodel import sample_multipliers

__all__ = [
    "ParticleEnsemble",
    "FilterState",
    "AuxResample",
    "DegeneracyError",
    "effective_sample_size",
    "posterior_summary",
    "multinomial_resample",
    "systematic_resample",
    "RESAMPLERS",
    "filter_step",
    "aux_resample",
    "predict_step",
    "apf_step",
    "initial_ensemble",
]

_STAGES = ("prior", "posterior", "resampled")
_WEIGHT_TOL = 1e-10


class DegeneracyError(RuntimeError):
    """All particle likelihoods vanished; carries diagnostics."""

    def __init__(self, message, max_loglik=None, ess=None, step=None):
        self.max_loglik = max_loglik
        self.ess = ess
        self.step = step
        detail = message
        if max_loglik is not None:
            detail += f" (max log-likelihood {max_loglik:.6g}"
            if ess is not None:
                detail += f", ess {ess:.3g}"
            detail += ")"
        if step is not None:
            detail += f" at step {step}"
        super().__init__(detail)


@dataclass
class ParticleEnsemble:
    """Weighted particle set; weights sum to 1, equal when resampled."""
    particles: np.ndarray  # (n, r)
    weights: np.ndarray    # (n,)
    stage: str

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.particles.ndim != 2:
            raise ValueError("particles must be (n, r)")
        n = self.particles.shape[0]
        if n < 1:
            raise ValueError("ensemble needs at least one particle")
        if self.weights.shape != (n,):
            raise ValueError("weights must be (n,)")
        if self.stage not in _STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError("weights must sum to 1")
        if self.stage == "resampled" and np.any(self.weights != 1.0 / n):
            raise ValueError("resampled ensembles carry uniform weights")

    @property
    def n(self):
        return self.particles.shape[0]

    @property
    def n_zones(self):
        return self.particles.shape[1]


@dataclass
class FilterState:
    """Ensemble plus the accumulated predictive log-likelihood terms."""
    ensemble: ParticleEnsemble
    time_index: int = 0
    log_predictive_terms: list = field(default_factory=list)


@dataclass
class AuxResample:
    """Output of the auxiliary resampling move.

    ``ensemble`` holds the selected lookahead points (theta * Q, equal
    weights); ``omega_logliks`` caches their observation log-likelihoods
    for the prediction-step weight correction.
    """
    ensemble: ParticleEnsemble
    indices: np.ndarray
    omega_logliks: np.ndarray


def effective_sample_size(ensemble):
    """1 / sum w^2, in [1, n]."""
    return 1.0 / float(np.sum(ensemble.weights ** 2))


def posterior_summary(ensemble):
    """Weighted mean and weighted (population) std per zone."""
    w = ensemble.weights
    mean = w @ ensemble.particles
    var = w @ (ensemble.particles - mean) ** 2
    return mean, np.sqrt(var)


def multinomial_resample(weights, n, rng):
    """SIR index draw: n iid categorical picks."""
    edges = np.cumsum(weights)
    edges[-1] = 1.0
    return np.searchsorted(edges, rng.random(n), side="right")


def systematic_resample(weights, n, rng):
    """One uniform offset, n evenly spaced points."""
    edges = np.cumsum(weights)
    edges[-1] = 1.0
    points = (rng.random() + np.arange(n)) / n
    return np.searchsorted(edges, points, side="right")


RESAMPLERS = {
    "multinomial": multinomial_resample,
    "systematic": systematic_resample,
}


def _as_vector(y):
    if hasattr(y, "vector"):
        return y.vector()
    return np.asarray(y, dtype=float)


def logsumexp(x):
    """Max-subtracted log-sum-exp; -inf for an all--inf input."""
    m = np.max(x)
    if not np.isfinite(m):
        return float(m) if m < 0 else float(np.sum(np.exp(x)))
    return float(m + np.log(np.sum(np.exp(x - m))))


def _normalize_log_weights(log_w):
    m = np.max(log_w)
    if not np.isfinite(m):
        return None
    w = np.exp(log_w - m)
    return w / w.sum()


def _log_weights(ensemble):
    with np.errstate(divide="ignore"):
        return np.log(ensemble.weights)


def filter_step(state, y, obs_model):
    """Bayes update: w_i proportional to w_i * p(y | Q_i), particles fixed.

    Appends ``log sum_i w_i p(y | Q_i)`` (the particle estimate of the
    predictive likelihood of ``y``) to the state's term list.
    """
    ens = state.ensemble
    if ens.stage != "prior":
        raise ValueError("filter_step requires a prior-stage ensemble")
    ll = obs_model.loglik_batch(_as_vector(y), ens.particles)
    log_w = _log_weights(ens) + ll
    term = float(logsumexp(log_w))
    weights = _normalize_log_weights(log_w)
    if weights is None:
        raise DegeneracyError("all posterior weights vanished",
                              max_loglik=float(np.max(ll)),
                              ess=effective_sample_size(ens),
                              step=state.time_index)
    posterior = ParticleEnsemble(ens.particles, weights, "posterior")
    return FilterState(posterior, state.time_index,
                       state.log_predictive_terms + [term])


def aux_resample(state, y_next, dist, obs_model, rng,
                 method="multinomial", on_degeneracy="raise"):
    """Auxiliary SIR using one-step-ahead likelihoods.

    Draws a multiplier vector per particle, forms the lookahead points
    ``omega = theta * Q`` (no noise yet), weights them by
    ``w * p(y_next | omega)`` and resamples indices.
    """
    ens = state.ensemble
    if ens.stage != "posterior":
        raise ValueError("aux_resample requires a posterior-stage ensemble")
    n = ens.n
    theta = sample_multipliers(dist, rng, size=n)
    omega = theta * ens.particles
    ll = obs_model.loglik_batch(_as_vector(y_next), omega)
    mu = _normalize_log_weights(_log_weights(ens) + ll)
    if mu is None:
        if on_degeneracy != "uniform-reset":
            raise DegeneracyError("all auxiliary weights vanished",
                                  max_loglik=float(np.max(ll)),
                                  ess=effective_sample_size(ens),
                                  step=state.time_index)
        mu = np.full(n, 1.0 / n)
    idx = RESAMPLERS[method](mu, n, rng)
    resampled = ParticleEnsemble(omega[idx], np.full(n, 1.0 / n), "resampled")
    return AuxResample(resampled, idx, ll[idx])


def _predict(aux, y_next, sigma, obs_model, rng, on_degeneracy="raise",
             step=None):
    """Propagate the selected lookahead points and correct the weights.

    Returns the posterior ensemble at the next time together with the
    predictive log-likelihood term implied by the lookahead-corrected
    prior weights (proportional to 1 / p(y_next | omega)).
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0.0):
        raise ValueError("noise variances must be nonnegative")
    omega = aux.ensemble.particles
    n = omega.shape[0]
    particles = omega + rng.standard_normal(omega.shape) * np.sqrt(sigma)
    ll_q = obs_model.loglik_batch(_as_vector(y_next), particles)
    with np.errstate(invalid="ignore"):
        log_ratio = ll_q - aux.omega_logliks
    log_ratio[np.isnan(log_ratio)] = -np.inf
    weights = _normalize_log_weights(log_ratio)
    term = float(logsumexp(log_ratio) - logsumexp(-aux.omega_logliks))
    if weights is None:
        if on_degeneracy != "uniform-reset":
            raise DegeneracyError("all corrected weights vanished",
                                  max_loglik=float(np.max(ll_q)),
                                  step=step)
        weights = np.full(n, 1.0 / n)
        term = -np.inf
    return ParticleEnsemble(particles, weights, "posterior"), term


def predict_step(aux, y_next, sigma, obs_model, rng):
    """Prediction with lookahead weight correction (posterior at k+1).

    New particles are ``omega + u`` with ``u ~ N(0, diag(sigma))``; the
    weights are proportional to
    ``p(y_next | Q_new) / p(y_next | omega_selected)``.
    """
    ensemble, _ = _predict(aux, y_next, sigma, obs_model, rng)
    return ensemble


def apf_step(state, y_next, dist, sigma, obs_model, rng,
             method="multinomial", on_degeneracy="raise"):
    """One full APF move: resample on the lookahead, predict, reweight."""
    aux = aux_resample(state, y_next, dist, obs_model, rng,
                       method=method, on_degeneracy=on_degeneracy)
    ensemble, term = _predict(aux, y_next, sigma, obs_model, rng,
                              on_degeneracy=on_degeneracy,
                              step=state.time_index + 1)
    return FilterState(ensemble, state.time_index + 1,
                       state.log_predictive_terms + [term])


def initial_ensemble(q0, dist, n, rng):
    """Truth-anchored start: q0 scaled by independent multiplier draws."""
    theta = sample_multipliers(dist, rng, size=n)
    particles = theta * np.asarray(q0, dtype=float)
    return ParticleEnsemble(particles, np.full(n, 1.0 / n), "prior")


@dataclass
class ApfRunResult:
    """Per-observation filter summaries for a full assimilation window."""
    means: np.ndarray        # (T, r) weighted posterior means
    stds: np.ndarray         # (T, r) weighted posterior stds
    ess: np.ndarray          # (T,)
    log_predictive_terms: np.ndarray  # (T,)
    sigmas: np.ndarray       # (T-1, r) noise variances used per transition
    final_state: FilterState = None


def run_apf(observations, obs_model, dist, sigma_for_step, init, rng,
            method="multinomial", on_degeneracy="raise"):
    """Drive the APF over a window of observations.

    ``observations`` is a sequence of gauge records or channel vectors;
    the first one updates the initial ensemble in place (Bayes step), each
    later one is assimilated by a full APF move.  ``sigma_for_step`` is
    called as ``(k, state, y_next, rng) -> variances`` before the move
    from observation k to k+1, which is where the lag-1 estimator plugs
    in.  ``init`` is the starting prior ``ParticleEnsemble``.
    """
    state = FilterState(init, 0, [])
    try:
        state = filter_step(state, observations[0], obs_model)
    except DegeneracyError:
        if on_degeneracy != "uniform-reset":
            raise
        n = init.n
        state = FilterState(
            ParticleEnsemble(init.particles, np.full(n, 1.0 / n),
                             "posterior"),
            0, [-np.inf])
    means, stds, ess_list, sigmas = [], [], [], []
    mean, std = posterior_summary(state.ensemble)
    means.append(mean)
    stds.append(std)
    ess_list.append(effective_sample_size(state.ensemble))
    for k in range(len(observations) - 1):
        y_next = observations[k + 1]
        sigma = np.asarray(sigma_for_step(k, state, y_next, rng), dtype=float)
        sigmas.append(sigma)
        state = apf_step(state, y_next, dist, sigma, obs_model, rng,
                         method=method, on_degeneracy=on_degeneracy)
        mean, std = posterior_summary(state.ensemble)
        means.append(mean)
        stds.append(std)
        ess_list.append(effective_sample_size(state.ensemble))
    return ApfRunResult(np.asarray(means), np.asarray(stds),
                        np.asarray(ess_list),
                        np.asarray(state.log_predictive_terms),
                        np.asarray(sigmas), state)
