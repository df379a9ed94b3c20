"""Markov jump process for zone flow rates.

Each zone rate evolves as ``q' = theta * q + u`` where ``theta`` is drawn
from a per-zone discrete multiplier distribution and ``u`` is zero-mean
Gaussian with per-zone variance.  Zones are independent in both the
multiplier draw and the noise, so the one-step transition density is a
product over zones of discrete Gaussian mixtures.

All variances in this module are variances, (kg/s)^2, never standard
deviations.  Randomness comes exclusively from an injected
``numpy.random.Generator`` so runs are reproducible from a single seed.
"""

import numpy as np

__all__ = [
    "MultiplierDistribution",
    "JumpProcessSpec",
    "sample_multipliers",
    "propagate",
    "transition_logpdf_given_theta",
    "gmm_transition_pdf",
]

_PROB_TOL = 1e-12


class MultiplierDistribution:
    """Per-zone discrete distributions of the rate multiplier.

    ``support[i]`` and ``probs[i]`` are the values and probabilities for
    zone ``i``.  Probabilities must be nonnegative and sum to 1 (within
    1e-12) per zone; support values must be strictly positive.
    """

    def __init__(self, support, probs):
        support = [np.asarray(s, dtype=float) for s in support]
        probs = [np.asarray(p, dtype=float) for p in probs]
        if len(support) != len(probs):
            raise ValueError("support and probs must list the same zone count")
        for i, (s, p) in enumerate(zip(support, probs)):
            if s.ndim != 1 or p.ndim != 1 or s.shape != p.shape:
                raise ValueError(
                    f"zone {i}: support and probs must be 1-d and equal length")
            if not np.all(np.isfinite(s)) or not np.all(np.isfinite(p)):
                raise ValueError(f"zone {i}: non-finite entries")
            if np.any(s <= 0.0):
                raise ValueError(f"zone {i}: support values must be > 0")
            if np.any(p < 0.0):
                raise ValueError(f"zone {i}: probabilities must be >= 0")
            if abs(p.sum() - 1.0) > _PROB_TOL:
                raise ValueError(
                    f"zone {i}: probabilities sum to {p.sum()!r}, expected 1")
        self.support = tuple(support)
        self.probs = tuple(probs)

    @property
    def n_zones(self):
        return len(self.support)

    @classmethod
    def shared(cls, support, probs, n_zones):
        """One common (support, probs) pair used for every zone."""
        return cls([support] * n_zones, [probs] * n_zones)

    def __repr__(self):
        return (f"MultiplierDistribution(n_zones={self.n_zones}, "
                f"support={[list(s) for s in self.support]})")


class JumpProcessSpec:
    """Multiplier distribution plus the initial noise variances sigma0.

    This is the jump-model block of the scenario configuration document:
    per-zone arrays ``support`` and ``probs`` plus the variance array
    ``sigma0``.
    """

    def __init__(self, dist, sigma0):
        sigma0 = np.asarray(sigma0, dtype=float)
        if sigma0.shape != (dist.n_zones,):
            raise ValueError("sigma0 length must equal the zone count")
        if np.any(sigma0 < 0.0):
            raise ValueError("sigma0 entries must be >= 0")
        self.dist = dist
        self.sigma0 = sigma0

    def to_config(self):
        supports = [list(map(float, s)) for s in self.dist.support]
        probs = [list(map(float, p)) for p in self.dist.probs]
        if all(s == supports[0] for s in supports) and \
                all(p == probs[0] for p in probs):
            supports, probs = supports[0], probs[0]
        return {"support": supports, "probs": probs,
                "sigma0": list(map(float, self.sigma0))}

    @classmethod
    def from_config(cls, block, n_zones):
        support = block["support"]
        probs = block["probs"]
        if support and not isinstance(support[0], (list, tuple)):
            dist = MultiplierDistribution.shared(support, probs, n_zones)
        else:
            dist = MultiplierDistribution(support, probs)
        if dist.n_zones != n_zones:
            raise ValueError("jump block zone count does not match the well")
        return cls(dist, block["sigma0"])


def sample_multipliers(dist, rng, size=None):
    """Draw one multiplier per zone, independently per zone.

    Returns shape ``(n_zones,)`` for ``size=None`` else ``(size, n_zones)``.
    """
    r = dist.n_zones
    if size is None:
        out = np.empty(r)
        for i in range(r):
            out[i] = rng.choice(dist.support[i], p=dist.probs[i])
        return out
    out = np.empty((size, r))
    for i in range(r):
        out[:, i] = rng.choice(dist.support[i], size=size, p=dist.probs[i])
    return out


def _check_sigma(sigma, positive=False):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0.0):
        raise ValueError("noise variances must be nonnegative")
    if positive and np.any(sigma <= 0.0):
        raise ValueError("density evaluation requires strictly positive "
                         "variances")
    return sigma


def propagate(q, theta, sigma, rng, clamp_negative=False):
    """One jump-process step: ``theta * q + u`` with ``u ~ N(0, sigma)``.

    ``q`` and ``theta`` broadcast over leading axes with zone on the last
    axis.  A zero variance gives the exact deterministic map for that zone.
    ``clamp_negative`` (stress-test aid, default off) floors the result at 0.
    """
    q = np.asarray(q, dtype=float)
    theta = np.asarray(theta, dtype=float)
    sigma = _check_sigma(sigma)
    out = theta * q + rng.standard_normal(np.broadcast_shapes(
        q.shape, theta.shape)) * np.sqrt(sigma)
    if clamp_negative:
        out = np.maximum(out, 0.0)
    return out


def transition_logpdf_given_theta(q_next, q, theta, sigma):
    """log f(q_next | q, theta, sigma): diagonal-Gaussian log-density.

    Sums over the trailing (zone) axis; broadcasts over leading axes.
    """
    sigma = _check_sigma(sigma, positive=True)
    q_next = np.asarray(q_next, dtype=float)
    mean = np.asarray(theta, dtype=float) * np.asarray(q, dtype=float)
    d = q_next - mean
    return -0.5 * np.sum(np.log(2.0 * np.pi * sigma) + d * d / sigma, axis=-1)


def gmm_transition_pdf(q_next, q, dist, sigma):
    """Transition density with the multiplier marginalized out.

    Product over zones of ``sum_j P_j N(q_next_i; c_j q_i, sigma_i)`` --
    the Gaussian-mixture law implied by the jump process.
    """
    sigma = _check_sigma(sigma, positive=True)
    q_next = np.asarray(q_next, dtype=float)
    q = np.asarray(q, dtype=float)
    total = np.ones(np.broadcast_shapes(q_next.shape, q.shape)[:-1])
    for i in range(dist.n_zones):
        c = dist.support[i]
        p = dist.probs[i]
        d = q_next[..., i, None] - c * q[..., i, None]
        comp = np.exp(-0.5 * d * d / sigma[i]) / np.sqrt(2.0 * np.pi * sigma[i])
        total = total * np.sum(p * comp, axis=-1)
    return total
