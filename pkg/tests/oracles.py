"""Independent oracles used across the test suite.

Everything here is deliberately written from the defining formulas
(textbook Kalman recursions, direct density evaluation, brute-force
loops) and never calls the implementation paths it validates.
"""

import numpy as np


def gauss_logpdf(x, mean, var):
    """Scalar/elementwise Gaussian log-density, summed over the last axis."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    return -0.5 * np.sum(np.log(2.0 * np.pi * var)
                         + (x - mean) ** 2 / var, axis=-1)


class LinearObservationModel:
    """y = A q + v with diagonal Gaussian noise; APF-compatible hook."""

    def __init__(self, A, noise_diag):
        self.A = np.asarray(A, dtype=float)
        self.noise_diag = np.asarray(noise_diag, dtype=float)

    def simulate_batch(self, q_batch):
        return np.asarray(q_batch, dtype=float) @ self.A.T

    def loglik_batch(self, y_vec, q_batch):
        resid = np.asarray(y_vec, dtype=float) - self.simulate_batch(q_batch)
        return gauss_logpdf(resid, 0.0, self.noise_diag)


def kalman_filter(observations, m0, p0_diag, q_diag, A, r_diag):
    """Exact filter for x_k = x_{k-1} + w, y_k = A x_k + v (diagonal noises).

    The first observation is assimilated at time 0 with prior (m0, P0).
    Returns (means, covariances, per-observation predictive log-lik terms).
    """
    A = np.asarray(A, dtype=float)
    r = A.shape[1]
    m = np.asarray(m0, dtype=float).copy()
    P = np.diag(np.asarray(p0_diag, dtype=float)).copy()
    Q = np.diag(np.asarray(q_diag, dtype=float))
    R = np.diag(np.asarray(r_diag, dtype=float))
    means, covs, terms = [], [], []
    for k, y in enumerate(observations):
        if k > 0:
            P = P + Q
        S = A @ P @ A.T + R
        resid = np.asarray(y, dtype=float) - A @ m
        Sinv = np.linalg.inv(S)
        sign, logdet = np.linalg.slogdet(S)
        terms.append(float(-0.5 * (len(y) * np.log(2.0 * np.pi) + logdet
                                   + resid @ Sinv @ resid)))
        K = P @ A.T @ Sinv
        m = m + K @ resid
        P = (np.eye(r) - K @ A) @ P
        means.append(m.copy())
        covs.append(P.copy())
    return np.asarray(means), np.asarray(covs), np.asarray(terms)


def simulate_linear_ssm(rng, x0, q_diag, A, r_diag, n_steps):
    """Draw a truth path and observations from the linear-Gaussian model."""
    x = np.asarray(x0, dtype=float).copy()
    A = np.asarray(A, dtype=float)
    xs, ys = [], []
    for k in range(n_steps):
        if k > 0:
            x = x + rng.standard_normal(x.size) * np.sqrt(q_diag)
        y = A @ x + rng.standard_normal(A.shape[0]) * np.sqrt(r_diag)
        xs.append(x.copy())
        ys.append(y)
    return np.asarray(xs), np.asarray(ys)


def brute_force_em_update(static_hlq, particles, theta, qprop, sigma_prev):
    """Triple-loop reference of the EM variance update, no vectorization."""
    n, r = particles.shape
    m = theta.shape[0]
    s = qprop.shape[0]
    num = np.zeros(r)
    denom = 0.0
    for h in range(n):
        for l in range(m):
            for q in range(s):
                trans = 1.0
                for i in range(r):
                    d = qprop[q, i] - theta[l, i] * particles[h, i]
                    trans *= np.exp(-0.5 * d * d / sigma_prev[i]) / \
                        np.sqrt(2.0 * np.pi * sigma_prev[i])
                w = static_hlq[h, l, q] * trans
                denom += w
                for i in range(r):
                    d = qprop[q, i] - theta[l, i] * particles[h, i]
                    num[i] += w * d * d
    return num / denom


def brute_force_surrogate(omega, particles, theta, qprop, sigma):
    """Triple-loop reference of the EM surrogate objective."""
    n, r = particles.shape
    m = theta.shape[0]
    s = qprop.shape[0]
    total = 0.0
    for h in range(n):
        for l in range(m):
            for q in range(s):
                lp = 0.0
                for i in range(r):
                    d = qprop[q, i] - theta[l, i] * particles[h, i]
                    lp += -0.5 * (np.log(2.0 * np.pi * sigma[i])
                                  + d * d / sigma[i])
                total += omega[h, l, q] * lp
    return total
