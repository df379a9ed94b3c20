"""Numba-compiled kernels, mirroring :mod:`flowsense._kernels.reference`.

Compiled lazily on first call and cached on disk.  Kernels are serial
(deterministic, bit-stable) and nogil so batch-level callers can overlap
independent runs on threads.
"""

import numpy as np
from numba import njit

BACKEND = "jit"


@njit(cache=True, nogil=True)
def march_batch(q, seg_len, seg_dtvd, seg_tgeo, seg_frac, gauge_after,
                n_gauges, p_start, t_start, zone_rho, zone_tres,
                gravity, friction_coeff, relax_coeff, cp_ref, rho_static):
    B, r = q.shape
    S = seg_len.shape[0]
    pres = np.zeros((B, n_gauges))
    temp = np.zeros((B, n_gauges))
    for b in range(B):
        mass = np.zeros(r)
        total = 0.0
        p = p_start
        t = t_start
        for s in range(S):
            for z in range(r):
                dm = seg_frac[s, z] * q[b, z]
                if dm > 0.0:
                    new_total = total + dm
                    t = (total * t + dm * zone_tres[z]) / new_total
                    mass[z] += dm
                    total = new_total
            if total > 0.0:
                rho = 0.0
                for z in range(r):
                    rho += mass[z] * zone_rho[z]
                rho /= total
                p = p - rho * gravity * seg_dtvd[s]
                p = p - friction_coeff * total * total / rho * seg_len[s]
                lam = relax_coeff / (cp_ref * total) * seg_len[s]
                if lam > 1.0:
                    lam = 1.0
                t = t - lam * (t - seg_tgeo[s])
            else:
                p = p - rho_static * gravity * seg_dtvd[s]
                t = seg_tgeo[s]
            g = gauge_after[s]
            if g >= 0:
                pres[b, g] = p
                temp[b, g] = t
    return pres, temp


@njit(cache=True, nogil=True)
def omega_tensor(static_hq, particles, theta, qprop, sigma):
    n, r = particles.shape
    m = theta.shape[0]
    s = qprop.shape[0]
    out = np.empty((n, m, s))
    lognorm = 0.0
    for i in range(r):
        lognorm += np.log(2.0 * np.pi * sigma[i])
    for h in range(n):
        for l in range(m):
            for k in range(s):
                expo = 0.0
                for i in range(r):
                    d = qprop[k, i] - theta[l, i] * particles[h, i]
                    expo += d * d / sigma[i]
                out[h, l, k] = static_hq[h, k] * np.exp(-0.5 * (expo + lognorm))
    return out


@njit(cache=True, nogil=True)
def em_moments(omega, particles, theta, qprop):
    n, r = particles.shape
    m = theta.shape[0]
    s = qprop.shape[0]
    num = np.zeros(r)
    denom = 0.0
    for h in range(n):
        for l in range(m):
            for k in range(s):
                denom += omega[h, l, k]
    for i in range(r):
        acc = 0.0
        for l in range(m):
            part = 0.0
            for h in range(n):
                for k in range(s):
                    d = qprop[k, i] - theta[l, i] * particles[h, i]
                    part += omega[h, l, k] * d * d
            acc += part
        num[i] = acc
    return num, denom


@njit(cache=True, nogil=True)
def em_iteration(static_hq, particles, theta, theta_counts, qprop, sigma):
    n, r = particles.shape
    m = theta.shape[0]
    s = qprop.shape[0]
    lognorm = 0.0
    for i in range(r):
        lognorm += np.log(2.0 * np.pi * sigma[i])
    num = np.zeros(r)
    denom = 0.0
    d2 = np.empty(r)
    for l in range(m):
        c = theta_counts[l]
        for h in range(n):
            for k in range(s):
                expo = 0.0
                for i in range(r):
                    d = qprop[k, i] - theta[l, i] * particles[h, i]
                    d2[i] = d * d
                    expo += d2[i] / sigma[i]
                w = c * static_hq[h, k] * np.exp(-0.5 * (expo + lognorm))
                denom += w
                for i in range(r):
                    num[i] += w * d2[i]
    return num, denom
