"""Pure-numpy reference implementations of the hot numeric kernels.

These are the fallback path used when numba is unavailable or disabled
via ``FLOWSENSE_NUMBA=0``.  The jit backend in :mod:`flowsense._kernels.jit`
implements the same functions with identical per-element arithmetic order,
so the two backends agree to floating-point roundoff.
"""

import numpy as np

BACKEND = "reference"


def march_batch(q, seg_len, seg_dtvd, seg_tgeo, seg_frac, gauge_after,
                n_gauges, p_start, t_start, zone_rho, zone_tres,
                gravity, friction_coeff, relax_coeff, cp_ref, rho_static):
    """Steady-state wellbore march for a batch of rate vectors.

    Segments are ordered from the well bottom upward.  Per segment: zone
    inflow is injected at the deep end (mass-flow-weighted temperature
    mixing), then hydrostatic and friction pressure drops and the linear
    conductive temperature relaxation are applied over the segment length.
    Gauge channels are recorded when the march passes a gauge depth.

    q           : (B, r) nonnegative zone mass rates, kg/s
    seg_len     : (S,) segment measured-depth lengths, m
    seg_dtvd    : (S,) tvd(deep end) - tvd(shallow end), m
    seg_tgeo    : (S,) geothermal temperature at each shallow end, K
    seg_frac    : (S, r) fraction of each zone's rate entering the segment
    gauge_after : (S,) gauge index recorded after the segment, -1 for none

    Returns (pressures, temperatures), each (B, n_gauges).
    """
    B, r = q.shape
    S = seg_len.shape[0]
    mass = np.zeros((B, r))
    total = np.zeros(B)
    pres_state = np.full(B, p_start)
    temp_state = np.full(B, t_start)
    pres = np.zeros((B, n_gauges))
    temp = np.zeros((B, n_gauges))
    for s in range(S):
        for z in range(r):
            dm = seg_frac[s, z] * q[:, z]
            new_total = total + dm
            safe = np.where(new_total > 0.0, new_total, 1.0)
            mixed = (total * temp_state + dm * zone_tres[z]) / safe
            temp_state = np.where(dm > 0.0, mixed, temp_state)
            mass[:, z] += dm
            total = new_total
        flowing = total > 0.0
        safe_total = np.where(flowing, total, 1.0)
        rho = np.where(flowing, mass @ zone_rho / safe_total, rho_static)
        pres_state = pres_state - rho * gravity * seg_dtvd[s]
        pres_state = pres_state - np.where(
            flowing, friction_coeff * total * total / rho * seg_len[s], 0.0)
        lam = np.where(
            flowing,
            np.minimum(relax_coeff / (cp_ref * safe_total) * seg_len[s], 1.0),
            1.0)
        temp_state = temp_state - lam * (temp_state - seg_tgeo[s])
        g = gauge_after[s]
        if g >= 0:
            pres[:, g] = pres_state
            temp[:, g] = temp_state
    return pres, temp


def omega_tensor(static_hq, particles, theta, qprop, sigma):
    """Per-iteration EM weights over (particle, multiplier, proposal).

    omega[h, l, q] = static_hq[h, q] * prod_i N(qprop[q, i];
    theta[l, i] * particles[h, i], sigma[i]), with sigma holding variances.
    """
    n, r = particles.shape
    m = theta.shape[0]
    s = qprop.shape[0]
    out = np.empty((n, m, s))
    lognorm = 0.0
    for i in range(r):
        lognorm += np.log(2.0 * np.pi * sigma[i])
    for l in range(m):
        expo = np.zeros((n, s))
        for i in range(r):
            d = qprop[:, i][None, :] - (theta[l, i] * particles[:, i])[:, None]
            expo += d * d / sigma[i]
        out[:, l, :] = static_hq * np.exp(-0.5 * (expo + lognorm))
    return out


def em_moments(omega, particles, theta, qprop):
    """Weighted squared-residual sums needed by the EM variance update.

    Returns (num, denom) with num[i] = sum_{h,l,q} omega[h,l,q] *
    (qprop[q,i] - theta[l,i]*particles[h,i])**2 and denom = sum(omega).
    """
    n, r = particles.shape
    m = theta.shape[0]
    num = np.zeros(r)
    denom = float(np.sum(omega))
    for i in range(r):
        acc = 0.0
        for l in range(m):
            d = qprop[:, i][None, :] - (theta[l, i] * particles[:, i])[:, None]
            acc += float(np.sum(omega[:, l, :] * d * d))
        num[i] = acc
    return num, denom


def em_iteration(static_hq, particles, theta, theta_counts, qprop, sigma):
    """Fused omega_tensor + em_moments pass for one EM iteration.

    Computes the weights on the fly instead of materializing the full
    tensor; ``theta_counts`` carries multiplicities of deduplicated
    multiplier rows.  Returns the same (num, denom) as em_moments applied
    to omega_tensor's output on the expanded bank.
    """
    n, r = particles.shape
    m = theta.shape[0]
    lognorm = 0.0
    for i in range(r):
        lognorm += np.log(2.0 * np.pi * sigma[i])
    num = np.zeros(r)
    denom = 0.0
    s = qprop.shape[0]
    d2 = np.empty((r, n, s))
    for l in range(m):
        expo = np.zeros((n, s))
        for i in range(r):
            d = qprop[:, i][None, :] - (theta[l, i] * particles[:, i])[:, None]
            d2[i] = d * d
            expo += d2[i] / sigma[i]
        w = theta_counts[l] * static_hq * np.exp(-0.5 * (expo + lognorm))
        denom += float(np.sum(w))
        for i in range(r):
            num[i] += float(np.sum(w * d2[i]))
    return num, denom
