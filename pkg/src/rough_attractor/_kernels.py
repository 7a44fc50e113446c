"""Compiled inner loops for pair scans, stopping scans, and the time stepper.

All kernels take pre-extracted float64 arrays. P is the (n, d) prefix of path
increments from the scan origin, A the (n, d, d) prefix of second-order
tensors; the pair value over (i, j) is reconstructed on the fly via

    W_ij = P[j] - P[i]
    WW_ij = A[j] - A[i] - outer(P[i], P[j] - P[i])

which is Chen's identity against the grid origin. pow1/pow2 hold the lag
weights (lag*dt)**alpha and (lag*dt)**(2*alpha) indexed by lag.
"""

import numpy as np
from numba import njit

__all__ = [
    "pair_max", "pair_max_diff", "forward_crossing", "backward_crossing",
    "dnorm_pairs", "dnorm_pairs_diff", "march",
]


@njit(cache=True)
def pair_max(P, A, pow1, pow2, i_lo, i_hi, lag_cap):
    """Sup of both Hoelder ratios over grid pairs i < j in [i_lo, i_hi].

    Returns (m1, s1, t1, m2, s2, t2) with argmax index pairs. lag_cap limits
    j - i (pass i_hi - i_lo for the full scan).
    """
    d = P.shape[1]
    m1 = 0.0
    m2 = 0.0
    s1 = i_lo
    t1 = i_lo
    s2 = i_lo
    t2 = i_lo
    for j in range(i_lo + 1, i_hi + 1):
        lo = j - lag_cap
        if lo < i_lo:
            lo = i_lo
        for i in range(lo, j):
            lag = j - i
            acc1 = 0.0
            for a in range(d):
                w = P[j, a] - P[i, a]
                acc1 += w * w
            r1 = np.sqrt(acc1) / pow1[lag]
            if r1 > m1:
                m1 = r1
                s1 = i
                t1 = j
            acc2 = 0.0
            for a in range(d):
                pa = P[i, a]
                for b in range(d):
                    v = A[j, a, b] - A[i, a, b] - pa * (P[j, b] - P[i, b])
                    acc2 += v * v
            r2 = np.sqrt(acc2) / pow2[lag]
            if r2 > m2:
                m2 = r2
                s2 = i
                t2 = j
    return m1, s1, t1, m2, s2, t2


@njit(cache=True)
def pair_max_diff(P1, A1, P2, A2, pow1, pow2, i_lo, i_hi, lag_cap):
    """Like pair_max but for the difference of two rough paths on one grid."""
    d = P1.shape[1]
    m1 = 0.0
    m2 = 0.0
    for j in range(i_lo + 1, i_hi + 1):
        lo = j - lag_cap
        if lo < i_lo:
            lo = i_lo
        for i in range(lo, j):
            lag = j - i
            acc1 = 0.0
            for a in range(d):
                w = (P1[j, a] - P1[i, a]) - (P2[j, a] - P2[i, a])
                acc1 += w * w
            r1 = np.sqrt(acc1) / pow1[lag]
            if r1 > m1:
                m1 = r1
            acc2 = 0.0
            for a in range(d):
                for b in range(d):
                    v1 = A1[j, a, b] - A1[i, a, b] - P1[i, a] * (P1[j, b] - P1[i, b])
                    v2 = A2[j, a, b] - A2[i, a, b] - P2[i, a] * (P2[j, b] - P2[i, b])
                    v = v1 - v2
                    acc2 += v * v
            r2 = np.sqrt(acc2) / pow2[lag]
            if r2 > m2:
                m2 = r2
    return m1, m2


@njit(cache=True)
def forward_crossing(P, A, pow1, pow2, mu_ramp, mu, k0, k_max):
    """First grid index k > k0 where the stopping map reaches mu.

    mu_ramp[l] = mu * (l*dt)**(1-alpha). Incrementally maintains the pair sups
    over [k0, k]; returns (k, m1_prev, m2_prev) where the prev values are the
    sups over [k0, k-1], needed by the sub-grid bisection. k = -1 when the map
    stays below mu up to k_max.
    """
    d = P.shape[1]
    m1 = 0.0
    m2 = 0.0
    for k in range(k0 + 1, k_max + 1):
        m1p = m1
        m2p = m2
        for i in range(k0, k):
            lag = k - i
            acc1 = 0.0
            for a in range(d):
                w = P[k, a] - P[i, a]
                acc1 += w * w
            r1 = np.sqrt(acc1) / pow1[lag]
            if r1 > m1:
                m1 = r1
            acc2 = 0.0
            for a in range(d):
                pa = P[i, a]
                for b in range(d):
                    v = A[k, a, b] - A[i, a, b] - pa * (P[k, b] - P[i, b])
                    acc2 += v * v
            r2 = np.sqrt(acc2) / pow2[lag]
            if r2 > m2:
                m2 = r2
        if m1 + m2 + mu_ramp[k - k0] >= mu:
            return k, m1p, m2p
    return -1, m1, m2


@njit(cache=True)
def backward_crossing(P, A, pow1, pow2, mu_ramp, mu, k0, k_min):
    """Mirror of forward_crossing scanning left from k0 on [k, k0]."""
    d = P.shape[1]
    m1 = 0.0
    m2 = 0.0
    for k in range(k0 - 1, k_min - 1, -1):
        m1p = m1
        m2p = m2
        for j in range(k + 1, k0 + 1):
            lag = j - k
            acc1 = 0.0
            for a in range(d):
                w = P[j, a] - P[k, a]
                acc1 += w * w
            r1 = np.sqrt(acc1) / pow1[lag]
            if r1 > m1:
                m1 = r1
            acc2 = 0.0
            for a in range(d):
                pa = P[k, a]
                for b in range(d):
                    v = A[j, a, b] - A[k, a, b] - pa * (P[j, b] - P[k, b])
                    acc2 += v * v
            r2 = np.sqrt(acc2) / pow2[lag]
            if r2 > m2:
                m2 = r2
        if m1 + m2 + mu_ramp[k0 - k] >= mu:
            return k, m1p, m2p
    return -1, m1, m2


@njit(cache=True)
def dnorm_pairs(y, yp, wpre, wg2a, wga, wg2a_r, pow1, pow2, i_lo, i_hi):
    """Pair seminorms of a controlled path over [i_lo, i_hi].

    y (n, N), yp (n, d, N), wpre (n, d) driving-path prefix. Weight vectors
    are the lambda**gamma factors of the squared interpolation norms:
    wg2a for the Gubinelli-derivative increments (space gamma-2a), wga and
    wg2a_r for the remainder at spaces gamma-a and gamma-2a. Returns
    (holder_yp, holder_r_a, holder_r_2a).
    """
    n_modes = y.shape[1]
    d = yp.shape[1]
    hp = 0.0
    hra = 0.0
    hr2a = 0.0
    r = np.empty(n_modes)
    for j in range(i_lo + 1, i_hi + 1):
        for i in range(i_lo, j):
            lag = j - i
            accp = 0.0
            for a in range(d):
                for m in range(n_modes):
                    v = yp[j, a, m] - yp[i, a, m]
                    accp += wg2a[m] * v * v
            vp = np.sqrt(accp) / pow1[lag]
            if vp > hp:
                hp = vp
            for m in range(n_modes):
                r[m] = y[j, m] - y[i, m]
            for a in range(d):
                w = wpre[j, a] - wpre[i, a]
                for m in range(n_modes):
                    r[m] -= yp[i, a, m] * w
            acca = 0.0
            acc2a = 0.0
            for m in range(n_modes):
                acca += wga[m] * r[m] * r[m]
                acc2a += wg2a_r[m] * r[m] * r[m]
            va = np.sqrt(acca) / pow1[lag]
            if va > hra:
                hra = va
            v2a = np.sqrt(acc2a) / pow2[lag]
            if v2a > hr2a:
                hr2a = v2a
    return hp, hra, hr2a


@njit(cache=True)
def dnorm_pairs_diff(y1, yp1, w1, y2, yp2, w2, wg2a, wga, wg2a_r,
                     pow1, pow2, i_lo, i_hi):
    """Pair seminorms of the difference of two controlled paths.

    Each path carries its own driving-path prefix, so the remainders are
    computed against the matching noise before differencing.
    """
    n_modes = y1.shape[1]
    d = yp1.shape[1]
    hp = 0.0
    hra = 0.0
    hr2a = 0.0
    r = np.empty(n_modes)
    for j in range(i_lo + 1, i_hi + 1):
        for i in range(i_lo, j):
            lag = j - i
            accp = 0.0
            for a in range(d):
                for m in range(n_modes):
                    v = (yp1[j, a, m] - yp1[i, a, m]) - (yp2[j, a, m] - yp2[i, a, m])
                    accp += wg2a[m] * v * v
            vp = np.sqrt(accp) / pow1[lag]
            if vp > hp:
                hp = vp
            for m in range(n_modes):
                r[m] = (y1[j, m] - y1[i, m]) - (y2[j, m] - y2[i, m])
            for a in range(d):
                u1 = w1[j, a] - w1[i, a]
                u2 = w2[j, a] - w2[i, a]
                for m in range(n_modes):
                    r[m] -= yp1[i, a, m] * u1 - yp2[i, a, m] * u2
            acca = 0.0
            acc2a = 0.0
            for m in range(n_modes):
                acca += wga[m] * r[m] * r[m]
                acc2a += wg2a_r[m] * r[m] * r[m]
            va = np.sqrt(acca) / pow1[lag]
            if va > hra:
                hra = va
            v2a = np.sqrt(acc2a) / pow2[lag]
            if v2a > hr2a:
                hr2a = v2a
    return hp, hra, hr2a


@njit(cache=True)
def march(y0, decay, f_scale, dt, mult, off, steps, areas, record):
    """Explicit one-step exponential scheme for the batched state.

    y0 (B, N); decay = exp(-lambda*dt) (N,); mult (d, N) linear channel
    multipliers; off (d, N) constant channel terms; steps (n, d) increments;
    areas (n, d, d). When record is True the whole trajectory (n+1, B, N) is
    returned, otherwise only the final state in slot 0 of an (1, B, N) array.

    Update per step (compensated one-step sum of the mild equation):
        y <- decay * (y + dt*F(y) + G(y) W_k + DG(y)G(y) WW_k)
    with G_a(y) = mult[a]*y + off[a] and DG_l(y)[G_a(y)] = mult[l]*G_a(y),
    contracted as sum_{a,l} WW[a,l] * mult[l] * G_a(y).
    """
    n = steps.shape[0]
    d = steps.shape[1]
    nb = y0.shape[0]
    n_modes = y0.shape[1]
    out = np.empty((n + 1 if record else 1, nb, n_modes))
    y = y0.copy()
    if record:
        out[0] = y
    g = np.empty((d, n_modes))
    for k in range(n):
        for b in range(nb):
            for a in range(d):
                for m in range(n_modes):
                    g[a, m] = mult[a, m] * y[b, m] + off[a, m]
            for m in range(n_modes):
                acc = y[b, m] + dt * f_scale * y[b, m]
                for a in range(d):
                    acc += g[a, m] * steps[k, a]
                    for l in range(d):
                        acc += areas[k, a, l] * mult[l, m] * g[a, m]
                y[b, m] = decay[m] * acc
        if record:
            out[k + 1] = y
    if not record:
        out[0] = y
    return out
