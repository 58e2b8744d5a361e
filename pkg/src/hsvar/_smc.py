"""Compiled kernels for the conditional auxiliary particle filter and backward simulation.

All randomness is drawn by the caller and passed in, so results depend only
on the numpy generator state.
"""

import math

import numpy as np
from numba import njit

SV = 0          # eps_t ~ N(0, D Psi D), data = residuals, mat = Psi^{-1}
GAUSSIAN = 1    # y_t ~ N(omega_t, noise_var I), data = measurements


@njit(cache=True)
def _log_obs(kind, y, mat, const, noise_var, w, u):
    n = w.shape[0]
    if kind == SV:
        s = 0.0
        for i in range(n):
            u[i] = y[i] * math.exp(-w[i])
            s += w[i]
        quad = 0.0
        for i in range(n):
            acc = 0.5 * mat[i, i] * u[i]
            for j in range(i):
                acc += mat[i, j] * u[j]
            quad += 2.0 * u[i] * acc
        return const - s - 0.5 * quad
    d2 = 0.0
    for i in range(n):
        d = w[i] - y[i]
        d2 += d * d
    return const - 0.5 * d2 / noise_var


@njit(cache=True)
def _log_normalize(lw):
    top = -np.inf
    for v in lw:
        if v > top:
            top = v
    if not np.isfinite(top):
        return -np.inf
    s = 0.0
    for i in range(lw.shape[0]):
        s += math.exp(lw[i] - top)
    total = top + math.log(s)
    for i in range(lw.shape[0]):
        lw[i] -= total
    return total


@njit(cache=True)
def _systematic(logv, u, out, count):
    # indices for comb points (m + u) / count, m = 0..count-1
    N = logv.shape[0]
    j = 0
    c = math.exp(logv[0])
    for m in range(count):
        p = (m + u) / count
        while p >= c and j < N - 1:
            j += 1
            c += math.exp(logv[j])
        out[m] = j


@njit(cache=True)
def _conditional_systematic(logv, keep, v, out):
    N = logv.shape[0]
    lo = 0.0
    for j in range(keep):
        lo += math.exp(logv[j])
    hi = lo + math.exp(logv[keep])
    s = N * lo + v * N * (hi - lo)
    m = min(int(math.floor(s)), N - 1)
    u = s - m
    if u >= 1.0:
        u = 1.0 - 1e-16
    _systematic(logv, u, out, N)
    out[m] = out[N - 1]
    out[N - 1] = keep


@njit(cache=True)
def forward(kind, data, mat, const, noise_var, init_mean, init_sd, tau, ref, conditional,
            noise, unif):
    T = data.shape[0]
    free = noise.shape[1]
    n = tau.shape[0]
    N = free + 1 if conditional else free
    parts = np.empty((T, N, n))
    logw = np.empty((T, N))
    anc = np.zeros((T, N), dtype=np.int64)
    first = np.empty(N)
    v = np.empty(N)
    a = np.empty(N, dtype=np.int64)
    scratch = np.empty(n)

    for p in range(free):
        for i in range(n):
            parts[0, p, i] = init_mean + init_sd * noise[0, p, i]
    if conditional:
        for i in range(n):
            parts[0, N - 1, i] = ref[i, 0]
    for p in range(N):
        anc[0, p] = p
        logw[0, p] = _log_obs(kind, data[0], mat, const, noise_var, parts[0, p], scratch)
    total = _log_normalize(logw[0])
    if not np.isfinite(total):
        return parts, logw, anc, np.nan, 0
    loglik = total - math.log(N)

    for t in range(1, T):
        for p in range(N):
            first[p] = _log_obs(kind, data[t], mat, const, noise_var, parts[t - 1, p], scratch)
            v[p] = logw[t - 1, p] + first[p]
        vtotal = _log_normalize(v)
        if not np.isfinite(vtotal):
            return parts, logw, anc, np.nan, t
        loglik += vtotal
        if conditional:
            _conditional_systematic(v, N - 1, unif[t], a)
        else:
            _systematic(v, unif[t], a, N)
        for p in range(N):
            anc[t, p] = a[p]
        for p in range(free):
            for i in range(n):
                parts[t, p, i] = parts[t - 1, a[p], i] + tau[i] * noise[t, p, i]
        if conditional:
            for i in range(n):
                parts[t, N - 1, i] = ref[i, t]
        for p in range(N):
            logw[t, p] = _log_obs(kind, data[t], mat, const, noise_var, parts[t, p], scratch) - first[a[p]]
        total = _log_normalize(logw[t])
        if not np.isfinite(total):
            return parts, logw, anc, np.nan, t
        loglik += total - math.log(N)
    return parts, logw, anc, loglik, -1


@njit(cache=True)
def _pick(lp, u):
    top = -np.inf
    for v in lp:
        if v > top:
            top = v
    s = 0.0
    for v in lp:
        s += math.exp(v - top)
    target = u * s
    c = 0.0
    for j in range(lp.shape[0]):
        c += math.exp(lp[j] - top)
        if target < c:
            return j
    return lp.shape[0] - 1


@njit(cache=True)
def backward(parts, logw, inv_var, unif):
    T, N, n = parts.shape
    path = np.empty((n, T))
    lp = np.empty(N)
    b = _pick(logw[T - 1], unif[T - 1])
    for i in range(n):
        path[i, T - 1] = parts[T - 1, b, i]
    for t in range(T - 2, -1, -1):
        for p in range(N):
            s = 0.0
            for i in range(n):
                d = path[i, t + 1] - parts[t, p, i]
                s += d * d * inv_var[i]
            lp[p] = logw[t, p] - 0.5 * s
        b = _pick(lp, unif[t])
        for i in range(n):
            path[i, t] = parts[t, b, i]
    return path
