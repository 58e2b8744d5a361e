"""Discrete mixture (spike-and-slab) prior on VAR coefficients.

``theta_ijk = delta_ijk * beta_ijk`` with ``delta_ijk | pi_i ~ Bernoulli(1 - pi_i)``,
``pi_i ~ Beta(a, b)`` and a ridge slab ``beta_ijk ~ N(0, c_sq)``.  ``pi_i`` is
the prior probability that a coefficient of equation ``i`` is excluded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import VarData
from .shrinkage import PRIOR_VAR_FLOOR, draw_gaussian, likelihood_precision
from .volatility import VolatilityState, inverse_covariances

PI_CLAMP = 1e-12


@dataclass
class DiscreteMixtureState:
    delta: np.ndarray    # (n, n, P) in {0, 1}
    beta: np.ndarray     # (n, n, P)
    pi: np.ndarray       # (n,) exclusion probabilities
    a: float = 1.0
    b: float = 1.0
    c_sq: float = 9.0

    def __post_init__(self):
        self.delta = np.asarray(self.delta).astype(np.int8)
        self.beta = np.asarray(self.beta, dtype=float)
        self.pi = np.clip(np.asarray(self.pi, dtype=float), PI_CLAMP, 1.0 - PI_CLAMP)
        if not np.all((self.delta == 0) | (self.delta == 1)):
            raise ValueError("inclusion indicators must be 0 or 1")
        if self.delta.shape != self.beta.shape:
            raise ValueError("delta and beta shapes differ")

    @classmethod
    def initial(cls, beta: np.ndarray, **hyper) -> "DiscreteMixtureState":
        beta = np.asarray(beta, dtype=float)
        return cls(np.ones(beta.shape, dtype=np.int8), beta.copy(), np.full(beta.shape[0], 0.5), **hyper)


def effective_theta(state: DiscreteMixtureState) -> np.ndarray:
    return state.delta * state.beta


def _expit(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def sample_delta(data: VarData, state: DiscreteMixtureState, vol: VolatilityState | None,
                 rng: np.random.Generator, collapsed: bool = False) -> DiscreteMixtureState:
    """Single-site Gibbs sweep over the indicators given ``beta``.

    With ``collapsed`` each site's ``(delta, beta)`` pair is drawn jointly:
    ``delta`` with that one ``beta`` integrated out, then ``beta`` from its
    conditional when included.  The other coefficients stay fixed.  Sites are visited in (i, j, k) order; the Omega-weighted residuals are
    updated in place after every flip.
    """
    X, Y = data.X, data.Y
    T, nP = X.shape
    n = Y.shape[1]
    omega_inv = inverse_covariances(vol, T, n)
    delta = state.delta.reshape(n, nP).copy()
    beta = state.beta.reshape(n, nP).copy()
    theta = delta * beta
    c_sq = max(state.c_sq, PRIOR_VAR_FLOOR)
    E = Y - X @ theta.T
    XX = X * X
    prior_logit = np.log1p(-state.pi) - np.log(state.pi)
    u = rng.uniform(size=(n, nP))
    z = rng.standard_normal((n, nP)) if collapsed else None
    for i in range(n):
        oii = omega_inv[:, i, i]
        w = np.einsum("tl,tl->t", omega_inv[:, i, :], E)   # (Omega^{-1} eps)_i
        G = X.T @ (X * oii[:, None])
        q = XX.T @ oii
        xw = X.T @ w
        for m in range(nP):
            cur = theta[i, m]
            bm = beta[i, m]
            s = xw[m] + cur * q[m]   # x' (Omega^{-1} r)_i with this site zeroed
            if collapsed:
                prec = q[m] + 1.0 / c_sq
                log_odds = prior_logit[i] - 0.5 * math.log1p(c_sq * q[m]) + 0.5 * s * s / prec
            else:
                dsse = -2.0 * bm * s + bm * bm * q[m]
                log_odds = prior_logit[i] - 0.5 * dsse
            if not math.isfinite(log_odds):
                raise FloatingPointError(f"non-finite likelihood ratio at site ({i}, {m})")
            new = 1 if u[i, m] < _expit(log_odds) else 0
            if collapsed and new:
                bm = s / prec + z[i, m] / math.sqrt(prec)
                beta[i, m] = bm
            step = new * bm - cur
            delta[i, m] = new
            if step != 0.0:
                theta[i, m] = new * bm
                xw -= step * G[:, m]
                E[:, i] -= step * X[:, m]
    return replace(state, delta=delta.reshape(state.delta.shape), beta=beta.reshape(state.beta.shape))


def sample_beta(data: VarData, state: DiscreteMixtureState, vol: VolatilityState | None,
                rng: np.random.Generator) -> DiscreteMixtureState:
    """Included slab coefficients from their joint Gaussian conditional; excluded ones from the slab prior."""
    T, n = data.Y.shape
    c_sq = max(state.c_sq, PRIOR_VAR_FLOOR)
    flat_delta = state.delta.reshape(-1).astype(bool)
    beta = np.sqrt(c_sq) * rng.standard_normal(flat_delta.size)
    if flat_delta.any():
        Q, b = likelihood_precision(data, inverse_covariances(vol, T, n))
        idx = np.flatnonzero(flat_delta)
        Qs = Q[np.ix_(idx, idx)]
        Qs[np.diag_indices_from(Qs)] += 1.0 / c_sq
        beta[idx] = draw_gaussian(Qs, b[idx], rng)
    return replace(state, beta=beta.reshape(state.beta.shape))


def sample_pi(state: DiscreteMixtureState, rng: np.random.Generator) -> DiscreteMixtureState:
    n = state.delta.shape[0]
    d = state.delta.reshape(n, -1)
    included = d.sum(axis=1)
    excluded = d.shape[1] - included
    return replace(state, pi=rng.beta(state.a + excluded, state.b + included))


def inclusion_probability(delta_samples) -> np.ndarray:
    d = np.asarray(delta_samples, dtype=float)
    if d.ndim == 0 or d.shape[0] == 0:
        raise ValueError("no indicator samples")
    return d.mean(axis=0)
