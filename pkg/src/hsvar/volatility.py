"""Stochastic volatility for the VAR errors.

The error covariance at time t is ``D_t Psi D_t`` with ``D_t = diag(exp(omega_t))``.
Log standard deviations follow independent Gaussian random walks with
innovation scales ``tau_omega`` (half-Cauchy prior), the static correlation
matrix ``Psi`` has an LKJ prior, and the volatility paths are updated with
particle Gibbs with backward simulation on top of a conditional auxiliary
particle filter.

Volatility arrays are ``(n, T)``; particle clouds are ``(T, N, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import numpy as np
from scipy import linalg

from . import _smc

LOG_2PI = np.log(2.0 * np.pi)
TAU_OMEGA_FLOOR = 1e-8
OMEGA_LIMIT = 300.0


@dataclass
class VolatilityState:
    omega: np.ndarray          # (n, T) log standard deviations
    psi: np.ndarray            # (n, n) correlation matrix
    tau_omega: np.ndarray      # (n,) random-walk innovation sds
    init_mean: float = 0.0
    init_var: float = 1.0

    def __post_init__(self):
        self.omega = np.atleast_2d(np.asarray(self.omega, dtype=float))
        self.psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        self.tau_omega = np.atleast_1d(np.asarray(self.tau_omega, dtype=float))
        n = self.omega.shape[0]
        if self.psi.shape != (n, n) or self.tau_omega.shape != (n,):
            raise ValueError("omega, psi and tau_omega disagree on the number of series")

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    @property
    def T(self) -> int:
        return self.omega.shape[1]

    @classmethod
    def constant(cls, n: int, T: int, log_sd: float = 0.0, tau_omega: float = 0.1) -> "VolatilityState":
        return cls(np.full((n, T), float(log_sd)), np.eye(n), np.full(n, tau_omega))

    def validate(self) -> None:
        if not np.all(np.isfinite(self.omega)):
            raise ValueError("non-finite log volatility")
        if np.any(self.tau_omega <= 0):
            raise ValueError("tau_omega must be positive")
        check_correlation(self.psi)


def check_correlation(psi: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.allclose(psi, psi.T, atol=1e-12) or not np.allclose(np.diag(psi), 1.0, atol=1e-12):
        raise ValueError("correlation matrix must be symmetric with unit diagonal")
    if np.linalg.eigvalsh(psi)[0] <= tol:
        raise ValueError("correlation matrix is not positive definite")
    return psi


def _check_omega(omega: np.ndarray) -> None:
    if np.any(np.abs(omega) > OMEGA_LIMIT):
        raise OverflowError(f"log volatility beyond +/-{OMEGA_LIMIT}; exp would overflow")


def assemble_omega_t(vol: VolatilityState, t: int) -> np.ndarray:
    w = vol.omega[:, t]
    _check_omega(w)
    d = np.exp(w)
    return vol.psi * np.outer(d, d)


def covariances(vol: VolatilityState) -> np.ndarray:
    """All ``Omega_t`` stacked as ``(T, n, n)``."""
    _check_omega(vol.omega)
    d = np.exp(vol.omega.T)
    return vol.psi[None] * d[:, :, None] * d[:, None, :]


def inverse_covariances(vol: VolatilityState | None, T: int | None = None, n: int | None = None) -> np.ndarray:
    """``Omega_t^{-1}`` stacked as ``(T, n, n)``; ``vol=None`` means identity covariances."""
    if vol is None:
        return np.broadcast_to(np.eye(n), (T, n, n))
    _check_omega(vol.omega)
    psi_inv = linalg.inv(vol.psi)
    psi_inv = 0.5 * (psi_inv + psi_inv.T)
    d = np.exp(-vol.omega.T)
    return psi_inv[None] * d[:, :, None] * d[:, None, :]


def lkj_log_density(psi: np.ndarray, m: float) -> float:
    """Unnormalized LKJ(m) log density, ``(m - 1) log det psi``."""
    psi = np.asarray(psi, dtype=float)
    sign, logdet = np.linalg.slogdet(psi)
    if sign <= 0 or np.linalg.eigvalsh(psi)[0] <= 0:
        raise ValueError("LKJ density needs a positive definite correlation matrix")
    return float((m - 1.0) * logdet)


# -- correlation matrices through canonical partial correlations ------------------

def _cpc_to_cholesky(z: np.ndarray, n: int) -> np.ndarray:
    L = np.zeros((n, n))
    L[0, 0] = 1.0
    pos = 0
    for i in range(1, n):
        remaining = 1.0
        for j in range(i):
            L[i, j] = z[pos] * np.sqrt(remaining)
            remaining -= L[i, j] ** 2
            pos += 1
        L[i, i] = np.sqrt(max(remaining, 0.0))
    return L


def corr_from_unconstrained(y: np.ndarray, n: int) -> np.ndarray:
    """Map ``n(n-1)/2`` reals to a correlation matrix (``tanh`` to partial correlations)."""
    z = np.tanh(np.asarray(y, dtype=float))
    L = _cpc_to_cholesky(z, n)
    psi = L @ L.T
    psi = 0.5 * (psi + psi.T)
    np.fill_diagonal(psi, 1.0)
    return psi


def unconstrained_from_corr(psi: np.ndarray) -> np.ndarray:
    n = psi.shape[0]
    L = linalg.cholesky(psi, lower=True)
    z = []
    for i in range(1, n):
        remaining = 1.0
        for j in range(i):
            z.append(L[i, j] / np.sqrt(remaining))
            remaining -= L[i, j] ** 2
    z = np.clip(np.asarray(z), -1 + 1e-15, 1 - 1e-15)
    return np.arctanh(z)


def _cpc_level(n: int) -> np.ndarray:
    """Column index of each partial correlation in the ``(i, j), j < i`` ordering."""
    return np.array([j for i in range(1, n) for j in range(i)], dtype=float)


def _log_jacobian(y: np.ndarray, n: int) -> float:
    # d psi / d z contributes prod (1 - z^2)^((n - j - 2) / 2) for the 0-based column j,
    # d z / d y contributes prod (1 - z^2)
    z = np.tanh(y)
    log1mz2 = np.log1p(-z * z)
    return float(np.sum(((n - _cpc_level(n) - 2.0) / 2.0 + 1.0) * log1mz2))


def _scaled_scatter(resid: np.ndarray, omega: np.ndarray) -> np.ndarray:
    u = resid * np.exp(-omega.T)
    return u.T @ u


def _psi_log_target(y: np.ndarray, n: int, scatter: np.ndarray, T: int, m: float) -> tuple[float, np.ndarray]:
    psi = corr_from_unconstrained(y, n)
    try:
        c = linalg.cho_factor(psi, lower=True)
    except linalg.LinAlgError:
        return -np.inf, psi
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    quad = np.trace(linalg.cho_solve(c, scatter))
    loglik = -0.5 * T * logdet - 0.5 * quad
    return loglik + (m - 1.0) * logdet + _log_jacobian(y, n), psi


def sample_psi(residuals: np.ndarray, vol: VolatilityState, m: float, step_scale: float,
               rng: np.random.Generator) -> tuple[VolatilityState, bool]:
    """One random-walk Metropolis step for ``Psi`` on the unconstrained scale.

    ``residuals`` is ``(T, n)``; ``T == 0`` targets the LKJ prior alone.
    """
    n = vol.n
    if n == 1:
        return vol, True
    resid = np.asarray(residuals, dtype=float).reshape(-1, n)
    T = resid.shape[0]
    scatter = _scaled_scatter(resid, vol.omega[:, :T]) if T else np.zeros((n, n))
    y = unconstrained_from_corr(vol.psi)
    cur, _ = _psi_log_target(y, n, scatter, T, m)
    prop_y = y + step_scale * rng.standard_normal(y.shape)
    prop, psi = _psi_log_target(prop_y, n, scatter, T, m)
    log_ratio = prop - cur
    if np.isnan(log_ratio):
        raise FloatingPointError("non-finite acceptance ratio in the correlation update")
    if np.log(rng.uniform()) < log_ratio:
        return replace(vol, psi=psi), True
    return vol, False


def _tau_log_target(log_tau: np.ndarray, ss: np.ndarray, n_incr: int, upper: float) -> np.ndarray:
    tau = np.exp(log_tau)
    out = -np.log1p(tau * tau) - n_incr * log_tau - 0.5 * ss / (tau * tau) + log_tau
    return np.where((tau < TAU_OMEGA_FLOOR) | (tau > upper), -np.inf, out)


def sample_tau_omega(omega: np.ndarray, tau_omega: np.ndarray, rng: np.random.Generator,
                     step_scale, upper: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-series Metropolis step on ``log tau_omega`` under a half-Cauchy(0, 1) prior.

    ``upper`` truncates the prior. Returns the new scales and a boolean
    acceptance vector.
    """
    upper = np.inf if upper is None else float(upper)
    omega = np.atleast_2d(omega)
    tau = np.maximum(np.asarray(tau_omega, dtype=float), TAU_OMEGA_FLOOR)
    incr = np.diff(omega, axis=1)
    ss = np.sum(incr * incr, axis=1)
    n_incr = incr.shape[1]
    cur_l = np.log(tau)
    prop_l = cur_l + np.asarray(step_scale, dtype=float) * rng.standard_normal(tau.shape)
    log_ratio = _tau_log_target(prop_l, ss, n_incr, upper) - _tau_log_target(cur_l, ss, n_incr, upper)
    if np.any(np.isnan(log_ratio)):
        raise FloatingPointError("non-finite target in the tau_omega update")
    accept = np.log(rng.uniform(size=tau.shape)) < log_ratio
    return np.where(accept, np.exp(prop_l), tau), accept


# -- particle Gibbs with backward simulation ---------------------------------------

@dataclass
class SVObservation:
    """``eps_t ~ N(0, D_t Psi D_t)``: the VAR residuals seen through the volatility paths."""

    residuals: np.ndarray
    psi: np.ndarray
    kind = _smc.SV

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.residuals, dtype=float)
        n = self.data.shape[1]
        c = linalg.cho_factor(self.psi, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
        self.mat = np.ascontiguousarray(linalg.cho_solve(c, np.eye(n)))
        self.const = -0.5 * n * LOG_2PI - 0.5 * logdet
        self.noise_var = 1.0

    def log_density(self, t: int, w: np.ndarray) -> np.ndarray:
        u = self.data[t] * np.exp(-w)
        return self.const - w.sum(axis=1) - 0.5 * np.sum((u @ self.mat) * u, axis=1)


@dataclass
class GaussianObservation:
    """Direct measurements ``y_t ~ N(omega_t, noise_var I)``, a linear-Gaussian surrogate."""

    measurements: np.ndarray
    noise_var: float
    kind = _smc.GAUSSIAN

    def __post_init__(self):
        y = np.asarray(self.measurements, dtype=float)
        self.data = np.ascontiguousarray(y.reshape(y.shape[0], -1))
        n = self.data.shape[1]
        self.mat = np.zeros((n, n))
        self.const = -0.5 * n * (LOG_2PI + np.log(self.noise_var))

    def log_density(self, t: int, w: np.ndarray) -> np.ndarray:
        d = w - self.data[t]
        return self.const - 0.5 * np.sum(d * d, axis=1) / self.noise_var


@dataclass
class ParticleSystem:
    particles: np.ndarray      # (T, N, n)
    log_weights: np.ndarray    # (T, N) normalized filtering log-weights
    ancestors: np.ndarray      # (T, N); row 0 is the identity
    tau_omega: np.ndarray
    log_likelihood: float
    reference: np.ndarray | None = None   # (n, T), held in the last slot
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = np.exp(self.log_weights)

    @property
    def N(self) -> int:
        return self.particles.shape[1]


def systematic_resample(weights: np.ndarray, u: float) -> np.ndarray:
    out = np.empty(weights.size, dtype=np.int64)
    with np.errstate(divide="ignore"):
        _smc._systematic(np.log(weights), float(u), out, weights.size)
    return out


def conditional_systematic_resample(weights: np.ndarray, keep: int, v: float) -> np.ndarray:
    """Systematic resampling conditioned on index ``keep`` being selected.

    The comb offset is drawn from its law given that ``keep`` is hit, the slot
    hitting it is swapped to the end and the other ``N - 1`` indices fill the
    remaining slots.
    """
    out = np.empty(weights.size, dtype=np.int64)
    with np.errstate(divide="ignore"):
        _smc._conditional_systematic(np.log(weights), int(keep), float(v), out)
    return out


def capf_forward(residuals: np.ndarray | None, vol: VolatilityState, N: int,
                 rng: np.random.Generator, reference=True,
                 observation: SVObservation | GaussianObservation | None = None) -> ParticleSystem:
    """Conditional auxiliary particle filter over the log-volatility random walk.

    ``reference=True`` pins the last slot to ``vol.omega``, an ``(n, T)`` array
    pins it to that path, and ``None`` runs an ordinary auxiliary filter whose
    ``exp(log_likelihood)`` is an unbiased likelihood estimate.  First-stage
    weights evaluate the observation density at the random-walk predictive
    mean, i.e. at the parent particle.  Systematic resampling at every step.
    """
    obs = observation if observation is not None else SVObservation(residuals, vol.psi)
    T = obs.data.shape[0]
    n = vol.n
    if reference is True:
        ref = vol.omega[:, :T]
    elif reference is None or reference is False:
        ref = None
    else:
        ref = np.asarray(reference, dtype=float)
    conditional = ref is not None
    if N < (1 if conditional else 2):
        raise ValueError("need at least two particles")
    if conditional and ref.shape != (n, T):
        raise ValueError(f"reference path must be {(n, T)}, got {ref.shape}")
    tau = np.maximum(vol.tau_omega, TAU_OMEGA_FLOOR)
    free = N - 1 if conditional else N
    noise = rng.standard_normal((T, free, n))
    unif = rng.uniform(size=T)
    parts, logw, anc, loglik, bad = _smc.forward(
        obs.kind, obs.data, obs.mat, float(obs.const), float(obs.noise_var),
        float(vol.init_mean), float(np.sqrt(vol.init_var)), tau,
        np.ascontiguousarray(ref) if conditional else np.zeros((n, T)), conditional, noise, unif)
    if bad >= 0:
        raise FloatingPointError(f"all particle weights vanished at t={bad}")
    return ParticleSystem(parts, logw, anc, tau.copy(), float(loglik), ref)


def backward_simulate(system: ParticleSystem, rng: np.random.Generator) -> np.ndarray:
    """Draw one ``(n, T)`` trajectory by backward simulation through the stored clouds.

    At each step back, particle ``j`` is chosen with probability proportional to
    its filtering weight times the random-walk density of the already chosen
    next state.
    """
    T = system.particles.shape[0]
    if T == 0 or system.N == 0:
        raise ValueError("empty particle history")
    unif = rng.uniform(size=T)
    return _smc.backward(system.particles, system.log_weights, 1.0 / system.tau_omega ** 2, unif)


def pgbs_update(residuals: np.ndarray | None, vol: VolatilityState, N: int, rng: np.random.Generator,
                observation=None) -> VolatilityState:
    """Particle Gibbs with backward simulation: new log-volatility paths, other fields untouched."""
    system = capf_forward(residuals, vol, N, rng, reference=True, observation=observation)
    return replace(vol, omega=backward_simulate(system, rng))
