"""Continuous shrinkage priors on VAR coefficients and the coefficient update.

Horseshoe: ``theta_ijk ~ N(0, lambda_ijk^2 tau_i^2)`` with half-Cauchy local
scales and one half-Cauchy global scale per equation.  The half-Cauchy laws
are written as inverse-gamma mixtures (``x^2 | a ~ IG(1/2, 1/a)``,
``a ~ IG(1/2, 1)``) so every scale update is conjugate.

Student-t, Laplace and ridge: ``theta_ijk ~ N(0, lambda_ijk^2)`` with
``lambda^2 ~ IG(a, b)``, ``lambda^2 ~ Exp(rate)`` or ``lambda^2 = 9``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .model import VarData
from .volatility import VolatilityState, inverse_covariances

PRIOR_VAR_FLOOR = 1e-12
PRIOR_VAR_CAP = 1e12
SCHEMES = ("hs", "dm", "t", "lap", "ridge")


def inv_gamma(shape, scale, rng: np.random.Generator):
    """Draw from IG(shape, scale), density proportional to ``x^(-shape-1) exp(-scale/x)``."""
    return np.asarray(scale) / rng.gamma(shape, size=np.shape(scale) or None)


def kappa_from_lambda(lam):
    """Shrinkage weight ``1 / (1 + lambda^2)``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError("lambda must be finite and non-negative")
    out = 1.0 / (1.0 + lam * lam)
    return float(out) if out.ndim == 0 else out


def normal_means_oracle(y: float, lambda_sq: float) -> float:
    """Posterior mean ``(1 - kappa) y`` of a normal mean with unit noise and unit global scale."""
    if not (np.isfinite(y) and np.isfinite(lambda_sq)) or lambda_sq < 0:
        raise ValueError("inputs must be finite with lambda_sq >= 0")
    kappa = 1.0 / (1.0 + lambda_sq)
    return float((1.0 - kappa) * y)


# -- horseshoe ---------------------------------------------------------------------

@dataclass
class HorseshoeState:
    lambda_sq: np.ndarray    # (n, n, P) squared local scales
    tau_sq: np.ndarray       # (n,) squared per-equation global scales
    nu: np.ndarray           # (n, n, P) mixing variables of the local scales
    xi: np.ndarray           # (n,) mixing variables of the global scales

    @property
    def lam(self) -> np.ndarray:
        return np.sqrt(self.lambda_sq)

    @property
    def tau(self) -> np.ndarray:
        return np.sqrt(self.tau_sq)

    @property
    def kappa(self) -> np.ndarray:
        return 1.0 / (1.0 + self.lambda_sq)

    @classmethod
    def ones(cls, n: int, P: int) -> "HorseshoeState":
        return cls(np.ones((n, n, P)), np.ones(n), np.ones((n, n, P)), np.ones(n))

    def prior_variance(self) -> np.ndarray:
        return np.clip(self.lambda_sq * self.tau_sq[:, None, None], PRIOR_VAR_FLOOR, PRIOR_VAR_CAP)

    def validate(self) -> None:
        for name in ("lambda_sq", "tau_sq", "nu", "xi"):
            v = getattr(self, name)
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ValueError(f"horseshoe {name} must be positive and finite")


def sample_horseshoe_prior(n: int, P: int, rng: np.random.Generator) -> HorseshoeState:
    """Independent draw of all horseshoe scales from the prior, through the mixture form."""
    nu = inv_gamma(0.5, np.ones((n, n, P)), rng)
    lambda_sq = inv_gamma(0.5, 1.0 / nu, rng)
    xi = inv_gamma(0.5, np.ones(n), rng)
    tau_sq = inv_gamma(0.5, 1.0 / xi, rng)
    return HorseshoeState(lambda_sq, tau_sq, nu, xi)


def sample_horseshoe_scales(theta: np.ndarray, state: HorseshoeState,
                            rng: np.random.Generator) -> HorseshoeState:
    """One Gibbs pass over local scales, global scales and their mixing variables."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("non-finite coefficients")
    n, _, P = theta.shape
    th2 = theta * theta
    tau_sq = state.tau_sq
    lambda_sq = inv_gamma(1.0, 1.0 / state.nu + th2 / (2.0 * tau_sq[:, None, None]), rng)
    lambda_sq = np.clip(lambda_sq, PRIOR_VAR_FLOOR, PRIOR_VAR_CAP)
    tau_sq = inv_gamma(0.5 * (n * P + 1), 1.0 / state.xi + np.sum(th2 / (2.0 * lambda_sq), axis=(1, 2)), rng)
    tau_sq = np.clip(tau_sq, PRIOR_VAR_FLOOR, PRIOR_VAR_CAP)
    nu = inv_gamma(1.0, 1.0 + 1.0 / lambda_sq, rng)
    xi = inv_gamma(1.0, 1.0 + 1.0 / tau_sq, rng)
    return HorseshoeState(lambda_sq, tau_sq, nu, xi)


# -- t / Laplace / ridge -----------------------------------------------------------

@dataclass
class ScalarShrinkState:
    scheme: str                       # "t", "lap" or "ridge"
    lambda_sq: np.ndarray             # (n, n, P) prior variances
    a: float = 0.5                    # Student-t inverse-gamma shape
    b: float = 0.5                    # Student-t inverse-gamma scale
    rate: float = 2.0                 # Laplace exponential rate
    ridge_var: float = 9.0

    def __post_init__(self):
        if self.scheme not in ("t", "lap", "ridge"):
            raise ValueError(f"unknown shrinkage scheme {self.scheme!r}")
        if self.scheme == "ridge":
            self.lambda_sq = np.full(np.shape(self.lambda_sq), self.ridge_var)

    @classmethod
    def initial(cls, scheme: str, n: int, P: int, **hyper) -> "ScalarShrinkState":
        return cls(scheme, np.ones((n, n, P)), **hyper)

    @property
    def kappa(self) -> np.ndarray:
        return 1.0 / (1.0 + self.lambda_sq)

    def prior_variance(self) -> np.ndarray:
        return np.clip(self.lambda_sq, PRIOR_VAR_FLOOR, PRIOR_VAR_CAP)


def sample_scalar_scales(theta: np.ndarray, state: ScalarShrinkState,
                         rng: np.random.Generator) -> ScalarShrinkState:
    theta = np.asarray(theta, dtype=float)
    if state.scheme == "ridge":
        return state
    if state.scheme == "t":
        lam = inv_gamma(state.a + 0.5, state.b + 0.5 * theta * theta, rng)
    elif state.scheme == "lap":
        lam = sample_laplace_variance(theta, state.rate, rng)
    else:
        raise ValueError(f"unknown shrinkage scheme {state.scheme!r}")
    return replace(state, lambda_sq=np.clip(lam, PRIOR_VAR_FLOOR, PRIOR_VAR_CAP))


def sample_laplace_variance(theta: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``lambda^2 | theta`` for ``theta ~ N(0, lambda^2)``, ``lambda^2 ~ Exp(rate)``.

    The full conditional is GIG(1/2, 2 rate, theta^2); its reciprocal is inverse
    Gaussian with mean ``sqrt(2 rate) / |theta|`` and shape ``2 rate``.  At
    ``theta == 0`` it degenerates to Gamma(1/2, rate).
    """
    absth = np.abs(np.asarray(theta, dtype=float))
    shape = 2.0 * rate
    out = np.empty_like(absth)
    zero = absth < 1e-150
    nz = ~zero
    if np.any(nz):
        mean = np.sqrt(shape) / absth[nz]
        out[nz] = 1.0 / rng.wald(mean, shape)
    if np.any(zero):
        out[zero] = rng.gamma(0.5, 1.0 / rate, size=int(zero.sum()))
    return out


# -- coefficient update ------------------------------------------------------------

def likelihood_precision(data: VarData, omega_inv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian likelihood terms for the flattened coefficient vector.

    Returns ``sum_t Omega_t^{-1} (x) x_t x_t'`` and ``sum_t (Omega_t^{-1} y_t) (x) x_t``,
    ordered to match the C-order flattening of ``theta``.
    """
    T, nP = data.X.shape
    n = data.Y.shape[1]
    oi = np.ascontiguousarray(omega_inv).reshape(T, n * n)
    Q = (oi.T @ data.xx).reshape(n, n, nP, nP).transpose(0, 2, 1, 3).reshape(n * nP, n * nP)
    wy = np.einsum("tab,tb->ta", omega_inv, data.Y)
    b = (wy.T @ data.X).reshape(-1)
    return Q, b


def draw_gaussian(Q: np.ndarray, b: np.ndarray, rng: np.random.Generator,
                  size: int | None = None) -> np.ndarray:
    """Draw from N(Q^{-1} b, Q^{-1}) through the Cholesky factor of the precision ``Q``.

    ``Q`` is rescaled to unit diagonal first; under stochastic volatility its
    entries can span many orders of magnitude.
    """
    d = np.sqrt(np.diag(Q))
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise np.linalg.LinAlgError("posterior precision is not positive definite")
    try:
        L = linalg.cholesky(Q / np.outer(d, d), lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("posterior precision is not positive definite") from exc
    mean = linalg.cho_solve((L, True), b / d)
    z = rng.standard_normal(b.shape if size is None else (size,) + b.shape)
    return (mean + linalg.solve_triangular(L, z.T, lower=True, trans="T").T) / d


def theta_precision(data: VarData, prior_variances: np.ndarray,
                    vol: VolatilityState | None) -> tuple[np.ndarray, np.ndarray]:
    """Posterior precision and linear term of the flattened coefficients."""
    n, T = data.Y.shape[1], data.Y.shape[0]
    pv = np.clip(np.asarray(prior_variances, dtype=float).reshape(-1), PRIOR_VAR_FLOOR, PRIOR_VAR_CAP)
    Q, b = likelihood_precision(data, inverse_covariances(vol, T, n))
    Q[np.diag_indices_from(Q)] += 1.0 / pv
    return Q, b


def sample_theta(data: VarData, prior_variances: np.ndarray, vol: VolatilityState | None,
                 rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Joint draw of all VAR coefficients given prior variances and error covariances.

    ``size`` returns that many independent draws stacked on a leading axis.
    """
    n, P = data.Y.shape[1], data.P
    Q, b = theta_precision(data, prior_variances, vol)
    try:
        draw = draw_gaussian(Q, b, rng, size)
    except np.linalg.LinAlgError:
        # extreme volatility paths can make Q singular in double precision
        draw = _draw_square_root(data, prior_variances, vol, rng, size)
    return draw.reshape((n, n, P) if size is None else (size, n, n, P))


def _draw_square_root(data: VarData, prior_variances: np.ndarray, vol: VolatilityState | None,
                      rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Same draw as :func:`draw_gaussian` but from a QR factor of the whitened design."""
    T, nP = data.X.shape
    n = data.Y.shape[1]
    pv = np.clip(np.asarray(prior_variances, dtype=float).reshape(-1), PRIOR_VAR_FLOOR, PRIOR_VAR_CAP)
    if vol is None:
        W = np.broadcast_to(np.eye(n), (T, n, n))
    else:
        C = linalg.cholesky(vol.psi, lower=True)
        Ci = linalg.solve_triangular(C, np.eye(n), lower=True)
        W = Ci[None] * np.exp(-vol.omega[:, :T].T)[:, None, :]
    # row (t, a) of the whitened design: sum_i W[t, a, i] * e_i kron x_t
    A = np.einsum("tai,tm->taim", W, data.X).reshape(T * n, n * nP)
    z = np.einsum("tai,ti->ta", W, data.Y).reshape(-1)
    A = np.vstack([A, np.diag(1.0 / np.sqrt(pv))])
    z = np.concatenate([z, np.zeros(n * nP)])
    q, R = np.linalg.qr(A)
    if not np.all(np.isfinite(R)) or np.min(np.abs(np.diag(R))) == 0:
        raise np.linalg.LinAlgError("posterior precision is not positive definite")
    mean = linalg.solve_triangular(R, q.T @ z)
    e = rng.standard_normal((n * nP,) if size is None else (size, n * nP))
    return mean + linalg.solve_triangular(R, e.T).T


# -- summaries ---------------------------------------------------------------------

KAPPA_BINS = 50


def kappa_histogram(samples, bins: int = KAPPA_BINS) -> np.ndarray:
    """Counts over ``bins`` equal bins of (0, 1] along the first axis of ``samples``."""
    s = np.asarray(samples, dtype=float)
    idx = np.clip(np.ceil(s * bins).astype(int) - 1, 0, bins - 1)
    flat = idx.reshape(idx.shape[0], -1)
    counts = np.zeros((bins, flat.shape[1]), dtype=np.int64)
    for c in range(flat.shape[1]):
        counts[:, c] = np.bincount(flat[:, c], minlength=bins)
    return counts.reshape((bins,) + s.shape[1:])


def map_kappa(samples, bins: int = KAPPA_BINS) -> float:
    """Midpoint of the most populated of ``bins`` equal bins on (0, 1].

    Ties go to the bin nearest 1.
    """
    s = np.asarray(samples, dtype=float).reshape(-1)
    if s.size == 0:
        raise ValueError("no kappa samples")
    if np.any(s <= 0) or np.any(s > 1) or np.any(~np.isfinite(s)):
        raise ValueError("kappa samples must lie in (0, 1]")
    counts = kappa_histogram(s[:, None], bins)[:, 0]
    top = bins - 1 - int(np.argmax(counts[::-1]))
    return (top + 0.5) / bins


@dataclass
class ShrinkageProfile:
    kappa: np.ndarray                         # (R, n, n, P) posterior draws
    map_estimate: np.ndarray = field(init=False)
    histogram: np.ndarray = field(init=False)  # (bins, n, n, P)

    def __post_init__(self):
        self.kappa = np.asarray(self.kappa, dtype=float)
        self.histogram = kappa_histogram(self.kappa)
        c = self.histogram.reshape(KAPPA_BINS, -1)[::-1]
        top = KAPPA_BINS - 1 - np.argmax(c, axis=0)
        self.map_estimate = ((top + 0.5) / KAPPA_BINS).reshape(self.kappa.shape[1:])
