"""VAR(P) data model without intercept, OLS baseline and forecast arithmetic.

Coefficients live in an ``(n, n, P)`` array ``theta`` where ``theta[i, j, k]``
is the effect of lag ``k + 1`` of series ``j`` on series ``i``.  The canonical
flattening is numpy's C order (target ``i`` slowest, then predictor ``j``,
then lag ``k``), so ``theta[i].ravel()`` is the coefficient row of equation
``i`` and lines up with :func:`build_design_row`.

There is no intercept: every series is assumed to be centred before fitting.

Time indices are 0-based rows of the panel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg


class SingularDesignError(np.linalg.LinAlgError):
    """Raised when the lagged design matrix is rank deficient."""


@dataclass(frozen=True)
class VarShape:
    n: int
    P: int
    T: int

    def __post_init__(self):
        if self.n < 1 or self.P < 1 or self.T < 1:
            raise ValueError(f"n, P and T must be positive, got {self}")

    @property
    def n_coef(self) -> int:
        return self.n * self.n * self.P

    @classmethod
    def from_values(cls, values: np.ndarray, P: int) -> "VarShape":
        """Shape for a ``(rows, n)`` panel; ``T`` counts rows left after lag trimming."""
        rows, n = np.shape(values)
        return cls(n=n, P=P, T=rows - P)


def _values(panel) -> np.ndarray:
    return np.asarray(getattr(panel, "values", panel), dtype=float)


def check_coef(theta: np.ndarray, shape: VarShape | None = None) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 3 or theta.shape[0] != theta.shape[1]:
        raise ValueError(f"coefficient tensor must be (n, n, P), got {theta.shape}")
    if shape is not None and theta.shape != (shape.n, shape.n, shape.P):
        raise ValueError(f"expected {(shape.n, shape.n, shape.P)}, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("coefficient tensor has non-finite entries")
    return theta


def flatten(theta: np.ndarray) -> np.ndarray:
    return np.asarray(theta, dtype=float).reshape(-1)


def unflatten(vec: np.ndarray, n: int, P: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.size != n * n * P:
        raise ValueError(f"vector of length {vec.size} cannot hold a ({n}, {n}, {P}) tensor")
    return vec.reshape(n, n, P)


def build_design_row(panel, t: int, shape: VarShape) -> np.ndarray:
    """Lagged regressors for row ``t``: element ``j * P + k`` is ``y[t - k - 1, j]``."""
    y = _values(panel)
    if t < shape.P or t >= y.shape[0]:
        raise IndexError(f"row {t} needs {shape.P} lags inside a panel of {y.shape[0]} rows")
    lags = y[t - shape.P:t][::-1]  # lag 1 first
    if not np.all(np.isfinite(lags)):
        raise ValueError(f"missing values in the lags of row {t}")
    return np.ascontiguousarray(lags.T).reshape(-1)


def design_matrix(panel, P: int) -> tuple[np.ndarray, np.ndarray]:
    """Stacked regressors ``X`` (rows - P, n*P) and targets ``Y`` (rows - P, n)."""
    y = _values(panel)
    rows, n = y.shape
    if rows <= P:
        raise ValueError(f"panel of {rows} rows is too short for {P} lags")
    if not np.all(np.isfinite(y)):
        raise ValueError("panel contains missing values")
    # X[s, j*P + k] = y[P + s - k - 1, j]
    X = np.empty((rows - P, n, P))
    for k in range(P):
        X[:, :, k] = y[P - k - 1:rows - k - 1]
    return X.reshape(rows - P, n * P), y[P:].copy()


@dataclass
class VarData:
    """Lagged design and targets for one estimation sample, with cached cross products."""

    X: np.ndarray
    Y: np.ndarray
    P: int

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.Y = np.ascontiguousarray(self.Y, dtype=float)
        if self.X.shape[0] != self.Y.shape[0] or self.X.shape[1] != self.Y.shape[1] * self.P:
            raise ValueError(f"design {self.X.shape} and targets {self.Y.shape} disagree for P={self.P}")

    @cached_property
    def xx(self) -> np.ndarray:
        """Outer products ``x_t x_t'`` flattened to ``(T, (nP)^2)``."""
        return np.einsum("ta,tb->tab", self.X, self.X).reshape(self.X.shape[0], -1)

    @classmethod
    def from_panel(cls, panel, P: int) -> "VarData":
        X, Y = design_matrix(panel, P)
        return cls(X, Y, P)

    @property
    def shape(self) -> VarShape:
        return VarShape(n=self.Y.shape[1], P=self.P, T=self.Y.shape[0])


def conditional_mean(theta: np.ndarray, design_row: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    x = np.asarray(design_row, dtype=float)
    if theta.ndim != 3 or x.shape[-1] != theta.shape[1] * theta.shape[2]:
        raise ValueError(f"design row of length {x.shape[-1]} does not match tensor {theta.shape}")
    return x @ theta.reshape(n, -1).T


def residuals(theta: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return Y - conditional_mean(theta, X)


def fit_ols(panel, shape: VarShape) -> np.ndarray:
    """Equation-by-equation least squares through a QR factorization."""
    X, Y = design_matrix(panel, shape.P)
    return ols_from_design(X, Y, shape.P)


def ols_from_design(X: np.ndarray, Y: np.ndarray, P: int) -> np.ndarray:
    n = Y.shape[1]
    q, r = linalg.qr(X, mode="economic")
    diag = np.abs(np.diag(r))
    tol = max(X.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    if X.shape[0] < X.shape[1] or diag.size == 0 or diag.min() <= tol:
        raise SingularDesignError(
            f"design matrix ({X.shape[0]} x {X.shape[1]}) is rank deficient"
        )
    coef = linalg.solve_triangular(r, q.T @ Y)  # (n*P, n)
    return coef.T.reshape(n, n, P)


def forecast_mean(draws: Sequence[np.ndarray] | np.ndarray, design_row: np.ndarray) -> np.ndarray:
    """Average of the conditional means implied by each coefficient draw."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 3:
        draws = draws[None]
    if draws.shape[0] == 0:
        raise ValueError("need at least one coefficient draw")
    R, n = draws.shape[:2]
    means = draws.reshape(R, n, -1) @ np.asarray(design_row, dtype=float)
    return means.mean(axis=0)


def rmsfe(predictions, realized) -> float:
    p = np.asarray(predictions, dtype=float)
    r = np.asarray(realized, dtype=float)
    if p.shape != r.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {r.shape}")
    if p.size == 0:
        raise ValueError("rmsfe of an empty vector")
    return float(np.sqrt(np.mean((p - r) ** 2)))


def simulate_var(theta: np.ndarray, T: int, rng: np.random.Generator,
                 noise_cov: np.ndarray | float = 0.0, burn: int = 0,
                 init: np.ndarray | None = None) -> np.ndarray:
    """Simulate ``T`` rows (plus ``burn`` discarded rows) of a VAR with Gaussian noise.

    The returned array has ``P`` leading rows of pre-sample lags followed by
    ``T`` rows, so that ``design_matrix`` on it yields exactly ``T`` equations.
    """
    theta = check_coef(theta)
    n, _, P = theta.shape
    total = P + burn + T
    y = np.zeros((total, n))
    if init is not None:
        y[:P] = init
    cov = np.asarray(noise_cov, dtype=float)
    if cov.ndim == 0:
        noise = np.sqrt(cov) * rng.standard_normal((total, n))
    else:
        noise = rng.multivariate_normal(np.zeros(n), cov, size=total, method="cholesky")
    A = theta.reshape(n, -1)
    for t in range(P, total):
        x = y[t - P:t][::-1].T.reshape(-1)
        y[t] = A @ x + noise[t]
    return y[burn:]
