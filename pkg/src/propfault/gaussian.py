"""Multivariate Gaussian hypothesis models with Ledoit-Wolf covariance shrinkage.

Each hypothesis (healthy, or fault on one motor) is a full-covariance Gaussian
over the standardized feature vector. The shrinkage target is the scaled
identity (tr(S)/D) * I, which keeps fits well conditioned when the sample
count is comparable to the feature dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from propfault.errors import (
    DataError,
    InsufficientDataError,
    MissingClassError,
)
from propfault.features import FeatureTable

# Tiny ridge added after shrinkage so degenerate inputs (e.g. identical rows)
# still yield a positive-definite covariance.
_EIG_FLOOR = 1e-9

_LOG_2PI = math.log(2.0 * math.pi)

# Floor for per-feature standardization scales; a zero-variance healthy
# feature is passed through unscaled rather than dividing by zero.
_STD_FLOOR = 1e-12


def ledoit_wolf(X) -> tuple[np.ndarray, np.ndarray, float]:
    """ML mean and shrunk covariance (1-l)*S + l*(tr(S)/D)*I with closed-form l.

    S is the maximum-likelihood (1/N) sample covariance. Returns
    (mean, covariance, shrinkage). When the dispersion of S around the target
    vanishes (e.g. identical rows) the intensity is 1 by convention.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("expected a 2-D sample matrix")
    n, d = X.shape
    if n < 2:
        raise InsufficientDataError(f"need >= 2 rows to fit a Gaussian, got {n}")
    if not np.isfinite(X).all():
        raise DataError("non-finite values in sample matrix")

    mean = X.mean(axis=0)
    xc = X - mean
    s = xc.T @ xc / n
    mu = float(np.trace(s)) / d
    delta = float(((s - mu * np.eye(d)) ** 2).sum()) / d
    if delta <= 0.0:
        lam = 1.0
    else:
        x2 = xc**2
        beta = float(((x2.T @ x2) / n - s**2).sum()) / (d * n)
        lam = min(1.0, max(0.0, min(beta, delta) / delta))

    cov = (1.0 - lam) * s + lam * mu * np.eye(d)
    cov[np.diag_indices(d)] += _EIG_FLOOR * max(mu, 1.0)
    cov = 0.5 * (cov + cov.T)
    return mean, cov, lam


@dataclass
class GaussianModel:
    """A fitted Gaussian with cached Cholesky factor and log-determinant."""

    mean: np.ndarray
    covariance: np.ndarray
    shrinkage: float
    _chol: np.ndarray = field(init=False, repr=False)
    _log_det: float = field(init=False, repr=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.covariance = np.asarray(self.covariance, dtype=float)
        if self.covariance.shape != (self.dim, self.dim):
            raise DataError("covariance shape does not match mean")
        try:
            self._chol = np.linalg.cholesky(self.covariance)
        except np.linalg.LinAlgError as exc:
            raise DataError("covariance is not positive definite") from exc
        self._log_det = 2.0 * float(np.log(np.diag(self._chol)).sum())

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _whiten(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.dim:
            raise DataError(
                f"dimension mismatch: model is {self.dim}-dim, input is {x2.shape[1]}"
            )
        z = solve_triangular(self._chol, (x2 - self.mean).T, lower=True)
        return z, single

    def log_pdf(self, x):
        """Exact multivariate normal log-density; vectorized over rows."""
        z, single = self._whiten(x)
        quad = (z**2).sum(axis=0)
        out = -0.5 * (quad + self._log_det + self.dim * _LOG_2PI)
        return float(out[0]) if single else out

    def mahalanobis(self, x):
        z, single = self._whiten(x)
        out = np.sqrt((z**2).sum(axis=0))
        return float(out[0]) if single else out

    def sample(self, n: int, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T


def fit_gaussian(X) -> GaussianModel:
    mean, cov, lam = ledoit_wolf(X)
    return GaussianModel(mean=mean, covariance=cov, shrinkage=lam)


@dataclass
class HypothesisBank:
    """Healthy model plus per-motor fault models in shared standardized space."""

    h0: GaussianModel
    h1: tuple[GaussianModel, ...]
    standardize_mean: np.ndarray
    standardize_std: np.ndarray
    schema_hash: str = ""
    pooled: bool = False
    healthy_q95: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.h1) < 1:
            raise DataError("bank needs at least one alternative model")
        dims = {self.h0.dim} | {m.dim for m in self.h1}
        if len(dims) != 1:
            raise DataError("bank models disagree in dimension")

    @property
    def motor_count(self) -> int:
        return len(self.h1)

    @property
    def dim(self) -> int:
        return self.h0.dim

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X - self.standardize_mean) / self.standardize_std


def fit_bank(
    table: FeatureTable,
    *,
    motor_count: int | None = None,
    pooled: bool = False,
) -> HypothesisBank:
    """Fit H0 on healthy rows and one alternative per motor (or one pooled).

    Standardization parameters come from the healthy rows only; all rows are
    standardized before fitting so the log-power and raw-moment features live
    on comparable scales.
    """
    healthy = table.healthy_mask
    if healthy.sum() < 2:
        raise InsufficientDataError("need >= 2 healthy windows to fit the bank")
    mean = table.X[healthy].mean(axis=0)
    std = table.X[healthy].std(axis=0)
    std = np.where(std < _STD_FLOOR, 1.0, std)
    Xs = (table.X - mean) / std

    h0 = fit_gaussian(Xs[healthy])
    if pooled:
        fault = table.fault_mask
        if fault.sum() < 2:
            raise MissingClassError("no fault windows for the pooled alternative")
        h1 = (fit_gaussian(Xs[fault]),)
    else:
        m_count = motor_count if motor_count is not None else int(table.motors.max())
        if m_count < 1:
            raise MissingClassError("corpus has no fault windows")
        models = []
        for m in range(1, m_count + 1):
            rows = table.motors == m
            if not rows.any():
                raise MissingClassError(f"no fault windows for motor {m}")
            models.append(fit_gaussian(Xs[rows]))
        h1 = tuple(models)

    return HypothesisBank(
        h0=h0,
        h1=h1,
        standardize_mean=mean,
        standardize_std=std,
        schema_hash=table.schema.hash(),
        pooled=pooled,
        metadata={
            "h0_shrinkage": h0.shrinkage,
            "h1_shrinkage": [m.shrinkage for m in h1],
            "n_healthy": int(healthy.sum()),
            "n_fault": int(table.fault_mask.sum()),
        },
    )
