"""Comparison detectors: Mahalanobis scoring, Page accumulator, autoencoder, SPRT."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from propfault.errors import ConfigError, DataError, InsufficientDataError, TrainingError
from propfault.detector import composite_q_matrix
from propfault.gaussian import GaussianModel, HypothesisBank
from propfault.neural import Adam, dense_init, flatten_params, mlp_backward, mlp_forward, mlp_init


def mahalanobis_score(h0: GaussianModel, x):
    """Distance of x from the healthy distribution under its shrunk covariance."""
    return h0.mahalanobis(x)


@dataclass
class PageTrace:
    """Page accumulator over one flight's scores; clamps at 0, never resets."""

    s: np.ndarray
    drift: float
    threshold: float
    triggered_at: int | None  # 1-based window count at first crossing

    @property
    def triggered(self) -> bool:
        return self.triggered_at is not None


def page_cusum(scores, drift: float, threshold: float) -> PageTrace:
    if threshold <= 0:
        raise ConfigError("Page threshold must be positive")
    scores = np.asarray(scores, dtype=float)
    s = 0.0
    trace = np.empty(len(scores))
    triggered_at = None
    for i, value in enumerate(scores):
        s = max(0.0, s + value - drift)
        trace[i] = s
        if triggered_at is None and s > threshold:
            triggered_at = i + 1
    return PageTrace(s=trace, drift=drift, threshold=threshold, triggered_at=triggered_at)


def calibrate_page(
    healthy_scores,
    *,
    target_arl: int = 200,
    n_sim: int = 200,
    seed: int = 0,
) -> tuple[float, float]:
    """Drift at mean + 0.5 std of healthy scores; threshold set by simulated ARL.

    The threshold is bisected so the mean run length on i.i.d. resamples of
    the healthy scores is at least the target (censored at 5x target).
    """
    scores = np.asarray(healthy_scores, dtype=float)
    if len(scores) < 10:
        raise InsufficientDataError("need >= 10 healthy scores to calibrate Page")
    drift = float(scores.mean() + 0.5 * scores.std())
    rng = np.random.default_rng(seed)
    horizon = 5 * target_arl
    sims = rng.choice(scores, size=(n_sim, horizon), replace=True)

    # the clamped-at-zero accumulator equals cumsum minus its running minimum,
    # so each simulation's running maximum gives trigger times for every h at once
    cum = np.cumsum(sims - drift, axis=1)
    run_min = np.minimum.accumulate(np.minimum(cum, 0.0), axis=1)
    s = cum - run_min
    run_max = np.maximum.accumulate(s, axis=1)

    def mean_run_length(h: float) -> float:
        hits = run_max > h
        first = np.where(hits.any(axis=1), hits.argmax(axis=1) + 1, horizon)
        return float(first.mean())

    lo, hi = 1e-6, float(max(scores.std(), 1e-6))
    while mean_run_length(hi) < target_arl and hi < 1e6:
        hi *= 2.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if mean_run_length(mid) < target_arl:
            lo = mid
        else:
            hi = mid
    return drift, hi


class Autoencoder:
    """Dense 90-64-32-64-90 reconstructor trained on healthy, standardized rows.

    The anomaly score is the mean squared reconstruction error over the
    feature coordinates.
    """

    def __init__(self, n_features: int = 90, hidden=(64, 32, 64), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n_features = n_features
        self.hidden = tuple(hidden)
        self.trunk = mlp_init(rng, [n_features, *hidden])
        self.head = dense_init(rng, hidden[-1], n_features)
        self.fitted = False
        self.val_curve: list[float] = []

    def _reconstruct(self, X):
        h, acts = mlp_forward(self.trunk, X)
        return h @ self.head[0] + self.head[1], h, acts

    def fit(
        self,
        X,
        *,
        epochs: int = 400,
        batch_size: int = 64,
        learning_rate: float = 1e-3,
        val_fraction: float = 0.1,
        patience: int = 25,
        seed: int = 0,
    ) -> "Autoencoder":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] < 10:
            raise InsufficientDataError("need >= 10 rows to train the autoencoder")
        rng = np.random.default_rng(seed)
        order = rng.permutation(X.shape[0])
        n_val = max(1, int(round(val_fraction * X.shape[0])))
        val, train = X[order[:n_val]], X[order[n_val:]]

        params = flatten_params(self.trunk) + [self.head[0], self.head[1]]
        adam = Adam(params, lr=learning_rate)
        best = (np.inf, [p.copy() for p in params])
        since_best = 0
        self.val_curve = []
        for epoch in range(epochs):
            order_ep = rng.permutation(len(train))
            for start in range(0, len(train), batch_size):
                rows = train[order_ep[start : start + batch_size]]
                xhat, h, acts = self._reconstruct(rows)
                err = xhat - rows
                if not np.isfinite(err).all():
                    raise TrainingError(f"autoencoder diverged at epoch {epoch}")
                g_out = 2.0 * err / err.size
                g_head = [h.T @ g_out, g_out.sum(axis=0)]
                g_h = g_out @ self.head[0].T
                trunk_grads, _ = mlp_backward(self.trunk, acts, g_h)
                adam.step(params, flatten_params(trunk_grads) + g_head)
            xhat, _, _ = self._reconstruct(val)
            val_mse = float(np.mean((xhat - val) ** 2))
            self.val_curve.append(val_mse)
            if val_mse < best[0]:
                best = (val_mse, [p.copy() for p in params])
                since_best = 0
            else:
                since_best += 1
                if since_best >= patience:
                    break
        for p, b in zip(params, best[1]):
            p[...] = b
        self.fitted = True
        return self

    def score(self, X):
        if not self.fitted:
            raise TrainingError("autoencoder is not trained")
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X2.shape[1]}")
        xhat, _, _ = self._reconstruct(X2)
        out = np.mean((xhat - X2) ** 2, axis=1)
        return float(out[0]) if single else out


@dataclass
class SprtResult:
    flight_id: str
    fault_declared: bool
    fault_votes: int
    healthy_votes: int


def sprt_flight(
    bank: HypothesisBank,
    X_std,
    *,
    flight_id: str = "",
    alpha: float = 0.05,
    beta: float = 0.05,
) -> SprtResult:
    """Wald test on the cumulative composite log-likelihood ratio.

    The accumulator restarts after each boundary crossing; the flight is
    declared faulty iff fault votes strictly outnumber healthy votes. A flight
    with no completed decisions is declared healthy.
    """
    upper = float(np.log((1.0 - beta) / alpha))
    lower = float(np.log(beta / (1.0 - alpha)))
    llr, _ = composite_q_matrix(bank, X_std)
    cum = 0.0
    fault_votes = healthy_votes = 0
    for value in llr:
        cum += value
        if cum >= upper:
            fault_votes += 1
            cum = 0.0
        elif cum <= lower:
            healthy_votes += 1
            cum = 0.0
    return SprtResult(
        flight_id=flight_id,
        fault_declared=fault_votes > healthy_votes,
        fault_votes=fault_votes,
        healthy_votes=healthy_votes,
    )
