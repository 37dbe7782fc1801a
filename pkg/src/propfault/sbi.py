"""Posterior inference over fault parameters via a conditional Gaussian mixture.

A small tanh network maps the standardized feature vector to a K-component
diagonal Gaussian mixture over theta = (severity, soft one-hot motor
occupancy with a trailing healthy class). Training pairs come from labeled
windows: discrete severity labels are dequantized with Gaussian noise and the
features are jittered for augmentation, after which minibatch Adam minimizes
the mixture negative log-likelihood. One forward pass then yields the
approximate posterior for any new window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from propfault.errors import (
    ConfigError,
    DataError,
    InsufficientDataError,
    LabelError,
    TrainingError,
)
from propfault.features import FeatureTable
from propfault.neural import Adam, dense_init, flatten_params, mlp_backward, mlp_forward, mlp_init

PRIOR_SEV = (-0.01, 0.13)
PRIOR_MOT = (-0.1, 1.1)
FAULT_SEV_THRESHOLD = 0.025

DEFAULT_DEQUANT_SIGMA = 0.005
DEFAULT_AUGMENT_FACTOR = 3
DEFAULT_JITTER_FRAC = 0.05

_LOG_SIG_CLIP = 9.0
_LOG_2PI = float(np.log(2.0 * np.pi))
_STD_FLOOR = 1e-12
MIN_TRAINING_PAIRS = 100


@dataclass
class SbiTrainingSet:
    """(theta, x) pairs with the feature standardization they were built under."""

    theta: np.ndarray
    x: np.ndarray
    standardize_mean: np.ndarray
    standardize_std: np.ndarray
    motor_count: int
    schema_hash: str = ""

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def theta_dim(self) -> int:
        return self.theta.shape[1]


def build_training_pairs(
    table: FeatureTable,
    *,
    dequant_sigma: float = DEFAULT_DEQUANT_SIGMA,
    augment_factor: int = DEFAULT_AUGMENT_FACTOR,
    jitter_frac: float = DEFAULT_JITTER_FRAC,
    seed: int = 0,
    motor_count: int | None = None,
) -> SbiTrainingSet:
    """Dequantize labels into theta and jitter features for augmentation.

    Each original window is emitted once plus (augment_factor - 1) copies
    whose standardized features carry independent Gaussian jitter with scale
    jitter_frac (i.e. jitter_frac of each feature's standard deviation).
    Every emitted pair draws fresh label noise.
    """
    if augment_factor < 1:
        raise ConfigError("augment_factor must be >= 1")
    if not np.isfinite(table.severities).all():
        raise LabelError("missing severity on a labeled row")
    bad = (table.severities > 0) & (table.motors == 0)
    if bad.any():
        raise LabelError(
            f"fault rows without a motor label at indices {np.flatnonzero(bad)[:5]}"
        )
    m_count = motor_count
    if m_count is None:
        m_count = int(table.motors.max())
    if m_count < 1:
        raise ConfigError("motor_count required when the corpus has no fault rows")

    mean = table.X.mean(axis=0)
    std = table.X.std(axis=0)
    std = np.where(std < _STD_FLOOR, 1.0, std)
    xs = (table.X - mean) / std

    rng = np.random.default_rng(seed)
    n = table.n
    idx = np.repeat(np.arange(n), augment_factor)
    total = len(idx)

    x = xs[idx].copy()
    noise = rng.normal(0.0, jitter_frac, size=(total, xs.shape[1]))
    noise[np.arange(total) % augment_factor == 0] = 0.0
    x += noise

    sev = np.clip(
        table.severities[idx] + rng.normal(0.0, dequant_sigma, size=total),
        PRIOR_SEV[0],
        PRIOR_SEV[1],
    )
    classes = np.where(table.motors[idx] > 0, table.motors[idx] - 1, m_count)
    onehot = np.zeros((total, m_count + 1))
    onehot[np.arange(total), classes] = 1.0
    mot = np.clip(
        onehot + rng.uniform(-0.1, 0.1, size=onehot.shape),
        PRIOR_MOT[0],
        PRIOR_MOT[1],
    )

    return SbiTrainingSet(
        theta=np.column_stack([sev, mot]),
        x=x,
        standardize_mean=mean,
        standardize_std=std,
        motor_count=m_count,
        schema_hash=table.schema.hash(),
    )


class PosteriorModel:
    """Conditional Gaussian mixture p(theta | x) with a tanh trunk.

    theta[0] is the severity; theta[1:] (when present) is the soft one-hot
    motor block with the healthy class last.
    """

    def __init__(
        self,
        x_dim: int,
        theta_dim: int,
        *,
        hidden=(128, 128),
        components: int = 8,
        motor_count: int = 0,
        standardize_mean=None,
        standardize_std=None,
        schema_hash: str = "",
        seed: int = 0,
    ):
        if components < 1:
            raise ConfigError("need at least one mixture component")
        self.x_dim = x_dim
        self.theta_dim = theta_dim
        self.hidden = tuple(int(h) for h in hidden)
        self.components = components
        self.motor_count = motor_count
        self.standardize_mean = (
            np.zeros(x_dim) if standardize_mean is None else np.asarray(standardize_mean, float)
        )
        self.standardize_std = (
            np.ones(x_dim) if standardize_std is None else np.asarray(standardize_std, float)
        )
        self.schema_hash = schema_hash
        self.train_meta: dict = {}

        rng = np.random.default_rng(seed)
        h = self.hidden[-1]
        k, t = components, theta_dim
        self.trunk = mlp_init(rng, [x_dim, *self.hidden])
        self.head_pi = dense_init(rng, h, k)
        self.head_mu = dense_init(rng, h, k * t, scale=0.1)
        self.head_sig = dense_init(rng, h, k * t, scale=0.1)

    # -- parameters ---------------------------------------------------------

    def get_params(self) -> list[np.ndarray]:
        return flatten_params(self.trunk) + [
            self.head_pi[0],
            self.head_pi[1],
            self.head_mu[0],
            self.head_mu[1],
            self.head_sig[0],
            self.head_sig[1],
        ]

    def set_params(self, values):
        params = self.get_params()
        if len(values) != len(params):
            raise ConfigError("parameter list length mismatch")
        for p, v in zip(params, values):
            p[...] = v

    def init_output_heads(self, theta: np.ndarray, rng: np.random.Generator):
        """Seed component means/scales from the label moments; speeds up training."""
        t_mean = theta.mean(axis=0)
        t_std = np.maximum(theta.std(axis=0), 1e-3)
        k, t = self.components, self.theta_dim
        self.head_mu[1][...] = (
            np.tile(t_mean, k) + 0.25 * np.tile(t_std, k) * rng.standard_normal(k * t)
        )
        self.head_sig[1][...] = np.tile(np.log(t_std), k)
        self.head_pi[1][...] = 0.0

    # -- density ------------------------------------------------------------

    def standardize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.standardize_mean) / self.standardize_std

    def mixture_params(self, X):
        """Mixture for each row of standardized X: (log_w, mu, log_sig)."""
        out = self._forward(np.atleast_2d(np.asarray(X, dtype=float)))
        return out["log_w"], out["mu"], out["log_sig"]

    def _forward(self, X) -> dict:
        if X.shape[1] != self.x_dim:
            raise DataError(f"expected {self.x_dim}-dim input, got {X.shape[1]}")
        n = X.shape[0]
        k, t = self.components, self.theta_dim
        h, acts = mlp_forward(self.trunk, X)
        logits = h @ self.head_pi[0] + self.head_pi[1]
        log_w = logits - logsumexp(logits, axis=1, keepdims=True)
        mu = (h @ self.head_mu[0] + self.head_mu[1]).reshape(n, k, t)
        raw_sig = (h @ self.head_sig[0] + self.head_sig[1]).reshape(n, k, t)
        log_sig = np.clip(raw_sig, -_LOG_SIG_CLIP, _LOG_SIG_CLIP)
        return {
            "h": h,
            "acts": acts,
            "log_w": log_w,
            "mu": mu,
            "log_sig": log_sig,
            "raw_sig": raw_sig,
        }

    def _component_logliks(self, fwd, theta):
        z = (theta[:, None, :] - fwd["mu"]) / np.exp(fwd["log_sig"])
        comp = (
            -0.5 * (z**2).sum(axis=2)
            - fwd["log_sig"].sum(axis=2)
            - 0.5 * self.theta_dim * _LOG_2PI
        )
        return fwd["log_w"] + comp, z

    def log_prob(self, theta, x) -> np.ndarray:
        """log p(theta | x) for rows of theta at a single observation x."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        fwd = self._forward(np.tile(np.asarray(x, float), (theta.shape[0], 1)))
        full, _ = self._component_logliks(fwd, theta)
        return logsumexp(full, axis=1)

    def nll(self, X, theta) -> float:
        fwd = self._forward(np.atleast_2d(np.asarray(X, dtype=float)))
        full, _ = self._component_logliks(fwd, np.atleast_2d(theta))
        return float(-logsumexp(full, axis=1).mean())

    def loss_and_grads(self, X, theta):
        """Mean NLL over the batch and gradients aligned with get_params()."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        n = X.shape[0]
        k, t = self.components, self.theta_dim

        fwd = self._forward(X)
        full, z = self._component_logliks(fwd, theta)
        lse = logsumexp(full, axis=1)
        loss = float(-lse.mean())

        resp = np.exp(full - lse[:, None])
        w = np.exp(fwd["log_w"])
        sig = np.exp(fwd["log_sig"])

        g_logits = (w - resp) / n
        g_mu = -(resp[:, :, None] * z / sig) / n
        g_ls = -(resp[:, :, None] * (z**2 - 1.0)) / n
        # clipped log-sigma entries contribute no gradient
        g_ls *= np.abs(fwd["raw_sig"]) < _LOG_SIG_CLIP

        h = fwd["h"]
        g_mu_flat = g_mu.reshape(n, k * t)
        g_ls_flat = g_ls.reshape(n, k * t)
        head_grads = [
            h.T @ g_logits,
            g_logits.sum(axis=0),
            h.T @ g_mu_flat,
            g_mu_flat.sum(axis=0),
            h.T @ g_ls_flat,
            g_ls_flat.sum(axis=0),
        ]
        g_h = (
            g_logits @ self.head_pi[0].T
            + g_mu_flat @ self.head_mu[0].T
            + g_ls_flat @ self.head_sig[0].T
        )
        trunk_grads, _ = mlp_backward(self.trunk, fwd["acts"], g_h)
        return loss, flatten_params(trunk_grads) + head_grads

    # -- sampling -----------------------------------------------------------

    def sample_posterior(self, x, n: int, seed=None) -> np.ndarray:
        """Draw n theta samples from the conditional mixture at x."""
        rng = np.random.default_rng(seed)
        log_w, mu, log_sig = self.mixture_params(np.atleast_2d(np.asarray(x, float)))
        w = np.exp(log_w[0])
        w = w / w.sum()
        comp = rng.choice(self.components, size=n, p=w)
        eps = rng.standard_normal((n, self.theta_dim))
        return mu[0][comp] + np.exp(log_sig[0][comp]) * eps


def train_posterior(
    training_set: SbiTrainingSet,
    *,
    hidden=(128, 128),
    components: int = 8,
    epochs: int = 300,
    batch_size: int = 128,
    learning_rate: float = 1e-3,
    seed: int = 0,
) -> PosteriorModel:
    """Fit the conditional mixture by minibatch Adam on the mixture NLL."""
    if training_set.n < MIN_TRAINING_PAIRS:
        raise InsufficientDataError(
            f"need >= {MIN_TRAINING_PAIRS} training pairs, got {training_set.n}"
        )
    seq = np.random.SeedSequence(seed)
    init_seed, shuffle_seed = seq.spawn(2)

    model = PosteriorModel(
        x_dim=training_set.x.shape[1],
        theta_dim=training_set.theta_dim,
        hidden=hidden,
        components=components,
        motor_count=training_set.motor_count,
        standardize_mean=training_set.standardize_mean,
        standardize_std=training_set.standardize_std,
        schema_hash=training_set.schema_hash,
        seed=np.random.default_rng(init_seed).integers(2**31),
    )
    model.init_output_heads(training_set.theta, np.random.default_rng(init_seed))

    params = model.get_params()
    adam = Adam(params, lr=learning_rate)
    rng = np.random.default_rng(shuffle_seed)
    n = training_set.n
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            rows = order[start : start + batch_size]
            loss, grads = model.loss_and_grads(
                training_set.x[rows], training_set.theta[rows]
            )
            if not np.isfinite(loss):
                raise TrainingError(f"training loss diverged at epoch {epoch}")
            adam.step(params, grads)
            total += loss * len(rows)
        losses.append(total / n)

    model.train_meta = {
        "epochs": epochs,
        "batch_size": batch_size,
        "learning_rate": learning_rate,
        "components": components,
        "hidden": list(model.hidden),
        "seed": seed,
        "n_pairs": n,
        "final_loss": losses[-1] if losses else None,
        "loss_curve": losses,
    }
    return model


@dataclass
class SeverityPosterior:
    """Sample-based posterior over theta with derived point summaries."""

    samples: np.ndarray
    motor_count: int
    level: float = 0.9
    seed: int | None = None
    sev_mean: float = field(init=False)
    p_fault: float = field(init=False)
    motor_map: int | None = field(init=False)
    interval: tuple[float, float] = field(init=False)

    def __post_init__(self):
        sev = self.samples[:, 0]
        self.sev_mean = float(sev.mean())
        self.p_fault = float((sev >= FAULT_SEV_THRESHOLD).mean())
        self.interval = self.credible_interval(self.level)
        if self.samples.shape[1] > 1:
            mot_mean = self.samples[:, 1:].mean(axis=0)
            top = int(np.argmax(mot_mean))
            self.motor_map = 0 if top == self.motor_count else top + 1
        else:
            self.motor_map = None

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def credible_interval(self, level: float) -> tuple[float, float]:
        if not (0.0 < level < 1.0):
            raise ConfigError(f"credible level must be in (0, 1), got {level}")
        tail = 100.0 * (1.0 - level) / 2.0
        lo, hi = np.percentile(self.samples[:, 0], [tail, 100.0 - tail])
        return float(lo), float(hi)


def posterior_query(
    model: PosteriorModel,
    x_obs,
    n_samples: int = 5000,
    seed: int = 0,
    level: float = 0.9,
) -> SeverityPosterior:
    """Sample the conditional mixture at a (standardized) observation."""
    samples = model.sample_posterior(x_obs, n_samples, seed=seed)
    return SeverityPosterior(
        samples=samples, motor_count=model.motor_count, level=level, seed=seed
    )


def calibration_report(
    model: PosteriorModel,
    sev_true,
    X,
    *,
    levels=(0.5, 0.9),
    n_samples: int = 2000,
    seed: int = 0,
) -> dict:
    """Empirical credible-interval coverage and severity MAE on held-out pairs."""
    sev_true = np.asarray(sev_true, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    seeds = np.random.SeedSequence(seed).spawn(X.shape[0])
    hits = {float(lv): 0 for lv in levels}
    abs_err = 0.0
    for i in range(X.shape[0]):
        post = posterior_query(model, X[i], n_samples=n_samples, seed=seeds[i])
        abs_err += abs(post.sev_mean - sev_true[i])
        for lv in levels:
            lo, hi = post.credible_interval(lv)
            hits[float(lv)] += int(lo <= sev_true[i] <= hi)
    n = X.shape[0]
    return {
        "coverage": {lv: hits[lv] / n for lv in hits},
        "mae": abs_err / n,
        "n": n,
    }
