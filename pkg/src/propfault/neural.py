"""Minimal dense-network toolkit: tanh MLP forward/backward and Adam.

Kept in plain numpy with hand-written gradients so the training code stays
dependency-free and the gradients can be validated against finite differences.
"""

from __future__ import annotations

import numpy as np


def dense_init(rng: np.random.Generator, n_in: int, n_out: int, scale: float = 1.0):
    w = rng.normal(0.0, scale * np.sqrt(2.0 / (n_in + n_out)), size=(n_in, n_out))
    return [w, np.zeros(n_out)]


def mlp_init(rng: np.random.Generator, sizes) -> list:
    return [dense_init(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]


def mlp_forward(layers, x):
    """tanh at every layer; returns (output, activations incl. input)."""
    acts = [np.asarray(x, dtype=float)]
    for w, b in layers:
        acts.append(np.tanh(acts[-1] @ w + b))
    return acts[-1], acts


def mlp_backward(layers, acts, grad_out):
    """Backprop through the tanh stack; returns (per-layer grads, grad wrt input)."""
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        a_out = acts[i + 1]
        dz = g * (1.0 - a_out**2)
        grads[i] = [acts[i].T @ dz, dz.sum(axis=0)]
        g = dz @ layers[i][0].T
    return grads, g


def flatten_params(layers) -> list[np.ndarray]:
    return [arr for layer in layers for arr in layer]


class Adam:
    """First-order optimizer with adaptive per-parameter step sizes."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
