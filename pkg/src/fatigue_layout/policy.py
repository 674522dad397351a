"""Factorised categorical layout policies: one softmax head per button."""

from __future__ import annotations

import numpy as np

from ._validation import N_CELLS, InputDomainError


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class LogitsPolicy:
    """Free logits table of shape ``(n_heads, n_cells)``; the observation is ignored."""

    kind = "logits"

    def __init__(self, n_heads: int, n_cells: int = N_CELLS, logits=None):
        self.n_heads = n_heads
        self.n_cells = n_cells
        self.table = np.zeros((n_heads, n_cells)) if logits is None else np.array(logits, dtype=float)
        if self.table.shape != (n_heads, n_cells):
            raise InputDomainError(f"logits must have shape {(n_heads, n_cells)}")

    @property
    def params(self) -> list[np.ndarray]:
        return [self.table]

    def logits(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        return np.broadcast_to(self.table, (obs.shape[0], self.n_heads, self.n_cells)).copy()

    def backward(self, obs: np.ndarray, dlogits: np.ndarray) -> list[np.ndarray]:
        return [dlogits.sum(axis=0)]


def _leaky(x, slope):
    return np.where(x > 0, x, slope * x)


class MLPPolicy:
    """Small actor network over the layout observation.

    Layer-normalised input, a 64-wide LeakyReLU projection, two LeakyReLU
    hidden layers of 128 and a linear output with one logit block per head.
    Gradients are derived by hand for this fixed shape.
    """

    kind = "mlp"

    def __init__(self, n_heads: int, obs_dim: int, n_cells: int = N_CELLS, seed: int = 0,
                 latent: int = 64, hidden: int = 128, slope: float = 0.01):
        self.n_heads = n_heads
        self.n_cells = n_cells
        self.obs_dim = obs_dim
        self.slope = slope
        rng = np.random.default_rng(seed)
        sizes = [obs_dim, latent, hidden, hidden, n_heads * n_cells]
        self.weights = []
        self.biases = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(2.0 / a) if i < len(sizes) - 2 else 0.01 / np.sqrt(a)
            self.weights.append(rng.standard_normal((a, b)) * scale)
            self.biases.append(np.zeros(b))

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def _forward(self, obs):
        x = np.atleast_2d(np.asarray(obs, dtype=float))
        if x.shape[1] != self.obs_dim:
            raise InputDomainError(f"observation must have {self.obs_dim} features, got {x.shape[1]}")
        mu = x.mean(axis=1, keepdims=True)
        sd = np.sqrt(x.var(axis=1, keepdims=True) + 1e-5)
        h = (x - mu) / sd
        cache = [(x, mu, sd)]
        acts = [h]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            if i < len(self.weights) - 1:
                cache.append(z)
                z = _leaky(z, self.slope)
            acts.append(z)
        return acts, cache

    def logits(self, obs: np.ndarray) -> np.ndarray:
        acts, _ = self._forward(obs)
        return acts[-1].reshape(-1, self.n_heads, self.n_cells)

    def backward(self, obs: np.ndarray, dlogits: np.ndarray) -> list[np.ndarray]:
        acts, cache = self._forward(obs)
        g = dlogits.reshape(dlogits.shape[0], -1)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ g
            grads_b[i] = g.sum(axis=0)
            if i > 0:
                g = g @ self.weights[i].T
                g = g * np.where(cache[i] > 0, 1.0, self.slope)
        return [p for pair in zip(grads_w, grads_b) for p in pair]


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def ascend(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1**self.t)
            vhat = v / (1 - self.b2**self.t)
            p += self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    """Plain gradient ascent; step size proportional to the gradient itself."""

    def __init__(self, params: list[np.ndarray], lr: float):
        self.params = params
        self.lr = lr

    def ascend(self, grads: list[np.ndarray]) -> None:
        for p, g in zip(self.params, grads):
            p += self.lr * g


def sample_layout(policy, obs, rng: np.random.Generator, size: int | None = None):
    """Draw one cell per head.  Duplicate cells are allowed.

    Returns ``(cells, logp)`` where ``logp`` holds the per-head log-probability
    of the drawn cells.  With ``size`` the leading axis is the batch.
    """
    n = 1 if size is None else size
    obs = np.atleast_2d(obs)
    if obs.shape[0] == 1 and n > 1:
        obs = np.repeat(obs, n, axis=0)
    logp_all = log_softmax(policy.logits(obs))
    cdf = np.cumsum(np.exp(logp_all), axis=-1)
    u = rng.random((n, policy.n_heads, 1))
    cells = np.minimum((u > cdf).sum(axis=-1), policy.n_cells - 1)
    logp = np.take_along_axis(logp_all, cells[..., None], axis=-1)[..., 0]
    if size is None:
        return tuple(int(c) for c in cells[0]), logp[0]
    return cells, logp


def greedy_layout(policy, obs) -> tuple[int, ...]:
    """Per-head argmax; ties resolve to the lowest cell index."""
    z = policy.logits(np.atleast_2d(obs))[0]
    return tuple(int(c) for c in np.argmax(z, axis=-1))


def head_entropy(policy, obs) -> np.ndarray:
    lp = log_softmax(policy.logits(np.atleast_2d(obs)))
    return -(np.exp(lp) * lp).sum(axis=-1)


def overlap_probability(probs: np.ndarray) -> float:
    """Probability that a factorised draw puts two buttons in the same cell."""
    probs = np.asarray(probs, dtype=float)
    n, c = probs.shape
    if n > 5:
        raise InputDomainError("exact overlap probability supports at most 5 heads")
    distinct = _distinct_mass(probs, 0, frozenset())
    return float(1.0 - distinct)


def _distinct_mass(probs, i, used):
    if i == len(probs):
        return 1.0
    total = 0.0
    for cell in range(probs.shape[1]):
        if cell not in used and probs[i, cell] > 0:
            total += probs[i, cell] * _distinct_mass(probs, i + 1, used | {cell})
    return total
