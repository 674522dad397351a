"""Layout agent: clipped policy-gradient search over button placements.

Proposing a layout is a single action per episode, so training is a
contextual bandit.  Each batch samples layouts from the current policy,
evaluates them on the task environment and applies a few epochs of the
PPO clipped-surrogate update with an entropy bonus.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from ._validation import ConfigError, InputDomainError, NumericError, check_probabilities
from .policy import (
    Adam,
    LogitsPolicy,
    MLPPolicy,
    SGD,
    greedy_layout,
    head_entropy,
    log_softmax,
    sample_layout,
)
from .task import STATIC_LAYOUT, ButtonTaskEnv, EpisodeResult, normalized_coords

log = logging.getLogger(__name__)


def reference_layout(n_buttons: int) -> tuple[int, ...]:
    """Starting layout shown to the agent: the static row, widened to the middle row."""
    if n_buttons <= 3:
        return STATIC_LAYOUT[:n_buttons]
    return tuple(range(6, 6 + n_buttons)) if n_buttons <= 6 else tuple(range(n_buttons))


def episode_reward_3btn(result: EpisodeResult) -> float:
    """Negative summed per-button effort, minus any penalties."""
    return -float(np.sum(result.per_button_effort)) - result.penalty_total


def usage_frequency(counts: Sequence[float]) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise InputDomainError("press counts must be non-negative")
    total = counts.sum()
    return counts / total if total > 0 else np.zeros_like(counts)


def episode_reward_freq(effort: Sequence[float], prev_freq: Sequence[float]) -> float:
    """``exp(-sum_i pi_i * F_i)`` with last episode's usage frequencies ``pi``.

    An all-zero ``prev_freq`` (no previous episode) is replaced by the uniform
    distribution.
    """
    effort = np.asarray(effort, dtype=float)
    pi = np.asarray(prev_freq, dtype=float)
    if effort.shape != pi.shape or effort.ndim != 1:
        raise InputDomainError(f"effort {effort.shape} and frequencies {pi.shape} must match")
    pi = check_probabilities(pi, len(pi), allow_zero=True)
    if pi.sum() == 0:
        pi = np.full(len(pi), 1.0 / len(pi))
    if np.any(effort < 0):
        raise InputDomainError("efforts must be non-negative")
    return math.exp(-float(pi @ effort))


@dataclass
class TrainConfig:
    episodes: int = 38400
    batch: int = 128
    learning_rate: float = 0.01
    clip: float = 0.2
    entropy_weight: float = 0.01
    seed: int = 0
    parallel_envs: int = 1
    update_epochs: int = 4
    policy: str = "logits"
    value_rate: float = 0.1
    freq_effort_scale: float = 0.01
    entropy_anneal: bool = True
    common_seeds: bool = True
    advantage: str = "zscore"
    optimizer: str = "adam"

    def __post_init__(self):
        if self.episodes < 1 or self.batch < 1 or self.parallel_envs < 1 or self.update_epochs < 1:
            raise ConfigError("episode, batch, parallel_envs and update_epochs counts must be positive")
        if not 0 < self.clip < 1:
            raise ConfigError(f"clip must lie in (0, 1), got {self.clip!r}")
        if not self.learning_rate > 0 or self.entropy_weight < 0:
            raise ConfigError("learning_rate must be positive and entropy_weight non-negative")
        if self.advantage not in ("zscore", "rank"):
            raise ConfigError(f"unknown advantage kind {self.advantage!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.policy not in ("logits", "mlp"):
            raise ConfigError(f"unknown policy kind {self.policy!r}")
        if not 0 < self.value_rate <= 1 or not self.freq_effort_scale > 0:
            raise ConfigError("value_rate must lie in (0, 1] and freq_effort_scale be positive")


@dataclass
class TrainResult:
    policy: object
    curve: list[tuple[int, float, float, float]] = field(default_factory=list)
    reference_obs: np.ndarray | None = None
    value: float = 0.0

    @property
    def layout(self) -> tuple[int, ...]:
        return greedy_layout(self.policy, self.reference_obs)


def _observation(env: ButtonTaskEnv, cells, freq=None) -> np.ndarray:
    coords = normalized_coords(env.config.canvas, cells).ravel()
    if env.is_frequency_task:
        return np.concatenate([coords, freq])
    return coords


def _evaluate(env: ButtonTaskEnv, layouts, seeds, n_jobs: int) -> list[EpisodeResult]:
    layouts = [tuple(int(c) for c in row) for row in layouts]
    if n_jobs == 1:
        return [env.run(l, int(s)) for l, s in zip(layouts, seeds)]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(env.run)(l, int(s)) for l, s in zip(layouts, seeds))


def _frequency_reward(result: EpisodeResult, prev_freq: np.ndarray, scale: float) -> float:
    return episode_reward_freq(scale * result.per_button_effort, prev_freq) * math.exp(
        -scale * result.penalty_total
    )


def batch_advantages(rewards: np.ndarray, value: float, kind: str = "zscore") -> np.ndarray:
    """Standardised ``R - V`` or centred ranks in [-0.5, 0.5]; both ignore reward shifts."""
    rewards = np.asarray(rewards, dtype=float)
    if kind == "rank":
        if len(rewards) < 2:
            return np.zeros_like(rewards)
        ranks = rankdata(rewards)  # ties share their mean rank
        return (ranks - 1) / (len(rewards) - 1) - 0.5
    adv = rewards - value
    sd = adv.std()
    return (adv - adv.mean()) / sd if sd > 1e-12 else np.zeros_like(adv)


def ppo_gradients(policy, obs, cells, logp_old, adv, clip, entropy_weight):
    """Ascent direction of the clipped surrogate plus entropy bonus w.r.t. the logits."""
    b = len(adv)
    lp_all = log_softmax(policy.logits(obs))
    p = np.exp(lp_all)
    lp = np.take_along_axis(lp_all, cells[..., None], axis=-1)[..., 0].sum(axis=1)
    ratio = np.exp(lp - logp_old.sum(axis=1))
    clipped = ((adv > 0) & (ratio > 1 + clip)) | ((adv < 0) & (ratio < 1 - clip))
    coef = np.where(clipped, 0.0, ratio * adv) / b
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, cells[..., None], 1.0, axis=-1)
    dlogits = coef[:, None, None] * (onehot - p)
    ent = -(p * lp_all).sum(axis=-1, keepdims=True)
    dlogits += entropy_weight * (-p * (lp_all + ent)) / b
    return dlogits


def train(env: ButtonTaskEnv, config: TrainConfig | None = None, policy=None) -> TrainResult:
    """Optimise a layout policy against ``env``.

    The three-button task maximises the negative episode effort; the
    frequency task maximises the exponential frequency-weighted reward, with
    the weights taken from the same slot's previous episode.
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    n = env.n_buttons
    ref = reference_layout(n)
    uniform = np.full(n, 1.0 / n)
    ref_obs = _observation(env, ref, uniform)
    if policy is None:
        if config.policy == "mlp":
            policy = MLPPolicy(n, obs_dim=len(ref_obs), seed=config.seed)
        else:
            policy = LogitsPolicy(n)
    opt = (Adam if config.optimizer == "adam" else SGD)(policy.params, config.learning_rate)
    B = config.batch
    prev_cells = [ref] * B
    prev_freq = np.tile(uniform, (B, 1))
    value = 0.0
    result = TrainResult(policy, reference_obs=ref_obs)
    n_batches = max(1, config.episodes // B)

    for it in range(n_batches):
        obs = np.stack([_observation(env, prev_cells[k], prev_freq[k]) for k in range(B)])
        cells, logp_old = sample_layout(policy, obs, rng, size=B)
        # one episode seed per batch: every slot sees the same sequences and noise
        if config.common_seeds:
            seeds = np.full(B, rng.integers(0, 2**32 - 1))
        else:
            seeds = rng.integers(0, 2**32 - 1, size=B)
        episodes = _evaluate(env, cells, seeds, config.parallel_envs)
        if env.is_frequency_task:
            rewards = np.array(
                [_frequency_reward(r, prev_freq[k], config.freq_effort_scale) for k, r in enumerate(episodes)]
            )
            for k, r in enumerate(episodes):
                freq = usage_frequency(r.press_counts)
                prev_freq[k] = freq if freq.sum() > 0 else uniform
        else:
            rewards = np.array([episode_reward_3btn(r) for r in episodes])
        prev_cells = [tuple(int(c) for c in row) for row in cells]

        adv = batch_advantages(rewards, value, config.advantage)
        ent_w = config.entropy_weight
        if config.entropy_anneal:
            ent_w *= 1.0 - it / n_batches
        for _ in range(config.update_epochs):
            dlogits = ppo_gradients(policy, obs, cells, logp_old, adv, config.clip, ent_w)
            grads = policy.backward(obs, dlogits)
            if not all(np.all(np.isfinite(g)) for g in grads):
                raise NumericError(f"non-finite policy gradient at batch {it}")
            opt.ascend(grads)
        value += config.value_rate * (rewards.mean() - value)

        entropy = float(head_entropy(policy, ref_obs).mean())
        result.curve.append((it, float(rewards.mean()), float(rewards.max()), entropy))
        if it % 50 == 0:
            log.debug("batch %d mean %.4f best %.4f entropy %.3f", it, rewards.mean(), rewards.max(), entropy)
    result.value = value
    return result


class RLLayoutOptimizer(BaseEstimator):
    """Estimator wrapper around :func:`train`.

    ``fit(env)`` trains a policy and stores ``policy_``, ``curve_`` and the
    greedy ``layout_``; ``predict()`` returns the greedy layout.
    """

    def __init__(self, episodes=38400, batch_size=128, learning_rate=0.01, clip=0.2,
                 entropy_weight=0.01, update_epochs=4, policy="logits",
                 freq_effort_scale=0.01, advantage="zscore", optimizer="adam",
                 common_seeds=True, n_jobs=1, random_state=None):
        self.episodes = episodes
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.clip = clip
        self.entropy_weight = entropy_weight
        self.update_epochs = update_epochs
        self.policy = policy
        self.freq_effort_scale = freq_effort_scale
        self.advantage = advantage
        self.optimizer = optimizer
        self.common_seeds = common_seeds
        self.n_jobs = n_jobs
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        seed = self.random_state
        if not isinstance(seed, (int, np.integer)):
            seed = int(check_random_state(seed).randint(0, 2**31 - 1))
        return TrainConfig(
            episodes=self.episodes, batch=self.batch_size, learning_rate=self.learning_rate,
            clip=self.clip, entropy_weight=self.entropy_weight, seed=int(seed),
            parallel_envs=self.n_jobs, update_epochs=self.update_epochs, policy=self.policy,
            freq_effort_scale=self.freq_effort_scale, advantage=self.advantage,
            optimizer=self.optimizer, common_seeds=self.common_seeds,
        )

    def fit(self, env: ButtonTaskEnv, y=None):
        res = train(env, self.train_config())
        self.policy_ = res.policy
        self.curve_ = res.curve
        self.reference_obs_ = res.reference_obs
        self.layout_ = res.layout
        return self

    def predict(self, obs=None) -> tuple[int, ...]:
        check_is_fitted(self, "policy_")
        return greedy_layout(self.policy_, self.reference_obs_ if obs is None else obs)

    def score(self, env: ButtonTaskEnv, y=None) -> float:
        """Reward of the greedy layout on ``env`` (noise-free seed 0)."""
        return env.run(self.predict(), seed=0).reward
