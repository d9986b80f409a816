"""Distributional soft policy iteration: collection, replay, and the update loop."""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import nn
from .actor import Actor, ActionSample, DEMConfig, assign_env_betas, dem_weights, sample_action
from .critic import (
    CriticBatchTargets,
    CriticConfig,
    CriticEnsemble,
    c51_gradient,
    c51_project,
    critic_gradient,
    omega_estimate,
    soft_update,
    target_dists,
    target_mean,
    target_sample,
)
from .envs import Env, make_env, make_envs, reset_batch, step_batch
from .errors import ConfigError, InputError, NotReadyError


# -- replay -------------------------------------------------------------------------


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray
    truncated: np.ndarray

    def __len__(self):
        return self.r.shape[0]


class ReplayBuffer:
    """Fixed-capacity FIFO store of transitions, kept as parallel arrays."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ConfigError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.cursor = 0
        self.size = 0
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.truncated = np.zeros(capacity)

    def __len__(self):
        return self.size

    def push_batch(self, s, a, r, s_next, done, truncated) -> None:
        rows = [np.asarray(x, dtype=np.float64) for x in (s, a, r, s_next, done, truncated)]
        n = rows[2].shape[0]
        for field_name, arr in zip(("s", "a", "r", "s_next", "done", "truncated"), rows):
            finite = np.isfinite(arr.reshape(n, -1)).all(axis=1)
            if not finite.all():
                idx = int(np.flatnonzero(~finite)[0])
                raise InputError(f"non-finite {field_name} in transition {idx}")
        if n > self.capacity:
            rows = [x[-self.capacity :] for x in rows]
            n = self.capacity
        idx = (self.cursor + np.arange(n)) % self.capacity
        self.s[idx], self.a[idx], self.r[idx] = rows[0], rows[1], rows[2]
        self.s_next[idx], self.done[idx], self.truncated[idx] = rows[3], rows[4], rows[5]
        self.cursor = int((self.cursor + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size < batch_size or self.size == 0:
            raise NotReadyError(f"buffer holds {self.size} transitions, need {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(
            self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx],
            self.truncated[idx],
        )


# -- temperature ------------------------------------------------------------------------


@dataclass(frozen=True)
class AlphaState:
    log_alpha: float
    lr_alpha: float = 3e-4
    target_entropy: float = 0.0
    optimizer: str = "sgd"  # or "adam"
    beta1: float = 0.9
    beta2: float = 0.95
    m: float = 0.0
    v: float = 0.0
    t: int = 0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)


def alpha_update(state: AlphaState, logpis) -> AlphaState:
    """Descend ``alpha * mean(-logpi - H)`` with respect to ``log_alpha``.

    The gradient wrt ``log_alpha`` is ``alpha * mean(-logpi - H)``, so alpha
    shrinks when entropy sits above the target.  ``optimizer="adam"`` feeds
    the same gradient through bias-corrected moments.
    """
    logpis = np.asarray(logpis, dtype=np.float64)
    if logpis.size == 0:
        raise InputError("alpha update needs a non-empty batch")
    grad = state.alpha * float(np.mean(-logpis - state.target_entropy))
    if state.optimizer == "sgd":
        return replace(state, log_alpha=state.log_alpha - state.lr_alpha * grad, t=state.t + 1)
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    step = (m / (1 - state.beta1**t)) / (math.sqrt(v / (1 - state.beta2**t)) + 1e-8)
    return replace(state, log_alpha=state.log_alpha - state.lr_alpha * step, m=m, v=v, t=t)


# -- configuration ------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    batch_size: int = 1024
    num_envs: int = 64
    buffer_capacity: int = 200_000
    total_steps: int = 1000  # vectorized steps; env transitions = total_steps * num_envs
    learning_starts: int = 1000  # collected transitions before the first update
    updates_per_env_step: int = 1
    eval_interval: int = 0  # 0 disables periodic evaluation/checkpoints
    eval_episodes: int = 5
    seed: int = 0
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_alpha: float = 3e-4
    alpha_init: float = 0.01
    autotune_alpha: bool = True
    alpha_optimizer: str = "adam"
    target_entropy: float = 0.0
    weight_decay: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.95
    adam_eps: float = 1e-8
    hidden_widths: tuple[int, ...] = (256, 256)
    use_layer_norm: bool = False
    actor_kind: str = "dem"  # or "standard"
    freeze_actor: bool = False
    return_window: int = 20
    record_wallclock: bool = False
    c51_margin: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ConfigError("need 1 <= batch_size <= buffer_capacity")
        if self.num_envs < 1 or self.updates_per_env_step < 0 or self.total_steps < 0:
            raise ConfigError("num_envs >= 1, updates_per_env_step >= 0, total_steps >= 0")
        if self.actor_kind not in ("dem", "standard"):
            raise ConfigError(f"actor_kind must be 'dem' or 'standard', got {self.actor_kind!r}")
        if self.alpha_optimizer not in ("sgd", "adam"):
            raise ConfigError("alpha_optimizer must be 'sgd' or 'adam'")
        if self.autotune_alpha and not self.alpha_init > 0:
            raise ConfigError("alpha_init must be positive when autotuning")
        if self.alpha_init < 0:
            raise ConfigError("alpha_init must be non-negative")
        for name in ("lr_actor", "lr_critic", "lr_alpha"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")


METRIC_FIELDS = (
    "step",
    "episodic_return_mean",
    "alpha",
    "entropy_mean",
    "q_mean",
    "q_sigma_mean",
    "omega",
    "w_min",
    "w_max",
    "sps",
)


@dataclass
class StepMetrics:
    step: int
    episodic_return_mean: float = 0.0
    alpha: float = 0.0
    entropy_mean: float = 0.0
    q_mean: float = 0.0
    q_sigma_mean: float = 0.0
    omega: float = 0.0
    w_min: float = 1.0
    w_max: float = 1.0
    sps: float = 0.0

    def as_row(self) -> list:
        return [getattr(self, k) for k in METRIC_FIELDS]


# -- updates ----------------------------------------------------------------------------


def actor_update(
    actor: Actor,
    critics: CriticEnsemble,
    s,
    alpha: float,
    rng: np.random.Generator,
    lr: float,
    adam_kwargs: dict | None = None,
) -> ActionSample:
    """One AdamW step on ``mean(alpha * logpi(a|s) - min_j Q_j(s, a))``, a freshly drawn."""
    head, cache = actor.forward(s)
    sample = sample_action(head, 1.0, rng, actor.config)
    batch = sample.a.shape[0]
    _, dq_da = critics.min_q_and_action_grad(s, sample.a)
    grads = actor.head_backward(
        cache, sample, 1.0, np.full(batch, alpha / batch), -dq_da / batch
    )
    nn.adamw_step(actor.params, grads, lr, **(adam_kwargs or {}))
    return sample


class Trainer:
    """Owns the environments, networks, replay, and temperature for one run."""

    def __init__(
        self,
        env_name: str,
        env_config=None,
        train: TrainConfig | None = None,
        dem: DEMConfig | None = None,
        critic: CriticConfig | None = None,
    ):
        self.train_cfg = train = train or TrainConfig()
        dem = dem or DEMConfig()
        if train.actor_kind == "standard" and dem.dem_enabled:
            dem = replace(dem, dem_enabled=False)
        self.dem_cfg = dem
        self.critic_cfg = critic = critic or CriticConfig()
        self.env_name, self.env_config = env_name, env_config

        seeds = np.random.SeedSequence(train.seed).spawn(7)
        self.envs: list[Env] = make_envs(env_name, env_config, seeds[0], train.num_envs)
        spec = self.envs[0].spec
        self.env_spec = spec
        self.actor = Actor(
            spec.obs_dim, spec.action_dim, train.hidden_widths, train.use_layer_norm, dem,
            np.random.default_rng(seeds[1]),
        )
        lo, hi = self.envs[0].value_range(train.gamma)
        span = max(hi - lo, 1e-6)
        value_range = (lo - train.c51_margin * span, hi + train.c51_margin * span)
        self.critics = CriticEnsemble.build(
            spec.obs_dim, spec.action_dim, train.hidden_widths, train.use_layer_norm, critic,
            np.random.default_rng(seeds[2]), value_range,
        )
        self.buffer = ReplayBuffer(train.buffer_capacity, spec.obs_dim, spec.action_dim)
        self.collect_rng = np.random.default_rng(seeds[3])
        self.sample_rng = np.random.default_rng(seeds[4])
        self.update_rng = np.random.default_rng(seeds[5])
        if dem.dem_enabled:
            self.betas = assign_env_betas(
                train.num_envs, dem.beta_min, dem.beta_max, np.random.default_rng(seeds[6])
            )
        else:
            self.betas = np.ones(train.num_envs)
        self.alpha_state = AlphaState(
            math.log(train.alpha_init) if train.alpha_init > 0 else -math.inf,
            train.lr_alpha,
            train.target_entropy,
            train.alpha_optimizer,
            train.adam_beta1,
            train.adam_beta2,
        )
        self.adam_kwargs = dict(
            beta1=train.adam_beta1, beta2=train.adam_beta2,
            weight_decay=train.weight_decay, eps_opt=train.adam_eps,
        )
        self.obs = reset_batch(self.envs)
        self.episode_return = np.zeros(train.num_envs)
        self.finished_returns: deque[float] = deque(maxlen=train.return_window)
        self.step_count = 0
        self.update_count = 0
        self.phase = "idle"
        self._last = StepMetrics(0, alpha=self.alpha)

    @property
    def alpha(self) -> float:
        if self.train_cfg.autotune_alpha:
            return self.alpha_state.alpha
        return float(self.train_cfg.alpha_init)

    @property
    def ready(self) -> bool:
        cfg = self.train_cfg
        return self.buffer.size >= max(cfg.learning_starts, cfg.batch_size, 1)

    # -- phases --

    def collect(self) -> np.ndarray:
        """Sample with per-env betas, step every env, store transitions."""
        self.phase = "collect"
        head = self.actor.head(self.obs)
        sample = sample_action(head, self.betas, self.collect_rng, self.dem_cfg)
        weights = dem_weights(head.logits, self.dem_cfg.tau, self.betas, self.dem_cfg.dem_enabled)
        result = step_batch(self.envs, sample.a)
        self.buffer.push_batch(
            self.obs, sample.a, result.rewards, result.final_obs, result.dones, result.truncateds
        )
        self.episode_return += result.rewards
        for i in np.flatnonzero(result.dones | result.truncateds):
            self.finished_returns.append(float(self.episode_return[i]))
            self.episode_return[i] = 0.0
        self.obs = result.obs
        self.phase = "idle"
        return weights

    def update(self) -> dict:
        """Critic step on both twins, then actor, then alpha, then target tracking."""
        self.phase = "update"
        cfg = self.train_cfg
        batch = self.buffer.sample(cfg.batch_size, self.sample_rng)
        alpha = self.alpha
        head_next = self.actor.head(batch.s_next)
        nxt = sample_action(head_next, 1.0, self.update_rng, self.dem_cfg)
        # truncated transitions keep done = 0 and therefore bootstrap
        done = batch.done
        stats = {}
        if self.critics.kind == "continuous":
            dists = target_dists(self.critics, batch.s_next, nxt.a)
            args = (batch.r, cfg.gamma, done, self.critics, batch.s_next, nxt.a, nxt.log_prob, alpha)
            y_q = target_mean(*args, dists=dists)
            y_z = target_sample(*args, self.update_rng, dists=dists)
            diags = []
            for net in self.critics.online:
                fwd = net.forward(batch.s, batch.a)
                targets = CriticBatchTargets(y_q, y_z, omega_estimate(fwd[0].sigma))
                grads, diag = critic_gradient(net, batch.s, batch.a, targets, forward=fwd)
                nn.adamw_step(net.params, grads, cfg.lr_critic, **self.adam_kwargs)
                diags.append(diag)
            stats["q_mean"] = float(np.mean([d.q_mean for d in diags]))
            stats["q_sigma_mean"] = float(np.mean([d.sigma_mean for d in diags]))
            stats["omega"] = float(np.mean([d.omega for d in diags]))
        else:
            (p1, _), (p2, _) = (t.probs(batch.s_next, nxt.a) for t in self.critics.target)
            atoms = self.critics.target[0].atoms
            first = (p1 @ atoms) <= (p2 @ atoms)
            p_sel = np.where(first[:, None], p1, p2)
            r_eff = batch.r - (1.0 - done) * cfg.gamma * alpha * nxt.log_prob
            m = c51_project(r_eff, cfg.gamma, done, p_sel, atoms)
            qs = []
            for net in self.critics.online:
                grads, _, q = c51_gradient(net, batch.s, batch.a, m)
                nn.adamw_step(net.params, grads, cfg.lr_critic, **self.adam_kwargs)
                qs.append(q.mean())
            stats["q_mean"] = float(np.mean(qs))
            stats["q_sigma_mean"] = 0.0
            stats["omega"] = 0.0
        if cfg.freeze_actor:
            sample = sample_action(self.actor.head(batch.s), 1.0, self.update_rng, self.dem_cfg)
        else:
            sample = actor_update(
                self.actor, self.critics, batch.s, alpha, self.update_rng, cfg.lr_actor,
                self.adam_kwargs,
            )
        if cfg.autotune_alpha and not cfg.freeze_actor:
            self.alpha_state = alpha_update(self.alpha_state, sample.log_prob)
        soft_update(self.critics)
        stats["entropy_mean"] = float(np.mean(-sample.log_prob))
        self.update_count += 1
        self.phase = "idle"
        return stats

    def train_step(self) -> StepMetrics:
        t0 = time.perf_counter()
        weights = self.collect()
        stats = None
        if self.ready:
            for _ in range(self.train_cfg.updates_per_env_step):
                stats = self.update()
        self.step_count += 1
        m = StepMetrics(self.step_count)
        prev = self._last
        if stats is None:
            m.entropy_mean, m.q_mean = prev.entropy_mean, prev.q_mean
            m.q_sigma_mean, m.omega = prev.q_sigma_mean, prev.omega
        else:
            m.entropy_mean, m.q_mean = stats["entropy_mean"], stats["q_mean"]
            m.q_sigma_mean, m.omega = stats["q_sigma_mean"], stats["omega"]
        m.alpha = self.alpha
        m.episodic_return_mean = (
            float(np.mean(self.finished_returns)) if self.finished_returns else 0.0
        )
        m.w_min, m.w_max = float(weights.min()), float(weights.max())
        if self.train_cfg.record_wallclock:
            m.sps = self.train_cfg.num_envs / max(time.perf_counter() - t0, 1e-12)
        self._last = m
        return m

    def run(self, steps: int | None = None, callback: Callable[[StepMetrics], None] | None = None):
        steps = self.train_cfg.total_steps if steps is None else steps
        out = []
        for _ in range(steps):
            m = self.train_step()
            out.append(m)
            if callback:
                callback(m)
        return out

    def make_eval_env(self, seed) -> Env:
        return make_env(self.env_name, self.env_config, seed)


def train_step(world: Trainer) -> StepMetrics:
    return world.train_step()


# -- evaluation ----------------------------------------------------------------------------


def _policy_fn(actor) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(actor, "act_deterministic"):
        return actor.act_deterministic
    if callable(actor):
        return actor
    raise TypeError("actor must expose act_deterministic() or be callable")


def evaluate(actor, env_factory, episodes: int, seed: int = 0) -> tuple[float, list[float]]:
    """Deterministic rollouts (tanh of the mean, beta = 1) on freshly seeded envs.

    ``env_factory`` is an environment name or a callable ``seed -> Env``.
    Returns the mean and the per-episode undiscounted returns.
    """
    if episodes < 1:
        raise ConfigError("need at least one evaluation episode")
    if isinstance(env_factory, str):
        name = env_factory
        env_factory = lambda s: make_env(name, None, s)  # noqa: E731
    policy = _policy_fn(actor)
    seeds = np.random.SeedSequence(seed).spawn(episodes)
    envs = [env_factory(s) for s in seeds]
    obs = np.stack([e.reset() for e in envs])
    returns = np.zeros(episodes)
    live = np.ones(episodes, dtype=bool)
    while live.any():
        idx = np.flatnonzero(live)
        actions = np.atleast_2d(policy(obs[idx]))
        for j, i in enumerate(idx):
            o, r, d, tr = envs[i].step(actions[j])
            returns[i] += r
            obs[i] = o
            if d or tr:
                live[i] = False
    return float(returns.mean()), returns.tolist()


def record_weights(actor: Actor, env: Env, steps: int, tau: float | None = None) -> np.ndarray:
    """DEM weights (beta = 1) along a deterministic rollout, shape ``(steps, N)``.

    The env auto-resets if an episode ends before ``steps``.
    """
    rows = []
    obs = env.reset()
    for _ in range(steps):
        rows.append(actor.weights(obs[None, :], 1.0, tau)[0])
        obs, _, done, trunc = env.step(actor.act_deterministic(obs[None, :])[0])
        if done or trunc:
            obs = env.reset()
    return np.array(rows)
