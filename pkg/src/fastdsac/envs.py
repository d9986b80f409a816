"""Seedable synthetic environments with analytic value oracles.

Registry names: ``redundant_reacher``, ``chain_mdp``, ``pendulum``.  Every
action space is ``[-1, 1]^N``.  Episodes end either by termination
(``done``) or by the time limit (``truncated``); the two are kept apart so
the learner can bootstrap through time limits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_dim: int
    max_episode_steps: int
    reward_range: tuple[float, float]
    relevant_dims: tuple[int, ...] = ()


@dataclass(frozen=True)
class RedundantReacherConfig:
    n_total: int = 16
    n_relevant: int = 4
    target_bound: float = 0.6
    grid_points: int = 7
    noise_std: float = 0.0
    max_episode_steps: int = 32

    def __post_init__(self):
        if not 1 <= self.n_relevant <= self.n_total:
            raise ConfigError("need 1 <= n_relevant <= n_total")
        if self.grid_points < 1:
            raise ConfigError("grid_points must be >= 1")


@dataclass(frozen=True)
class ChainMDPConfig:
    length: int = 5
    r_const: float = 1.0
    gamma_ref: float = 0.9
    action_dim: int = 1

    def __post_init__(self):
        if self.length < 1:
            raise ConfigError("chain length must be >= 1")


@dataclass(frozen=True)
class PendulumConfig:
    mass: float = 1.0
    length: float = 1.0
    dt: float = 0.05
    torque_scale: float = 2.0
    gravity: float = 10.0
    max_speed: float = 8.0
    max_episode_steps: int = 200


class StepResult(NamedTuple):
    obs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    truncateds: np.ndarray
    final_obs: np.ndarray  # observation that ended the step, before any auto-reset


class Env:
    spec: EnvSpec

    def __init__(self, seed: int | np.random.SeedSequence | None):
        self.rng = np.random.default_rng(seed)
        self.t = 0

    def reset(self) -> np.ndarray:
        self.t = 0
        return self._reset()

    def step(self, action) -> tuple[np.ndarray, float, bool, bool]:
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (self.spec.action_dim,):
            raise ConfigError(f"{self.spec.name}: expected {self.spec.action_dim} action dims")
        action = np.clip(action, -1.0, 1.0)
        self.t += 1
        obs, reward, done = self._step(action)
        truncated = (not done) and self.t >= self.spec.max_episode_steps
        return obs, float(reward), bool(done), bool(truncated)

    def value_range(self, gamma: float) -> tuple[float, float]:
        """Bounds on discounted returns, used to place C51 atoms."""
        lo, hi = self.spec.reward_range
        horizon = self.spec.max_episode_steps
        scale = (1.0 - gamma**horizon) / (1.0 - gamma) if gamma < 1 else float(horizon)
        return min(lo * scale, 0.0), max(hi * scale, 0.0)

    def _reset(self) -> np.ndarray:
        raise NotImplementedError

    def _step(self, action):
        raise NotImplementedError


class RedundantReacher(Env):
    """Match the first ``n_relevant`` action coordinates to a per-episode target.

    Observation: ``[target (n_relevant), phase t/T]``.  Reward is
    ``-||a_relevant - target||^2``; the remaining coordinates affect neither
    reward nor dynamics.
    """

    def __init__(self, config: RedundantReacherConfig, seed=None):
        super().__init__(seed)
        self.config = config
        c = config
        worst = c.n_relevant * (1.0 + c.target_bound) ** 2
        self.spec = EnvSpec(
            "redundant_reacher",
            c.n_relevant + 1,
            c.n_total,
            c.max_episode_steps,
            (-worst, 0.0),
            tuple(range(c.n_relevant)),
        )
        self.grid = np.linspace(-c.target_bound, c.target_bound, c.grid_points)
        self.target = np.zeros(c.n_relevant)

    def _obs(self) -> np.ndarray:
        obs = np.append(self.target, self.t / self.spec.max_episode_steps)
        if self.config.noise_std > 0:
            obs[:-1] += self.config.noise_std * self.rng.standard_normal(self.config.n_relevant)
        return obs

    def _reset(self):
        self.target = self.rng.choice(self.grid, size=self.config.n_relevant)
        return self._obs()

    def _step(self, action):
        diff = action[: self.config.n_relevant] - self.target
        return self._obs(), -float(diff @ diff), False


class ChainMDP(Env):
    """Deterministic walk 0 -> 1 -> ... -> L; each step pays ``r_const``.

    Actions have no effect.  The step leaving state ``L - 1`` terminates.
    Observations are one-hot over the ``L`` non-terminal states (all zeros at
    the absorbing end).
    """

    def __init__(self, config: ChainMDPConfig, seed=None):
        super().__init__(seed)
        self.config = config
        L = config.length
        self.spec = EnvSpec("chain_mdp", L, config.action_dim, L + 1, (config.r_const,) * 2)
        self.state = 0

    def _obs(self):
        obs = np.zeros(self.config.length)
        if self.state < self.config.length:
            obs[self.state] = 1.0
        return obs

    def _reset(self):
        self.state = 0
        return self._obs()

    def _step(self, action):
        self.state += 1
        done = self.state >= self.config.length
        return self._obs(), self.config.r_const, done

    def value_range(self, gamma: float):
        q = chain_mdp_analytic_q(self.config, gamma)
        return float(q.min()), float(q.max())


class Pendulum(Env):
    """Torque-limited swing-up; observation ``(cos th, sin th, th_dot)``."""

    def __init__(self, config: PendulumConfig, seed=None):
        super().__init__(seed)
        self.config = config
        c = config
        worst = np.pi**2 + 0.1 * c.max_speed**2 + 0.001 * c.torque_scale**2
        self.spec = EnvSpec("pendulum", 3, 1, c.max_episode_steps, (-worst, 0.0))
        self.theta = 0.0
        self.theta_dot = 0.0

    def _obs(self):
        return np.array([np.cos(self.theta), np.sin(self.theta), self.theta_dot])

    def _reset(self):
        self.theta = self.rng.uniform(-np.pi, np.pi)
        self.theta_dot = self.rng.uniform(-1.0, 1.0)
        return self._obs()

    def _step(self, action):
        c = self.config
        u = c.torque_scale * float(action[0])
        th = _angle_normalize(self.theta)
        reward = -(th * th + 0.1 * self.theta_dot**2 + 0.001 * u * u)
        accel = 3.0 * c.gravity / (2.0 * c.length) * np.sin(self.theta) + 3.0 / (
            c.mass * c.length**2
        ) * u
        self.theta_dot = float(np.clip(self.theta_dot + accel * c.dt, -c.max_speed, c.max_speed))
        self.theta = self.theta + self.theta_dot * c.dt
        return self._obs(), reward, False


def _angle_normalize(x: float) -> float:
    return ((x + np.pi) % (2.0 * np.pi)) - np.pi


_REGISTRY = {
    "redundant_reacher": (RedundantReacher, RedundantReacherConfig),
    "chain_mdp": (ChainMDP, ChainMDPConfig),
    "pendulum": (Pendulum, PendulumConfig),
}

ENV_NAMES = tuple(_REGISTRY)


def env_config(name: str, config=None):
    if name not in _REGISTRY:
        raise ConfigError(f"unknown environment {name!r}; known: {', '.join(ENV_NAMES)}")
    cfg_cls = _REGISTRY[name][1]
    if config is None:
        return cfg_cls()
    if isinstance(config, cfg_cls):
        return config
    if isinstance(config, dict):
        known = {f.name for f in fields(cfg_cls)}
        unknown = set(config) - known
        if unknown:
            raise ConfigError(f"unknown {name} config keys: {sorted(unknown)}")
        return cfg_cls(**config)
    raise ConfigError(f"bad config for {name}: {config!r}")


def make_env(name: str, config=None, seed=None) -> Env:
    cls, _ = _REGISTRY.get(name, (None, None))
    if cls is None:
        raise ConfigError(f"unknown environment {name!r}; known: {', '.join(ENV_NAMES)}")
    return cls(env_config(name, config), seed)


def make_envs(name: str, config, seed: int, count: int) -> list[Env]:
    """``count`` independently seeded handles, each already reset."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(count)
    envs = [make_env(name, config, child) for child in children]
    return envs


def config_dict(config) -> dict:
    return asdict(config)


def reset_batch(handles: list[Env]) -> np.ndarray:
    return np.stack([h.reset() for h in handles])


def step_batch(handles: list[Env], actions) -> StepResult:
    """Step each handle; finished handles auto-reset and expose ``final_obs``."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.ndim != 2 or actions.shape[0] != len(handles):
        raise ConfigError(f"expected actions of shape ({len(handles)}, N), got {actions.shape}")
    obs, final, rewards, dones, truncs = [], [], [], [], []
    for handle, action in zip(handles, actions):
        o, r, d, tr = handle.step(action)
        final.append(o)
        if d or tr:
            o = handle.reset()
        obs.append(o)
        rewards.append(r)
        dones.append(d)
        truncs.append(tr)
    return StepResult(
        np.stack(obs), np.array(rewards), np.array(dones), np.array(truncs), np.stack(final)
    )


# -- oracles ----------------------------------------------------------------------


def chain_mdp_analytic_q(config: ChainMDPConfig, gamma: float | None = None) -> np.ndarray:
    """Exact Q for every non-terminal state: ``sum_{k < L - s} gamma^k r``.

    Actions do not enter the chain, so this table holds for every policy.
    """
    gamma = config.gamma_ref if gamma is None else gamma
    remaining = config.length - np.arange(config.length)
    if gamma == 1.0:
        return config.r_const * remaining.astype(np.float64)
    return config.r_const * (1.0 - gamma**remaining) / (1.0 - gamma)


@dataclass
class RelevantDimReport:
    relevant_mean: float
    irrelevant_mean: float
    ratio: float
    per_dim: np.ndarray = field(repr=False, default=None)


def relevant_dim_report(weights_trace, relevant_dims) -> RelevantDimReport:
    """Mean exploration weight on relevant vs irrelevant coordinates.

    ``relevant_dims`` may be a config with ``n_relevant``, an EnvSpec, or an
    explicit index list.
    """
    trace = np.atleast_2d(np.asarray(weights_trace, dtype=np.float64))
    if trace.size == 0:
        raise ConfigError("empty weights trace")
    if isinstance(relevant_dims, RedundantReacherConfig):
        idx = np.arange(relevant_dims.n_relevant)
    elif isinstance(relevant_dims, EnvSpec):
        idx = np.asarray(relevant_dims.relevant_dims, dtype=int)
    else:
        idx = np.asarray(relevant_dims, dtype=int)
    mask = np.zeros(trace.shape[1], dtype=bool)
    mask[idx] = True
    per_dim = trace.mean(axis=0)
    rel = float(per_dim[mask].mean())
    irr = float(per_dim[~mask].mean()) if (~mask).any() else float("nan")
    return RelevantDimReport(rel, irr, irr / rel, per_dim)
