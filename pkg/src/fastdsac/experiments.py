"""Desk-scale experiment presets and runners shared by scripts/ and the acceptance suite.

Each runner trains from scratch, evaluates with deterministic actions, and
returns a small result record.  Presets shrink the networks and batch so a
run finishes in minutes on one CPU core.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, build_config
from .envs import chain_mdp_analytic_q, relevant_dim_report
from .trainer import Trainer, evaluate, record_weights

# learning rates are raised from 3e-4 to 1e-3 for the 1e5-step control budget
PRESETS = {
    "pendulum": dict(
        gamma=0.99, batch_size=256, num_envs=4, buffer_capacity=100_000, learning_starts=1000,
        hidden_widths=[64, 64], lr_actor=1e-3, lr_critic=1e-3, lr_alpha=1e-3, alpha_init=0.01,
    ),
    "redundant_reacher": dict(
        gamma=0.99, batch_size=256, num_envs=8, buffer_capacity=100_000, learning_starts=1000,
        hidden_widths=[64, 64], lr_actor=1e-3, lr_critic=1e-3, lr_alpha=1e-3, alpha_init=0.01,
    ),
    "chain_mdp": dict(
        gamma=0.9, batch_size=64, num_envs=4, buffer_capacity=2000, learning_starts=64,
        hidden_widths=[32, 32], lr_critic=3e-4, freeze_actor=True, autotune_alpha=False,
        alpha_init=0.0,
    ),
}

EVAL_SEED = 12345


def desk_config(env: str, actor_kind: str = "dem", seed: int = 0, overrides=()) -> RunConfig:
    train = dict(PRESETS[env], actor_kind=actor_kind, seed=seed)
    raw = {"env": {"name": env}, "train": train, "dem": {"tau": 1.0, "log_std_max": 1.0}}
    return build_config(raw, overrides, environ={})


def make_trainer(cfg: RunConfig) -> Trainer:
    return Trainer(cfg.env, cfg.env_params, cfg.train, cfg.dem, cfg.critic)


def _train(trainer: Trainer, env_steps: int, log=None):
    steps = env_steps // trainer.train_cfg.num_envs
    entropy = np.empty(steps)
    every = max(steps // 10, 1)
    for i in range(steps):
        m = trainer.train_step()
        entropy[i] = m.entropy_mean
        if log and (i + 1) % every == 0:
            log(f"  step {i + 1}/{steps} return={m.episodic_return_mean:.3f} "
                f"alpha={m.alpha:.4f} entropy={m.entropy_mean:.3f}")
    return entropy


# -- control sanity ---------------------------------------------------------------------


@dataclass
class ControlResult:
    actor_kind: str
    seed: int
    eval_return: float
    entropy_running_mean: float
    env_steps: int
    seconds: float


def run_control(
    actor_kind: str, seed: int, env_steps: int = 100_000, eval_episodes: int = 10,
    entropy_window: int = 500, log=None,
) -> ControlResult:
    """Pendulum swing-up; reports final deterministic return and mean -log pi."""
    t0 = time.perf_counter()
    tr = make_trainer(desk_config("pendulum", actor_kind, seed))
    entropy = _train(tr, env_steps, log)
    mean, _ = evaluate(tr.actor, tr.make_eval_env, eval_episodes, EVAL_SEED)
    return ControlResult(
        actor_kind, seed, mean, float(np.mean(entropy[-entropy_window:])), env_steps,
        time.perf_counter() - t0,
    )


# -- entropy sink ----------------------------------------------------------------------------


@dataclass
class SinkResult:
    seed: int
    ratio: float
    eval_dem: float
    eval_standard: float
    per_dim: np.ndarray = field(repr=False)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.ratio >= 1.5 and self.eval_dem >= self.eval_standard


def run_entropy_sink(
    seed: int, env_steps: int = 50_000, eval_episodes: int = 10, tau: float | None = None,
    log=None,
) -> SinkResult:
    """Train modulated and standard actors identically on the redundant reacher.

    The weight ratio is read from one deterministic evaluation episode of the
    modulated actor.
    """
    t0 = time.perf_counter()
    results = {}
    for kind in ("dem", "standard"):
        overrides = [f"dem.tau={tau}"] if tau is not None else []
        cfg = desk_config("redundant_reacher", kind, seed, overrides)
        tr = make_trainer(cfg)
        _train(tr, env_steps, log)
        mean, _ = evaluate(tr.actor, tr.make_eval_env, eval_episodes, EVAL_SEED)
        results[kind] = (mean, tr)
    tr = results["dem"][1]
    episode = tr.env_spec.max_episode_steps
    trace = record_weights(tr.actor, tr.make_eval_env(EVAL_SEED), episode)
    report = relevant_dim_report(trace, tr.env_spec)
    return SinkResult(
        seed, report.ratio, results["dem"][0], results["standard"][0], report.per_dim,
        time.perf_counter() - t0,
    )


# -- value oracle -------------------------------------------------------------------------------


@dataclass
class ChainResult:
    critic_kind: str
    q: np.ndarray
    q_analytic: np.ndarray
    sigma: np.ndarray
    sigma_floor: float
    atom_spacing: float | None
    updates: int

    @property
    def max_rel_error(self) -> float:
        return float(np.max(np.abs(self.q - self.q_analytic) / self.q_analytic))

    @property
    def max_abs_gap(self) -> float:
        return float(np.max(np.abs(self.q - self.q_analytic)))


def run_chain_oracle(
    critic_kind: str = "continuous", updates: int = 10_000, n_atoms: int = 5, seed: int = 0
) -> ChainResult:
    """Fixed policy, alpha = 0: fit the critic on the 5-state chain and compare to analytic Q."""
    overrides = [f"critic.kind={critic_kind}", f"critic.n_atoms={n_atoms}"]
    cfg = desk_config("chain_mdp", "dem", seed, overrides)
    tr = make_trainer(cfg)
    while tr.update_count < updates:
        tr.train_step()
    env_cfg = cfg.env_config()
    states = np.eye(env_cfg.length)
    actions = tr.actor.act_deterministic(states)
    dist = tr.critics.online[0].forward(states, actions)[0]
    spacing = None
    if critic_kind == "c51":
        atoms = tr.critics.online[0].atoms
        spacing = float(atoms[1] - atoms[0])
    return ChainResult(
        critic_kind, dist.q, chain_mdp_analytic_q(env_cfg, cfg.train.gamma), dist.sigma,
        cfg.critic.sigma_floor, spacing, tr.update_count,
    )
