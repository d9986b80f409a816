"""Squashed-Gaussian policy with dimension-wise entropy modulation (DEM).

The per-dimension standard deviation is ``w_i * exp(sigma_hat_i)`` where the
weights ``w = N * softmax(logits * beta / tau)`` average exactly one, so raising
exploration on one dimension forces it down elsewhere.  ``beta`` is the
per-environment heterogeneity factor; training and evaluation use ``beta = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, InputError

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_2 = float(np.log(2.0))


@dataclass(frozen=True)
class DEMConfig:
    tau: float = 1.0
    log_std_min: float = -10.0
    log_std_max: float = 1.0
    beta_min: float = 0.01
    beta_max: float = 2.0
    dem_enabled: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"DEM temperature must be positive, got {self.tau}")
        if not self.log_std_min < self.log_std_max:
            raise ConfigError("log_std_min must be below log_std_max")
        if not 0 < self.beta_min <= self.beta_max:
            raise ConfigError("need 0 < beta_min <= beta_max")


@dataclass
class PolicyHead:
    """Actor outputs for a batch (or single state); arrays end in the action axis."""

    mu: np.ndarray
    sigma_hat: np.ndarray  # clamped log-std
    logits: np.ndarray

    @property
    def action_dim(self) -> int:
        return self.mu.shape[-1]


@dataclass
class ActionSample:
    u: np.ndarray
    a: np.ndarray
    log_prob: np.ndarray
    xi: np.ndarray  # standard-normal noise that produced u


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _beta_array(beta, logits: np.ndarray):
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim == 1 and logits.ndim == 2:
        beta = beta[:, None]
    return beta


def dem_weights(logits, tau: float, beta=1.0, dem_enabled: bool = True) -> np.ndarray:
    """``N * softmax(logits * beta / tau)`` along the last axis."""
    if not tau > 0:
        raise ConfigError(f"DEM temperature must be positive, got {tau}")
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise InputError("non-finite DEM logits")
    if not dem_enabled:
        return np.ones_like(logits)
    beta = _beta_array(beta, logits)
    if np.any(beta <= 0):
        raise ConfigError("beta must be positive")
    return logits.shape[-1] * _softmax(logits * beta / tau)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def modulated_std(sigma_hat, w) -> np.ndarray:
    return np.asarray(w) * np.exp(np.asarray(sigma_hat))


def head_std(head: PolicyHead, beta, config: DEMConfig) -> np.ndarray:
    w = dem_weights(head.logits, config.tau, beta, config.dem_enabled)
    return modulated_std(head.sigma_hat, w)


def tanh_log_det(u: np.ndarray) -> np.ndarray:
    """``log(1 - tanh(u)^2)`` in the overflow-free form."""
    return 2.0 * (LOG_2 - u - softplus(-2.0 * u))


def log_prob(head: PolicyHead, beta, u, config: DEMConfig) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    sigma = head_std(head, beta, config)
    z = (u - head.mu) / sigma
    per_dim = -0.5 * z * z - np.log(sigma) - 0.5 * LOG_2PI - tanh_log_det(u)
    return per_dim.sum(axis=-1)


def sample_action(
    head: PolicyHead, beta, rng: np.random.Generator, config: DEMConfig
) -> ActionSample:
    xi = rng.standard_normal(head.mu.shape)
    return sample_from_noise(head, beta, xi, config)


def sample_from_noise(head: PolicyHead, beta, xi, config: DEMConfig) -> ActionSample:
    sigma = head_std(head, beta, config)
    u = head.mu + sigma * xi
    return ActionSample(u=u, a=np.tanh(u), log_prob=log_prob(head, beta, u, config), xi=xi)


def deterministic_action(head: PolicyHead) -> np.ndarray:
    return np.tanh(head.mu)


def assign_env_betas(
    num_envs: int, beta_min: float, beta_max: float, rng: np.random.Generator
) -> np.ndarray:
    if num_envs < 1:
        raise ConfigError("need at least one environment")
    return rng.uniform(beta_min, beta_max, size=num_envs)


# -- network-backed actor ------------------------------------------------------


@dataclass
class ActorCache:
    net: nn.ForwardCache
    raw_log_std: np.ndarray
    head: PolicyHead


class Actor:
    """Shared ReLU trunk whose final affine layer emits ``[mu | sigma_hat | logits]``."""

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        hidden_widths=(256, 256),
        use_layer_norm: bool = False,
        config: DEMConfig | None = None,
        rng: np.random.Generator | None = None,
        params: nn.ParamStore | None = None,
    ):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.config = config or DEMConfig()
        self.spec = nn.NetworkSpec(obs_dim, tuple(hidden_widths), 3 * action_dim, use_layer_norm)
        if params is None:
            params = nn.init_params(self.spec, rng or np.random.default_rng(0))
        nn.check_params(self.spec, params)
        self.params = params

    @property
    def dem_enabled(self) -> bool:
        return self.config.dem_enabled

    def forward(self, obs) -> tuple[PolicyHead, ActorCache]:
        out, cache = nn.forward_cached(self.spec, self.params, obs)
        n = self.action_dim
        raw = out[:, n : 2 * n]
        head = PolicyHead(
            mu=out[:, :n],
            sigma_hat=np.clip(raw, self.config.log_std_min, self.config.log_std_max),
            logits=out[:, 2 * n :],
        )
        return head, ActorCache(cache, raw, head)

    def head(self, obs) -> PolicyHead:
        return self.forward(obs)[0]

    def weights(self, obs, beta=1.0, tau: float | None = None) -> np.ndarray:
        head = self.head(obs)
        return dem_weights(
            head.logits, tau if tau is not None else self.config.tau, beta, self.config.dem_enabled
        )

    def act(self, obs, beta, rng: np.random.Generator) -> ActionSample:
        return sample_action(self.head(obs), beta, rng, self.config)

    def act_deterministic(self, obs) -> np.ndarray:
        return deterministic_action(self.head(obs))

    def head_backward(
        self, cache: ActorCache, sample: ActionSample, beta, g_logp, g_a
    ) -> nn.Gradients:
        """Parameter gradients of a loss given dL/dlog_prob (B,) and dL/da (B, N).

        Differentiates through the reparameterized draw ``u = mu + sigma * xi``
        with ``xi`` held fixed, the tanh squash, the log-std clamp and the DEM
        softmax.
        """
        head, cfg = cache.head, self.config
        g_logp = np.asarray(g_logp, dtype=np.float64)[:, None]
        sigma = head_std(head, beta, cfg)
        a = sample.a
        g_u = g_logp * (2.0 * a) + g_a * (1.0 - a * a)
        g_sigma = -g_logp / sigma + g_u * sample.xi
        g_log_sigma = g_sigma * sigma
        inside = (cache.raw_log_std > cfg.log_std_min) & (cache.raw_log_std < cfg.log_std_max)
        g_raw = g_log_sigma * inside
        if cfg.dem_enabled:
            beta_arr = _beta_array(beta, head.logits)
            p = _softmax(head.logits * beta_arr / cfg.tau)
            g_logits = (beta_arr / cfg.tau) * (
                g_log_sigma - p * g_log_sigma.sum(axis=-1, keepdims=True)
            )
        else:
            g_logits = np.zeros_like(head.logits)
        upstream = np.concatenate([g_u, g_raw, g_logits], axis=1)
        return nn.backward_cached(self.spec, self.params, cache.net, upstream)[0]
