"""Twin Gaussian return-distribution critics and the categorical (C51) ablation.

The continuous critic models ``Z(s, a) ~ N(Q, sigma^2)`` and is trained with a
split gradient: a mean term anchored to the conservative expected target and
scaled by ``1 / (sigma^2 + eps)``, and a variance term driven by an unclipped
sample from the target distribution.  Both terms share the batch-level scale
``omega = mean(sigma^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, InputError, NumericalFault

CE_TINY = 1e-12


@dataclass(frozen=True)
class CriticConfig:
    kind: str = "continuous"  # or "c51"
    epsilon: float = 1e-6
    tau_soft: float = 0.005
    log_sigma_min: float = -5.0
    log_sigma_max: float = 5.0
    n_atoms: int = 101
    v_min: float | None = None
    v_max: float | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "c51"):
            raise ConfigError(f"critic kind must be 'continuous' or 'c51', got {self.kind!r}")
        if not 0.0 <= self.tau_soft <= 1.0:
            raise ConfigError("tau_soft must lie in [0, 1]")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if not self.log_sigma_min < self.log_sigma_max:
            raise ConfigError("log_sigma_min must be below log_sigma_max")
        if self.n_atoms < 2:
            raise ConfigError("C51 needs at least 2 atoms")

    @property
    def sigma_floor(self) -> float:
        return float(np.exp(self.log_sigma_min))


@dataclass
class ReturnDist:
    q: np.ndarray
    sigma: np.ndarray
    raw_log_sigma: np.ndarray | None = None


@dataclass
class CriticBatchTargets:
    y_q_min: np.ndarray
    y_z_sample: np.ndarray
    omega: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.y_q_min)) and np.all(np.isfinite(self.y_z_sample))):
            raise NumericalFault("non-finite critic targets")
        if not self.omega > 0:
            raise NumericalFault(f"omega must be positive, got {self.omega}")


@dataclass
class CriticDiagnostics:
    q_mean: float
    sigma_mean: float
    omega: float
    c_q_abs_mean: float
    c_sigma_abs_mean: float


# -- continuous Gaussian critic -----------------------------------------------


class GaussianCriticNet:
    """MLP on ``concat(s, a)`` emitting ``(Q, raw log sigma)``."""

    def __init__(self, spec: nn.NetworkSpec, params: nn.ParamStore, config: CriticConfig):
        nn.check_params(spec, params)
        self.spec, self.params, self.config = spec, params, config

    def forward(self, s, a) -> tuple[ReturnDist, nn.ForwardCache]:
        x = np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=1)
        out, cache = nn.forward_cached(self.spec, self.params, x)
        raw = out[:, 1]
        log_sigma = np.clip(raw, self.config.log_sigma_min, self.config.log_sigma_max)
        return ReturnDist(out[:, 0], np.exp(log_sigma), raw), cache

    def expected(self, s, a) -> np.ndarray:
        return self.forward(s, a)[0].q

    def action_grad(self, cache: nn.ForwardCache, action_dim: int, weight=None) -> np.ndarray:
        """dQ/da for each row (optionally scaled per row by ``weight``)."""
        seed = np.zeros((cache.inputs[0].shape[0], 2))
        seed[:, 0] = 1.0 if weight is None else weight
        _, dx = nn.backward_cached(self.spec, self.params, cache, seed, True, False)
        return dx[:, -action_dim:]

    def copy(self) -> GaussianCriticNet:
        return GaussianCriticNet(self.spec, self.params.copy(), self.config)


def critic_forward(net: GaussianCriticNet, s, a) -> ReturnDist:
    return net.forward(s, a)[0]


def omega_estimate(sigmas) -> float:
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if sigmas.size == 0:
        raise InputError("omega needs a non-empty batch")
    return float(np.mean(sigmas * sigmas))


def _bootstrap(r, gamma, done, value, logpi_next, alpha):
    r = np.asarray(r, dtype=np.float64)
    not_done = 1.0 - np.asarray(done, dtype=np.float64)
    return r + not_done * gamma * (value - alpha * np.asarray(logpi_next, dtype=np.float64))


def target_dists(ensemble: CriticEnsemble, s_next, a_next) -> tuple[ReturnDist, ReturnDist]:
    return tuple(net.forward(s_next, a_next)[0] for net in ensemble.target)


def target_mean(r, gamma, done, ensemble, s_next, a_next, logpi_next, alpha, dists=None):
    """Conservative expected target ``r + gamma * (min_j Q'_j - alpha * logpi')``."""
    d1, d2 = dists or target_dists(ensemble, s_next, a_next)
    return _bootstrap(r, gamma, done, np.minimum(d1.q, d2.q), logpi_next, alpha)


def target_sample(r, gamma, done, ensemble, s_next, a_next, logpi_next, alpha, rng, dists=None):
    """One unclipped draw from the target critic with the smaller mean."""
    d1, d2 = dists or target_dists(ensemble, s_next, a_next)
    pick_first = d1.q <= d2.q
    mean = np.where(pick_first, d1.q, d2.q)
    std = np.where(pick_first, d1.sigma, d2.sigma)
    z = mean + std * rng.standard_normal(mean.shape)
    return _bootstrap(r, gamma, done, z, logpi_next, alpha)


def critic_coefficients(dist: ReturnDist, targets: CriticBatchTargets, epsilon: float):
    q, sigma = dist.q, dist.sigma
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is reported by the caller
        c_q = -(targets.y_q_min - q) / (sigma * sigma + epsilon)
        resid = targets.y_z_sample - q
        c_sigma = -((resid * resid) - sigma * sigma) / (sigma**3 + epsilon)
    return c_q, c_sigma


def critic_gradient(
    net: GaussianCriticNet,
    s,
    a,
    targets: CriticBatchTargets,
    epsilon: float | None = None,
    forward: tuple[ReturnDist, nn.ForwardCache] | None = None,
) -> tuple[nn.Gradients, CriticDiagnostics]:
    """``omega * mean_b[c_Q grad Q + c_sigma grad sigma]`` with frozen coefficients."""
    eps = net.config.epsilon if epsilon is None else epsilon
    dist, cache = forward or net.forward(s, a)
    c_q, c_sigma = critic_coefficients(dist, targets, eps)
    bad = ~(np.isfinite(c_q) & np.isfinite(c_sigma))
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NumericalFault(f"non-finite critic coefficient at sample {idx}", where=idx)
    batch = dist.q.shape[0]
    cfg = net.config
    inside = (dist.raw_log_sigma > cfg.log_sigma_min) & (dist.raw_log_sigma < cfg.log_sigma_max)
    seed = np.empty((batch, 2))
    seed[:, 0] = targets.omega * c_q / batch
    # d sigma / d raw = sigma inside the clamp, 0 outside
    seed[:, 1] = targets.omega * c_sigma * dist.sigma * inside / batch
    grads, _ = nn.backward_cached(net.spec, net.params, cache, seed)
    diag = CriticDiagnostics(
        float(dist.q.mean()),
        float(dist.sigma.mean()),
        float(targets.omega),
        float(np.abs(c_q).mean()),
        float(np.abs(c_sigma).mean()),
    )
    return grads, diag


def critic_surrogate(net: GaussianCriticNet, s, a, c_q, c_sigma, omega: float) -> float:
    """Scalar whose gradient equals :func:`critic_gradient` for frozen coefficients."""
    dist = net.forward(s, a)[0]
    return float(omega * np.mean(c_q * dist.q + c_sigma * dist.sigma))


# -- categorical critic -----------------------------------------------------------


def c51_atoms(n_atoms: int, v_min: float, v_max: float) -> np.ndarray:
    if n_atoms < 2:
        raise ConfigError("C51 needs at least 2 atoms")
    if not v_min < v_max:
        raise ConfigError("need v_min < v_max")
    return np.linspace(v_min, v_max, n_atoms)


def c51_project(r, gamma, done, target_probs, atoms) -> np.ndarray:
    """Shift atoms by ``r + (1 - done) * gamma * z``, clamp, split mass linearly."""
    atoms = np.asarray(atoms, dtype=np.float64)
    n = atoms.size
    if n < 2:
        raise ConfigError("C51 needs at least 2 atoms")
    probs = np.asarray(target_probs, dtype=np.float64)
    single = probs.ndim == 1
    probs = np.atleast_2d(probs)
    batch = probs.shape[0]
    r = np.broadcast_to(np.asarray(r, dtype=np.float64), (batch,))
    not_done = 1.0 - np.broadcast_to(np.asarray(done, dtype=np.float64), (batch,))
    v_min, v_max = atoms[0], atoms[-1]
    dz = (v_max - v_min) / (n - 1)
    shifted = np.clip(r[:, None] + not_done[:, None] * gamma * atoms[None, :], v_min, v_max)
    b = np.clip((shifted - v_min) / dz, 0.0, n - 1)
    lower = np.floor(b).astype(np.int64)
    upper = np.minimum(lower + 1, n - 1)
    w_upper = b - lower
    w_lower = 1.0 - w_upper
    m = np.zeros((batch, n))
    rows = np.repeat(np.arange(batch), n)
    np.add.at(m, (rows, lower.ravel()), (probs * w_lower).ravel())
    np.add.at(m, (rows, upper.ravel()), (probs * w_upper).ravel())
    return m[0] if single else m


def c51_loss(pred_probs, m) -> float:
    pred_probs = np.asarray(pred_probs, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    ce = -np.sum(m * np.log(pred_probs + CE_TINY), axis=-1)
    return float(np.mean(ce))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class C51CriticNet:
    def __init__(
        self, spec: nn.NetworkSpec, params: nn.ParamStore, config: CriticConfig, atoms: np.ndarray
    ):
        nn.check_params(spec, params)
        if spec.output_dim != atoms.size:
            raise ConfigError("C51 network output must match the atom count")
        self.spec, self.params, self.config, self.atoms = spec, params, config, atoms

    def probs(self, s, a) -> tuple[np.ndarray, nn.ForwardCache]:
        x = np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=1)
        logits, cache = nn.forward_cached(self.spec, self.params, x)
        return _softmax(logits), cache

    def forward(self, s, a) -> tuple[ReturnDist, nn.ForwardCache]:
        p, cache = self.probs(s, a)
        q = p @ self.atoms
        var = np.maximum(p @ (self.atoms**2) - q * q, 0.0)
        cache.probs = p
        return ReturnDist(q, np.sqrt(var)), cache

    def expected(self, s, a) -> np.ndarray:
        return self.forward(s, a)[0].q

    def action_grad(self, cache: nn.ForwardCache, action_dim: int, weight=None) -> np.ndarray:
        p = cache.probs
        q = p @ self.atoms
        seed = p * (self.atoms[None, :] - q[:, None])
        if weight is not None:
            seed = seed * np.asarray(weight)[:, None]
        _, dx = nn.backward_cached(self.spec, self.params, cache, seed, True, False)
        return dx[:, -action_dim:]

    def copy(self) -> C51CriticNet:
        return C51CriticNet(self.spec, self.params.copy(), self.config, self.atoms)


def c51_gradient(net: C51CriticNet, s, a, m) -> tuple[nn.Gradients, float, np.ndarray]:
    p, cache = net.probs(s, a)
    batch = p.shape[0]
    seed = (p * m.sum(axis=1, keepdims=True) - m) / batch
    grads, _ = nn.backward_cached(net.spec, net.params, cache, seed)
    return grads, c51_loss(p, m), p @ net.atoms


# -- ensemble ---------------------------------------------------------------------


@dataclass
class CriticEnsemble:
    online: list
    target: list
    config: CriticConfig = field(default_factory=CriticConfig)

    @classmethod
    def build(
        cls,
        obs_dim: int,
        action_dim: int,
        hidden_widths=(256, 256),
        use_layer_norm: bool = False,
        config: CriticConfig | None = None,
        rng: np.random.Generator | None = None,
        value_range: tuple[float, float] | None = None,
    ) -> CriticEnsemble:
        config = config or CriticConfig()
        rng = rng or np.random.default_rng(0)
        if config.kind == "continuous":
            spec = nn.NetworkSpec(obs_dim + action_dim, tuple(hidden_widths), 2, use_layer_norm)
            online = [GaussianCriticNet(spec, nn.init_params(spec, rng), config) for _ in range(2)]
        else:
            v_min = config.v_min if config.v_min is not None else (value_range or (None,))[0]
            v_max = config.v_max if config.v_max is not None else (value_range or (None, None))[1]
            if v_min is None or v_max is None:
                raise ConfigError("C51 critic needs v_min/v_max or an environment value range")
            atoms = c51_atoms(config.n_atoms, v_min, v_max)
            spec = nn.NetworkSpec(
                obs_dim + action_dim, tuple(hidden_widths), config.n_atoms, use_layer_norm
            )
            online = [
                C51CriticNet(spec, nn.init_params(spec, rng), config, atoms) for _ in range(2)
            ]
        target = [net.copy() for net in online]
        for t in target:
            t.params.step_count = 0
        return cls(online, target, config)

    @property
    def kind(self) -> str:
        return self.config.kind

    def min_q(self, s, a) -> np.ndarray:
        return np.minimum(self.online[0].expected(s, a), self.online[1].expected(s, a))

    def min_q_and_action_grad(self, s, a, weight=None) -> tuple[np.ndarray, np.ndarray]:
        """Per-row min over the twin means and its gradient wrt the action."""
        (d1, c1), (d2, c2) = (net.forward(s, a) for net in self.online)
        first = d1.q <= d2.q
        n = np.atleast_2d(a).shape[1]
        w = np.ones_like(d1.q) if weight is None else np.asarray(weight, dtype=np.float64)
        g1 = self.online[0].action_grad(c1, n, w * first)
        g2 = self.online[1].action_grad(c2, n, w * ~first)
        return np.minimum(d1.q, d2.q), g1 + g2


def soft_update(ensemble: CriticEnsemble, tau_soft: float | None = None) -> None:
    tau = ensemble.config.tau_soft if tau_soft is None else tau_soft
    for online, target in zip(ensemble.online, ensemble.target):
        for name, p in online.params.entries.items():
            t = target.params.entries[name]
            t *= 1.0 - tau
            t += tau * p
