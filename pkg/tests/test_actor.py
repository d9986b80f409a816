import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fastdsac import nn
from fastdsac.actor import (
    Actor,
    DEMConfig,
    PolicyHead,
    assign_env_betas,
    dem_weights,
    deterministic_action,
    log_prob,
    modulated_std,
    sample_action,
    sample_from_noise,
)
from fastdsac.errors import ConfigError, InputError

logit_lists = st.lists(st.floats(-30, 30, allow_nan=False), min_size=1, max_size=24)
taus = st.floats(1e-2, 1e3)
betas = st.floats(1e-2, 2.0)


def _head(mu, sigma_hat, logits=None):
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma_hat = np.broadcast_to(np.asarray(sigma_hat, dtype=float), mu.shape).copy()
    logits = np.zeros_like(mu) if logits is None else np.asarray(logits, dtype=float)
    return PolicyHead(mu, sigma_hat, logits)


# -- DEM weights ------------------------------------------------------------------


@given(st.floats(-50, 50), st.integers(1, 30), taus, betas)
def test_equal_logits_give_unit_weights(value, n, tau, beta):
    np.testing.assert_allclose(dem_weights(np.full(n, value), tau, beta), np.ones(n), rtol=1e-14)


def test_ln2_example():
    np.testing.assert_allclose(dem_weights([np.log(2.0), 0.0], 1.0, 1.0), [4 / 3, 2 / 3])


def test_vanishing_beta_is_uniform():
    np.testing.assert_allclose(dem_weights([3.0, -1.0, 0.5], 1.0, 1e-12), np.ones(3), atol=1e-10)


def test_disabled_dem_returns_ones():
    w = dem_weights([3.0, -1.0], 0.5, 2.0, dem_enabled=False)
    assert np.array_equal(w, np.ones(2))


def test_dem_weight_errors():
    with pytest.raises(ConfigError):
        dem_weights([1.0, 2.0], 0.0)
    with pytest.raises(InputError):
        dem_weights([1.0, np.inf], 1.0)
    with pytest.raises(ConfigError):
        DEMConfig(tau=-1.0)


@given(logit_lists, taus, betas)
def test_budget_conservation(logits, tau, beta):
    w = dem_weights(logits, tau, beta)
    assert abs(w.mean() - 1.0) <= 1e-12
    assert w.min() >= 0


def test_budget_conservation_batched_betas():
    rng = np.random.default_rng(0)
    logits = rng.normal(0, 5, size=(64, 16))
    b = rng.uniform(0.01, 2.0, size=64)
    w = dem_weights(logits, 0.7, b)
    assert np.abs(w.mean(axis=1) - 1).max() <= 1e-12
    np.testing.assert_allclose(w[3], dem_weights(logits[3], 0.7, b[3]), rtol=1e-14)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=24), betas)
def test_uniform_limit(logits, beta):
    assert np.abs(dem_weights(logits, 1e6, beta) - 1).max() <= 1e-3


@given(logit_lists, taus, taus, betas)
def test_sharpening_in_tau(logits, t1, t2, beta):
    assume(np.ptp(logits) > 0)
    lo, hi = sorted((t1, t2))
    assert dem_weights(logits, lo, beta).max() >= dem_weights(logits, hi, beta).max() - 1e-12


@given(logit_lists, taus)
def test_sharpening_in_beta(logits, tau):
    assert dem_weights(logits, tau, 2.0).max() >= dem_weights(logits, tau, 0.01).max() - 1e-12


@given(logit_lists, taus, betas)
def test_argmax_invariance(logits, tau, beta):
    logits = np.array(logits)
    w = dem_weights(logits, tau, beta)
    # ties in w can arise from ties in the logits or from underflow to a common value
    assert w[np.argmax(logits)] == w.max()


# -- modulated std ------------------------------------------------------------------


def test_modulated_std_examples():
    assert modulated_std(0.0, 1.0) == 1.0
    assert modulated_std(0.0, 2.0) == 2.0
    np.testing.assert_allclose(
        modulated_std(np.log([3.0, 3.0]), np.array([4 / 3, 2 / 3])), [4.0, 2.0]
    )


def test_clamp_then_modulate_can_exceed_max():
    cfg = DEMConfig(tau=1.0, log_std_max=0.0)
    actor = Actor(2, 2, (4,), config=cfg, rng=np.random.default_rng(0))
    actor.params.entries["b1"][:] = [0.0, 0.0, 5.0, 5.0, 3.0, 0.0]
    actor.params.entries["W1"][:] = 0.0
    head = actor.head(np.zeros((1, 2)))
    assert np.all(head.sigma_hat == 0.0)
    sigma = modulated_std(head.sigma_hat, dem_weights(head.logits, cfg.tau))
    assert sigma.max() > np.exp(cfg.log_std_max)


# -- sampling and density ---------------------------------------------------------------


def test_vanishing_noise_limit():
    cfg = DEMConfig(dem_enabled=False)
    head = _head(np.zeros(3), -10.0)
    s = sample_action(head, 1.0, np.random.default_rng(0), cfg)
    assert np.abs(s.a - np.tanh(head.mu)).max() < 1e-3
    assert np.all(np.abs(s.a) < 1)


def test_monte_carlo_moments():
    head = _head(np.zeros((100_000, 1)), 0.0)
    s = sample_action(head, 1.0, np.random.default_rng(1), DEMConfig())
    assert abs(s.u.mean()) < 0.02
    assert abs(s.u.var() - 1.0) < 0.05


def test_sampling_is_deterministic():
    head = _head([0.1, -0.3], [0.0, -1.0], [0.5, -0.5])
    a = sample_action(head, 1.3, np.random.default_rng(5), DEMConfig())
    b = sample_action(head, 1.3, np.random.default_rng(5), DEMConfig())
    assert a.u.tobytes() == b.u.tobytes() and a.log_prob.tobytes() == b.log_prob.tobytes()


def test_sample_log_prob_matches_log_prob():
    head = _head([0.1, -0.3], [0.2, -1.0], [0.5, -0.5])
    cfg = DEMConfig(tau=0.5)
    s = sample_action(head, 0.7, np.random.default_rng(2), cfg)
    assert s.log_prob == log_prob(head, 0.7, s.u, cfg)
    np.testing.assert_array_equal(s.a, np.tanh(s.u))


def test_log_prob_at_mode():
    lp = log_prob(_head([0.0], 0.0), 1.0, np.array([0.0]), DEMConfig())
    assert lp == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)
    assert lp == pytest.approx(-0.9189385332, abs=1e-10)


@given(st.integers(1, 8), st.floats(-2, 2), st.floats(-3, 0.5))
def test_doubling_sigma_costs_log2_per_dim(n, mu, sh):
    cfg = DEMConfig(dem_enabled=False, log_std_max=2.0)
    head = _head(np.full(n, mu), sh)
    wide = _head(np.full(n, mu), sh + np.log(2.0))
    u = head.mu.copy()
    diff = log_prob(head, 1.0, u, cfg) - log_prob(wide, 1.0, u, cfg)
    assert diff == pytest.approx(n * np.log(2.0), rel=1e-12)


def test_density_integrates_to_one():
    # quadrature in u: p_A(tanh u) * dtanh/du over u in [-8, 8]
    u = np.linspace(-8, 8, 10_000)
    head = _head(np.zeros((u.size, 1)), 0.0)
    log_density = log_prob(head, 1.0, u[:, None], DEMConfig())
    jac = 1.0 - np.tanh(u) ** 2
    integral = np.trapezoid(np.exp(log_density) * jac, u)
    assert abs(integral - 1.0) <= 1e-3


def test_density_integrates_to_one_with_modulation():
    u = np.linspace(-8, 8, 10_000)
    head = _head(np.full((u.size, 2), 0.3), -0.5, np.tile([1.0, -1.0], (u.size, 1)))
    cfg = DEMConfig(tau=0.8)
    sigma = modulated_std(head.sigma_hat, dem_weights(head.logits, cfg.tau))[0]
    # marginal of the first coordinate: evaluate the joint with the second held at its mean
    # and remove the second factor analytically
    u2 = np.full(u.size, 0.3)
    joint = log_prob(head, 1.0, np.stack([u, u2], axis=1), cfg)
    second = -np.log(sigma[1]) - 0.5 * np.log(2 * np.pi) - 2 * (
        np.log(2) - u2 - np.logaddexp(0, -2 * u2)
    )
    marginal = np.exp(joint - second) * (1 - np.tanh(u) ** 2)
    assert abs(np.trapezoid(marginal, u) - 1.0) <= 1e-3


def test_tanh_correction_is_stable_for_large_u():
    lp = log_prob(_head([0.0], 0.0), 1.0, np.array([40.0]), DEMConfig())
    assert np.isfinite(lp)


def test_deterministic_action():
    assert deterministic_action(_head([0.0], 0.0))[0] == 0.0
    np.testing.assert_allclose(deterministic_action(_head([50.0, -50.0], 0.0)), [1, -1], atol=1e-9)
    assert deterministic_action(_head([0.5493], 0.0))[0] == pytest.approx(0.5, abs=1e-4)


# -- heterogeneity factors --------------------------------------------------------------


def test_degenerate_beta_interval():
    assert np.array_equal(assign_env_betas(7, 1.0, 1.0, np.random.default_rng(0)), np.ones(7))


def test_beta_mean():
    b = assign_env_betas(100_000, 0.01, 2.0, np.random.default_rng(0))
    assert abs(b.mean() - 1.005) <= 0.01
    assert b.min() >= 0.01 and b.max() <= 2.0


def test_beta_determinism():
    a = assign_env_betas(10, 0.01, 2.0, np.random.default_rng(4))
    b = assign_env_betas(10, 0.01, 2.0, np.random.default_rng(4))
    assert np.array_equal(a, b)


# -- ablation equivalence -----------------------------------------------------------------


def _standard_policy(mu, log_std, xi):
    """Plain diagonal-Gaussian tanh policy with std exp(log_std)."""
    std = np.exp(log_std)
    u = mu + std * xi
    z = (u - mu) / std
    lp = (-0.5 * z * z - np.log(std) - 0.5 * np.log(2 * np.pi)
          - 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u)))
    return u, np.tanh(u), lp.sum(axis=-1)


def test_disabled_dem_is_bit_identical_to_standard_policy():
    rng = np.random.default_rng(3)
    head = PolicyHead(rng.normal(size=(32, 6)), rng.uniform(-3, 1, (32, 6)), rng.normal(size=(32, 6)))
    cfg = DEMConfig(dem_enabled=False)
    s = sample_action(head, np.full(32, 1.7), np.random.default_rng(9), cfg)
    xi = np.random.default_rng(9).standard_normal((32, 6))
    u, a, lp = _standard_policy(head.mu, head.sigma_hat, xi)
    assert s.u.tobytes() == u.tobytes()
    assert s.a.tobytes() == a.tobytes()
    assert s.log_prob.tobytes() == lp.tobytes()


# -- network-backed actor gradients ----------------------------------------------------


@pytest.mark.parametrize("dem_enabled", [True, False])
@pytest.mark.parametrize("layer_norm", [True, False])
def test_actor_reparam_gradient(dem_enabled, layer_norm):
    rng = np.random.default_rng(10)
    cfg = DEMConfig(tau=0.7, log_std_min=-3.0, log_std_max=1.0, dem_enabled=dem_enabled)
    actor = Actor(3, 2, (8,), layer_norm, cfg, rng)
    for k in actor.params.entries:
        actor.params.entries[k] += rng.normal(0, 0.3, actor.params.entries[k].shape)
    obs = rng.normal(size=(4, 3))
    beta = rng.uniform(0.5, 2.0, 4)
    xi = rng.normal(size=(4, 2))
    g_logp, g_a = rng.normal(size=4), rng.normal(size=(4, 2))
    head, cache = actor.forward(obs)
    grads = actor.head_backward(cache, sample_from_noise(head, beta, xi, cfg), beta, g_logp, g_a)

    def loss():
        s = sample_from_noise(actor.head(obs), beta, xi, cfg)
        return float(np.sum(g_logp * s.log_prob) + np.sum(g_a * s.a))

    def signature():
        _, c = actor.forward(obs)
        clamp = (c.raw_log_std > cfg.log_std_min) & (c.raw_log_std < cfg.log_std_max)
        return nn.activation_pattern(c.net, actor.spec) + (clamp,)

    report = nn.check_gradients(loss, actor.params.entries, grads, 1e-4, 1e-4, signature)
    assert report.passed, report
    if not dem_enabled:
        n = actor.action_dim
        # logits block of the output layer receives no gradient
        assert not grads["W1"][:, 2 * n :].any()


def test_clamped_log_std_blocks_gradient():
    cfg = DEMConfig(log_std_min=-1.0, log_std_max=-0.5, dem_enabled=False)
    actor = Actor(2, 1, (4,), config=cfg, rng=np.random.default_rng(0))
    actor.params.entries["b1"][1] = 3.0  # raw log-std far above the max
    head, cache = actor.forward(np.zeros((1, 2)))
    s = sample_action(head, 1.0, np.random.default_rng(0), cfg)
    grads = actor.head_backward(cache, s, 1.0, np.ones(1), np.zeros((1, 1)))
    assert grads["b1"][1] == 0.0
