import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastdsac.envs import (
    ENV_NAMES,
    ChainMDPConfig,
    RedundantReacherConfig,
    chain_mdp_analytic_q,
    env_config,
    make_env,
    make_envs,
    relevant_dim_report,
    reset_batch,
    step_batch,
)
from fastdsac.errors import ConfigError


def test_unknown_env():
    with pytest.raises(ConfigError):
        make_env("cartpole")
    with pytest.raises(ConfigError):
        env_config("chain_mdp", {"lenght": 3})


@pytest.mark.parametrize("name", ENV_NAMES)
def test_same_seed_same_first_observation(name):
    assert np.array_equal(make_env(name, seed=3).reset(), make_env(name, seed=3).reset())


def test_chain_reset_is_state_zero():
    env = make_env("chain_mdp", seed=0)
    obs = env.reset()
    assert env.state == 0 and obs[0] == 1.0 and obs.sum() == 1.0


def test_reacher_obs_dim():
    cfg = RedundantReacherConfig(n_total=10, n_relevant=3)
    env = make_env("redundant_reacher", cfg, 0)
    assert env.spec.obs_dim == 4 and env.reset().shape == (4,)
    assert env.spec.action_dim == 10 and env.spec.relevant_dims == (0, 1, 2)


# -- batched stepping ------------------------------------------------------------------


def test_batch_of_one_equals_single_step():
    single = make_env("pendulum", seed=np.random.SeedSequence(5).spawn(1)[0])
    batch = make_envs("pendulum", None, 5, 1)
    o1 = single.reset()
    ob = reset_batch(batch)
    assert np.array_equal(o1[None], ob)
    a = np.array([[0.3]])
    o, r, d, t = single.step(a[0])
    res = step_batch(batch, a)
    assert np.array_equal(res.obs[0], o) and res.rewards[0] == r


def test_permuting_envs_permutes_outputs():
    envs = make_envs("redundant_reacher", None, 1, 4)
    twins = make_envs("redundant_reacher", None, 1, 4)
    reset_batch(envs)
    reset_batch(twins)
    perm = [2, 0, 3, 1]
    actions = np.random.default_rng(0).uniform(-1, 1, (4, 16))
    a = step_batch(envs, actions)
    b = step_batch([twins[i] for i in perm], actions[perm])
    assert np.array_equal(a.obs[perm], b.obs) and np.array_equal(a.rewards[perm], b.rewards)


def test_action_shape_mismatch():
    envs = make_envs("pendulum", None, 0, 2)
    reset_batch(envs)
    with pytest.raises(ConfigError):
        step_batch(envs, np.zeros((3, 1)))
    with pytest.raises(ConfigError):
        envs[0].step(np.zeros(2))


def test_auto_reset_and_episode_lengths():
    envs = make_envs("chain_mdp", ChainMDPConfig(length=3), 0, 2)
    reset_batch(envs)
    lengths, t = [], np.zeros(2, int)
    for _ in range(20):
        res = step_batch(envs, np.zeros((2, 1)))
        t += 1
        for i in np.flatnonzero(res.dones | res.truncateds):
            lengths.append(t[i])
            t[i] = 0
            assert not res.final_obs[i].any()  # absorbing end
            assert res.obs[i][0] == 1.0  # fresh episode
    assert set(lengths) == {3}


def test_reacher_truncates_at_time_limit():
    envs = make_envs("redundant_reacher", RedundantReacherConfig(max_episode_steps=5), 0, 1)
    reset_batch(envs)
    flags = [step_batch(envs, np.zeros((1, 16))).truncateds[0] for _ in range(10)]
    assert flags == [False] * 4 + [True] + [False] * 4 + [True]


# -- reward and dynamics ----------------------------------------------------------------


def test_matching_target_gives_zero_reward():
    env = make_env("redundant_reacher", seed=0)
    obs = env.reset()
    a = np.random.default_rng(0).uniform(-1, 1, 16)
    a[:4] = obs[:4]
    _, r, _, _ = env.step(a)
    assert r == 0.0


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.lists(st.floats(-1, 1), min_size=12, max_size=12))
def test_irrelevant_coordinates_have_no_effect(seed, junk):
    e1, e2 = make_env("redundant_reacher", seed=seed), make_env("redundant_reacher", seed=seed)
    e1.reset()
    e2.reset()
    rng = np.random.default_rng(seed)
    for _ in range(40):
        a = rng.uniform(-1, 1, 16)
        b = a.copy()
        b[4:] = junk
        s1, s2 = e1.step(a), e2.step(b)
        assert np.array_equal(s1[0], s2[0]) and s1[1:] == s2[1:]
        if s1[2] or s1[3]:
            e1.reset()
            e2.reset()


def test_reward_bounds():
    rng = np.random.default_rng(0)
    names = ("redundant_reacher", "pendulum", "chain_mdp")
    reacher, pend, chain = (make_env(n, seed=1) for n in names)
    for env in (reacher, pend, chain):
        env.reset()
    lo = -4 * 4 * 0.64
    for _ in range(500):
        _, r, d, t = reacher.step(rng.uniform(-3, 3, 16))
        assert lo - 1e-12 <= r <= 0
        _, r, d, t = pend.step(rng.uniform(-1, 1, 1))
        assert r <= 0
        _, r, d, t = chain.step(rng.uniform(-1, 1, 1))
        assert r == 1.0
        if d or t:
            chain.reset()


@pytest.mark.parametrize("name", ENV_NAMES)
def test_determinism(name):
    env_a, env_b = make_env(name, seed=9), make_env(name, seed=9)
    actions = np.random.default_rng(2).uniform(-1, 1, (300, env_a.spec.action_dim))
    for env in (env_a, env_b):
        env.reset()
    for a in actions:
        ra, rb = env_a.step(a), env_b.step(a)
        assert np.array_equal(ra[0], rb[0]) and ra[1:] == rb[1:]
        if ra[2] or ra[3]:
            assert np.array_equal(env_a.reset(), env_b.reset())


def test_pendulum_hangs_still_at_bottom():
    env = make_env("pendulum", seed=0)
    env.reset()
    env.theta, env.theta_dot = np.pi, 0.0
    obs, r, _, _ = env.step(np.zeros(1))
    assert obs[0] == pytest.approx(-1.0) and abs(obs[2]) < 1e-12
    assert r == pytest.approx(-np.pi**2)


# -- oracles ----------------------------------------------------------------------


def test_chain_analytic_examples():
    q = chain_mdp_analytic_q(ChainMDPConfig(length=5), 0.5)
    assert q[0] == pytest.approx(1.9375, abs=1e-15)
    np.testing.assert_allclose(q, [1.9375, 1.875, 1.75, 1.5, 1.0])
    long = chain_mdp_analytic_q(ChainMDPConfig(length=2000), 0.9)
    assert long[0] == pytest.approx(10.0, abs=1e-12)
    assert np.all(chain_mdp_analytic_q(ChainMDPConfig(r_const=2.5), 0.0) == 2.5)


def test_chain_analytic_matches_rollout():
    cfg = ChainMDPConfig(length=6, r_const=0.7)
    gamma = 0.8
    q = chain_mdp_analytic_q(cfg, gamma)
    for start in range(cfg.length):
        env = make_env("chain_mdp", cfg, 0)
        env.reset()
        env.state = start
        ret, disc, done = 0.0, 1.0, False
        while not done:
            _, r, done, _ = env.step(np.zeros(1))
            ret += disc * r
            disc *= gamma
        assert ret == pytest.approx(q[start], rel=1e-12)


def test_chain_value_range_is_tight():
    env = make_env("chain_mdp", seed=0)
    lo, hi = env.value_range(0.9)
    assert lo == 1.0 and hi == pytest.approx(4.0951, abs=1e-12)


def test_relevant_dim_report_examples():
    assert relevant_dim_report(np.ones((7, 5)), [0, 1]).ratio == 1.0
    trace = np.array([[0.5, 0.5, 1.5, 1.5]])
    assert relevant_dim_report(trace, [0, 1]).ratio == pytest.approx(3.0)
    cfg = RedundantReacherConfig(n_total=4, n_relevant=2)
    assert relevant_dim_report(trace, cfg).ratio == pytest.approx(3.0)
    row = np.array([0.2, 0.6, 1.4, 1.8])
    rep = relevant_dim_report(row, [0, 1])
    np.testing.assert_array_equal(rep.per_dim, row)
    with pytest.raises(ConfigError):
        relevant_dim_report(np.empty((0, 4)), [0])
