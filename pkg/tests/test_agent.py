import numpy as np
import pytest

from tandemq.agent import (AgentConfig, BufferError, DdpgAgent, LearningCurve, OuNoise,
                           ReplayBuffer, sigma_schedule, train_loop)
from tandemq.config import RunConfig
from tandemq.experiment import make_agent, make_env


def fill(buf, n, start=0):
    for i in range(start, start + n):
        buf.remember([i, i, i], [0, 0, 0], float(i), [i + 1] * 3, False)


def test_buffer_ring_eviction():
    buf = ReplayBuffer(5, 3, 3)
    fill(buf, 6)
    assert len(buf) == 5
    assert buf.state_arrays()["rew"].tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]


def test_buffer_full_batch_is_permutation():
    buf = ReplayBuffer(8, 3, 3)
    fill(buf, 8)
    batch = buf.sample(8, np.random.default_rng(0))
    assert sorted(batch["rew"].tolist()) == list(map(float, range(8)))


def test_buffer_underfilled_sample_raises():
    buf = ReplayBuffer(8, 3, 3)
    fill(buf, 3)
    with pytest.raises(BufferError):
        buf.sample(4, np.random.default_rng(0))


def test_buffer_state_round_trip():
    buf = ReplayBuffer(4, 3, 3)
    fill(buf, 7)
    other = ReplayBuffer(4, 3, 3)
    other.load_arrays(buf.state_arrays())
    for k, v in buf.state_arrays().items():
        assert np.array_equal(other.state_arrays()[k], v)


def test_ou_deterministic_decay():
    ou = OuNoise(1, theta=0.15, sigma=0.0)
    ou.x[:] = 5.0
    rng = np.random.default_rng(0)
    for k in range(1, 20):
        assert ou.step(rng)[0] == pytest.approx(5.0 * 0.85**k)
    ou.reset()
    assert ou.x.tolist() == [0.0]


def test_ou_stationary_variance():
    theta, sigma = 0.15, 0.5
    ou = OuNoise(1, theta=theta, sigma=sigma)
    rng = np.random.default_rng(1)
    xs = np.empty(10**6)
    for i in range(len(xs)):
        xs[i] = ou.step(rng)[0]
    want = sigma**2 / (2 * theta - theta**2)
    assert xs[1000:].var() == pytest.approx(want, rel=0.05)


def test_sigma_schedule():
    cfg = AgentConfig()
    assert sigma_schedule(0, 1000, cfg) == 0.5
    assert sigma_schedule(800, 1000, cfg) == pytest.approx(0.005)
    assert sigma_schedule(950, 1000, cfg) == pytest.approx(0.005)
    assert sigma_schedule(400, 1000, cfg) == pytest.approx(0.2525)


def test_config_validation():
    for bad in (dict(gamma=1.0), dict(tau=0.0), dict(batch_size=10, buffer_capacity=5),
                dict(obs_scaling="sqrt")):
        with pytest.raises(ValueError):
            AgentConfig(**bad)
    assert AgentConfig.from_dict(AgentConfig().to_dict()) == AgentConfig()


def small_agent(**kw):
    cfg = AgentConfig(buffer_capacity=1000, batch_size=16, warmup=16, **kw)
    return DdpgAgent(3, 3, 1024, cfg, seed=0)


def test_act_contract():
    ag = small_agent()
    obs = np.array([3, 0, 12])
    assert np.array_equal(ag.act(obs), ag.act(obs))
    ag.noise.sigma = 0.0
    assert np.array_equal(ag.act(obs, explore=True), ag.act(obs))
    ag.noise.sigma = 100.0
    for _ in range(50):
        assert np.all(np.abs(ag.act(obs, explore=True)) <= 1.0)


def test_observation_scaling():
    assert np.allclose(small_agent().normalize([0, 1024]), [0.0, 1.0])
    lin = small_agent(obs_scaling="linear")
    assert np.allclose(lin.normalize([0, 512, 1024]), [0.0, 0.5, 1.0])


def test_terminal_transitions_do_not_bootstrap():
    ag = small_agent()
    batch = {"obs": np.ones((4, 3)), "act": np.zeros((4, 3)), "rew": np.full(4, -3.0),
             "next_obs": np.full((4, 3), 0.5), "terminal": np.ones(4, dtype=bool)}
    assert ag.critic_targets(batch).tolist() == [-3.0] * 4
    batch["terminal"][:] = False
    q2 = ag.critic_target(np.hstack([batch["next_obs"], ag.actor_target(batch["next_obs"])]))[:, 0]
    assert np.allclose(ag.critic_targets(batch), -3.0 + 0.99 * q2)


def test_tau_one_copies_online_nets():
    ag = small_agent(tau=1.0)
    fill(ag.buffer, 32)
    ag.train_step(ag.buffer.sample(16, ag.rng))
    assert np.array_equal(ag.actor.params, ag.actor_target.params)
    assert np.array_equal(ag.critic.params, ag.critic_target.params)


def test_critic_fits_constant_reward():
    ag = small_agent()
    rng = np.random.default_rng(0)
    for _ in range(64):
        ag.buffer.remember(rng.uniform(0, 1, 3), rng.uniform(-1, 1, 3), 1.0, rng.uniform(0, 1, 3), True)
    losses = [ag.train_step(ag.buffer.sample(16, ag.rng))[0] for _ in range(300)]
    assert losses[-1] < 0.1 * losses[0]


def test_actor_climbs_quadratic_critic():
    ag = DdpgAgent(3, 3, 1024, seed=3)
    a_star = np.array([0.4, -0.3, 0.1])
    s = np.random.default_rng(0).uniform(0, 1, (8, 3))

    def critic(states, a):
        return -np.sum((a - a_star) ** 2, axis=1), -2.0 * (a - a_star)

    for _ in range(5000):
        ag.actor_step(s, critic)
    assert np.abs(ag.actor(s) - a_star).max() < 1e-2


def tiny_run_config():
    return RunConfig.from_dict({
        "qos": {"slot_len": 30.0},
        "episode": {"episode_duration": 300.0},
        "agent": {"warmup": 20, "batch_size": 16, "buffer_capacity": 5000},
    })


def test_resume_reproduces_uninterrupted_training(tmp_path):
    cfg = tiny_run_config()
    env, ag = make_env(cfg, 0), make_agent(cfg, 0)
    full = train_loop(env, ag, 6)

    env, ag = make_env(cfg, 0), make_agent(cfg, 0)
    first = train_loop(env, ag, 3, total_episodes=6)
    ag.save(tmp_path / "ck")
    ag2, _ = DdpgAgent.load(tmp_path / "ck")
    second = train_loop(make_env(cfg, 0), ag2, 3, total_episodes=6, start_episode=3)
    resumed = LearningCurve(first.episodes + second.episodes)
    assert [e.episode for e in resumed.episodes] == list(range(6))
    resumed.to_csv(tmp_path / "resumed.csv")
    full.to_csv(tmp_path / "full.csv")
    assert (tmp_path / "resumed.csv").read_bytes() == (tmp_path / "full.csv").read_bytes()


def test_learning_curve_csv_round_trip(tmp_path):
    cfg = tiny_run_config()
    curve = train_loop(make_env(cfg, 1), make_agent(cfg, 1), 3)
    curve.to_csv(tmp_path / "ep.csv")
    back = LearningCurve.from_csv(tmp_path / "ep.csv")
    assert len(back) == 3
    for a, b in zip(curve.episodes, back.episodes):
        assert a.episode == b.episode and a.n_departed == b.n_departed
        assert a.mean_reward == pytest.approx(b.mean_reward, rel=1e-8)
