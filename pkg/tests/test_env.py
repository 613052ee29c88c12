import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tandemq.distributions import DistSpec
from tandemq.env import (EpisodeConfig, LifecycleError, QosSpec, TandemEnv, compute_reward,
                         scale_action)
from tandemq.sim import ConfigError, Departures, NetworkConfig, SlotOutcome, TandemSim


def default_network():
    g = DistSpec.gamma(1.0, 0.8)
    return NetworkConfig((3, 5, 2), DistSpec.gamma(1 / 0.95, 0.7), (g, g, g),
                         (0.34, 0.2, 0.5), (1.5, 1.5, 1.5))


def outcome(delays=(), n_censored=0, sum_rate=10.0, t0=0.0, t1=30.0):
    n = len(delays)
    arrival = np.linspace(t0 + 0.1, t0 + 1.0, n) if n else np.empty(0)
    dep = np.zeros((n, 1))
    dep[:, 0] = arrival + np.asarray(delays, dtype=float)
    acc = Departures(np.arange(n), arrival, dep.copy(), dep, np.ones((n, 1)))
    return SlotOutcome(t0, t1, [1.0], sum_rate, n + n_censored, acc,
                       np.arange(n, n + n_censored), np.full(n_censored, t0 + 0.5), acc, [0], 0.0)


# -- reward arithmetic -----------------------------------------------------------

def test_reward_empty_slot_is_minus_sum_rate():
    assert compute_reward(outcome(sum_rate=10.0), QosSpec()) == -10.0


def test_reward_balanced_slot():
    qos = QosSpec(d_ub=10, eps_ub=0.1, lambda_tradeoff=14, slot_len=30, arrival_rate=1 / 3)
    assert qos.beta1 == pytest.approx(1.4) and qos.beta2 == pytest.approx(-12.6)
    r = compute_reward(outcome([1.0] * 9 + [11.0], sum_rate=10.0), qos)
    assert r == pytest.approx(-10.0, abs=1e-12)


def test_reward_censored_count_as_violations():
    qos = QosSpec(arrival_rate=1 / 3)
    a = compute_reward(outcome([1.0] * 9, n_censored=1), qos)
    b = compute_reward(outcome([1.0] * 9 + [50.0]), qos)
    assert a == b


def test_reward_all_ok_and_all_bad():
    qos = QosSpec(arrival_rate=0.5)  # E[n_a] = 15
    assert compute_reward(outcome([2.0] * 15, sum_rate=6.0), qos) == pytest.approx(qos.beta1 - 6.0)
    assert compute_reward(outcome([20.0] * 15, sum_rate=6.0), qos) == pytest.approx(qos.beta2 - 6.0)


def test_reward_toy_trace():
    net = NetworkConfig((1,), DistSpec.deterministic(1.0), (DistSpec.deterministic(0.5),), (0.6,), (1.0,))
    qos = QosSpec(d_ub=0.6, eps_ub=0.1, lambda_tradeoff=14, slot_len=10, arrival_rate=0.9)
    out = TandemSim(net, 0).run_slot([1.0], 10.0, 0.6)
    assert compute_reward(out, qos) == pytest.approx(0.4, abs=1e-12)


@given(st.lists(st.floats(0, 100), max_size=50), st.integers(0, 10), st.floats(0, 50))
def test_zero_tradeoff_reward_is_minus_sum_rate(delays, cens, sum_rate):
    qos = QosSpec(lambda_tradeoff=0.0)
    assert compute_reward(outcome(delays, cens, sum_rate), qos) == -sum_rate


def test_qos_validation():
    for bad in (dict(eps_ub=0.0), dict(eps_ub=1.0), dict(slot_len=10.0), dict(lambda_tradeoff=-1)):
        with pytest.raises(ConfigError):
            QosSpec(**bad)


# -- action scaling --------------------------------------------------------------

def test_scale_action_endpoints_and_midpoint():
    net = NetworkConfig((1, 1), DistSpec.exponential(4.0), (DistSpec.exponential(1.0),) * 2,
                        (0.4, 0.3), (1.2, 0.7))
    assert list(scale_action([-1, -1], net).rates) == [0.4, 0.3]
    assert list(scale_action([1, 1], net).rates) == [1.2, 0.7]
    assert scale_action([0, 0], net).rates[0] == pytest.approx(0.8)
    assert list(scale_action([-7, 3], net).rates) == [0.4, 0.7]


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_scale_action_monotone(a, b):
    net = default_network()
    ra, rb = scale_action(a, net).rates, scale_action(b, net).rates
    assert np.all((np.asarray(a) <= np.asarray(b)) <= (ra <= rb))
    assert np.all((ra >= net.mu_min) & (ra <= net.mu_max))


# -- lifecycle ---------------------------------------------------------------------

def test_reset_gives_empty_observation():
    env = TandemEnv(default_network(), QosSpec(), seed=1)
    obs = env.reset()
    assert obs.tolist() == [0, 0, 0]


def test_same_seed_same_trajectory():
    acts = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    runs = []
    for _ in range(2):
        env = TandemEnv(default_network(), QosSpec(), seed=5)
        env.reset(episode_index=3)
        runs.append([env.step(a)[:2] for a in acts])
    for (o1, r1), (o2, r2) in zip(*runs):
        assert np.array_equal(o1, o2) and r1 == r2


def test_episode_truncates_at_max_steps():
    env = TandemEnv(default_network(), QosSpec(slot_len=30), EpisodeConfig(300.0), seed=0)
    assert env.max_steps == 10
    env.reset()
    for k in range(10):
        _, _, done, info = env.step([1, 1, 1])
    assert done and info.truncated and not info.terminal
    with pytest.raises(LifecycleError):
        env.step([1, 1, 1])


def test_delay_max_terminates():
    env = TandemEnv(default_network(), QosSpec(slot_len=30), EpisodeConfig(2000.0, delay_max=12.0),
                    seed=0)
    env.reset()
    done = False
    while not done:
        _, _, done, info = env.step([-1, -1, -1])
    assert info.terminal and not info.truncated
    assert info.step < env.max_steps


def test_delay_max_must_exceed_d_ub():
    with pytest.raises(ConfigError):
        EpisodeConfig(delay_max=5.0).resolve_delay_max(10.0)
    assert EpisodeConfig().resolve_delay_max(10.0) == 100.0
    assert EpisodeConfig(2000.0).max_steps(15.0) == 133


def test_truncation_changes_observations_only():
    acts = np.random.default_rng(1).uniform(-1, -0.5, (30, 3))
    res = {}
    for q_max in (2, 1024):
        env = TandemEnv(default_network(), QosSpec(), q_max=q_max, seed=9)
        env.reset()
        res[q_max] = [env.step(a) for a in acts]
    for (o1, r1, d1, _), (o2, r2, d2, _) in zip(res[2], res[1024]):
        assert r1 == r2 and d1 == d2
        assert np.array_equal(o1, np.minimum(o2, 2))


def test_running_arrivals_estimator():
    env = TandemEnv(default_network(), QosSpec(), seed=2, arrivals_estimator="running")
    env.reset()
    assert env.expected_arrivals() == pytest.approx(0.95 * 30)
    for _ in range(20):
        env.step([0, 0, 0])
    assert env.expected_arrivals() == pytest.approx(0.95 * 30, rel=0.15)
    with pytest.raises(ConfigError):
        TandemEnv(default_network(), QosSpec(), arrivals_estimator="oracle")


def test_reward_identity_long_run():
    """Average normalized sub-reward approaches beta1 P(d<d_ub) + beta2 P(d>d_ub)."""
    qos = QosSpec(d_ub=10, slot_len=1000)
    sim = TandemSim(default_network(), 21)
    per_slot, delays = [], []
    for _ in range(100):
        out = sim.run_slot([0.6, 0.4, 0.8], qos.slot_len, qos.d_ub)
        per_slot.append(compute_reward(out, qos) + out.sum_rate)
        delays.append(out.departures.delay)
    d = np.concatenate(delays)
    p_bad = np.mean(d > qos.d_ub)
    target = qos.beta1 * (1 - p_bad) + qos.beta2 * p_bad
    x = np.asarray(per_slot)
    se = x.std(ddof=1) / np.sqrt(len(x))
    assert abs(x.mean() - target) <= 3 * se
    assert 0.02 < p_bad < 0.5  # the check is not vacuous
