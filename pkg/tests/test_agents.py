import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daahm.agents import (AgentConfig, DdpgAgent, ReplayBuffer, ReplayNotReadyError, Transition,
                          baseline_classical, baseline_fixed, baseline_random, encode_state,
                          evaluate, make_policy, noise_schedule, train)
from daahm.env import ActivityDynamics, EnvConfig, EnvState
from daahm.model import DeviceSpec, compute_relevance, threshold_select
from daahm.nn import forward

TOL = 1e-9


def small_env(T=4, G=3, M=3):
    rng = np.random.default_rng(0)
    imp = rng.uniform(0.1, 1.0, size=(G, M))
    return EnvConfig(imp, [DeviceSpec(4e8), DeviceSpec(8e8)], np.full(M, 1e5),
                     np.full(M, 3e5), np.full(M, 150.0), ActivityDynamics.sticky(G), T=T)


def freeze_target_critic(agent, value):
    for w in agent.target_critic.weights:
        w[...] = 0.0
    for b in agent.target_critic.biases:
        b[...] = 0.0
    agent.target_critic.biases[-1][...] = value


def test_encode_state():
    s = encode_state(EnvState(1, 4e8, 0), 3, 8e8)
    assert s.tolist() == [0, 1, 0, 0.5]


def test_td_target_with_frozen_critic():
    agent = DdpgAgent(3, 2)
    freeze_target_critic(agent, 1.0)
    y = agent.td_target(np.array([0.5]), np.zeros((1, 3)), np.array([0.0]))
    assert y[0] == pytest.approx(0.5 + 0.99 * 1.0, abs=TOL)
    assert y[0] == pytest.approx(1.49, abs=TOL)
    done = agent.td_target(np.array([0.5]), np.zeros((1, 3)), np.array([1.0]))
    assert done[0] == 0.5


def test_td_target_independent_recomputation():
    agent = DdpgAgent(4, 3, seed=2)
    rng = np.random.default_rng(0)
    r, s2 = rng.normal(size=8), rng.uniform(size=(8, 4))
    done = (rng.uniform(size=8) < 0.3).astype(float)
    W0, b0, W1, b1 = agent.target_actor.params()
    a2 = 1 / (1 + np.exp(-(np.maximum(s2 @ W0 + b0, 0) @ W1 + b1)))
    V0, c0, V1, c1 = agent.target_critic.params()
    q2 = (np.maximum(np.hstack([s2, a2]) @ V0 + c0, 0) @ V1 + c1)[:, 0]
    assert np.allclose(agent.td_target(r, s2, done), r + 0.99 * (1 - done) * q2, atol=1e-12)


def test_update_moves_targets_by_tau():
    agent = DdpgAgent(4, 3, seed=1)
    rng = np.random.default_rng(1)
    batch = Transition(rng.uniform(size=(16, 4)), rng.uniform(size=(16, 3)), rng.normal(size=16),
                       rng.uniform(size=(16, 4)), np.zeros(16))
    ta, tc = agent.target_actor.flat.copy(), agent.target_critic.flat.copy()
    agent.update(batch)
    assert np.allclose(agent.target_actor.flat, ta + 0.005 * (agent.actor.flat - ta), atol=1e-15)
    assert np.allclose(agent.target_critic.flat, tc + 0.005 * (agent.critic.flat - tc),
                       atol=1e-15)
    # the critic regressed onto the targets computed before the step
    assert np.allclose(agent.last_td_target,
                       batch.r + 0.99 * forward(agent.target_critic, np.hstack(
                           [batch.s2, forward(agent.target_actor, batch.s2)[0]]))[0][:, 0],
                       atol=0.05)


def test_update_reduces_critic_loss_on_fixed_batch():
    agent = DdpgAgent(4, 2, AgentConfig(tau=1e-9), seed=0)
    rng = np.random.default_rng(3)
    batch = Transition(rng.uniform(size=(32, 4)), rng.uniform(size=(32, 2)),
                       rng.normal(size=32), rng.uniform(size=(32, 4)), np.ones(32))
    first = agent.update(batch)[0]
    for _ in range(300):
        last = agent.update(batch)[0]
    assert last < 0.5 * first


def test_act_determinism_and_clamp():
    agent = DdpgAgent(4, 3, seed=0)
    s = np.array([1.0, 0, 0, 0.5])
    assert np.array_equal(agent.act(s), agent.act(s))
    for w in agent.actor.weights:
        w[...] = 0.0
    assert agent.act(s).tolist() == [0.5] * 3
    noisy = agent.act(s, 50.0, np.random.default_rng(0))
    assert np.all((noisy >= 0) & (noisy <= 1))


def test_noise_schedule():
    assert noise_schedule(0, 100, 0.2, 0.02) == 0.2
    assert noise_schedule(25, 100, 0.2, 0.02) == pytest.approx(0.11)
    assert noise_schedule(50, 100, 0.2, 0.02) == pytest.approx(0.02)
    assert noise_schedule(99, 100, 0.2, 0.02) == pytest.approx(0.02)


# -- replay -------------------------------------------------------------------

def push_ids(buf, ids):
    for i in ids:
        buf.push(np.full(1, i), np.zeros(1), float(i), np.zeros(1), False)


def draw_many(buf, n, rng):
    # batches may not exceed the fill level, so draw in full-buffer chunks
    out = [buf.sample(len(buf), rng).r for _ in range(-(-n // len(buf)))]
    return np.concatenate(out)[:n]


def test_replay_ring_evicts_oldest():
    buf = ReplayBuffer(2, 1, 1)
    push_ids(buf, [1, 2, 3])
    assert len(buf) == 2 and sorted(buf.r.tolist()) == [2.0, 3.0]


def test_replay_not_ready():
    buf = ReplayBuffer(10, 1, 1)
    push_ids(buf, [1])
    with pytest.raises(ReplayNotReadyError):
        buf.sample(2, np.random.default_rng(0))


def test_replay_seeded_sampling():
    buf = ReplayBuffer(10, 1, 1)
    push_ids(buf, range(10))
    a = buf.sample(5, np.random.default_rng(7))
    b = buf.sample(5, np.random.default_rng(7))
    assert np.array_equal(a.r, b.r)


def test_replay_uniform_frequencies():
    buf = ReplayBuffer(10, 1, 1)
    push_ids(buf, range(10))
    draws = draw_many(buf, 100_000, np.random.default_rng(0)).astype(int)
    freq = np.bincount(draws, minlength=10) / draws.size
    assert np.all(np.abs(freq - 0.1) < 0.01)


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 20), st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_replay_samples_only_live_items(capacity, n, seed):
    buf = ReplayBuffer(capacity, 1, 1)
    push_ids(buf, range(n))
    live = set(range(max(0, n - capacity), n))
    batch = buf.sample(min(len(buf), 8), np.random.default_rng(seed))
    assert set(batch.r.astype(int).tolist()) <= live


@settings(max_examples=1000, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_replay_uniform_property(capacity, seed):
    # every live slot is drawn with probability 1/size; check the mean draw index
    buf = ReplayBuffer(capacity, 1, 1)
    push_ids(buf, range(capacity + seed % capacity))
    n = 4000
    draws = draw_many(buf, n, np.random.default_rng(seed))
    lo = seed % capacity
    values = np.arange(lo, lo + capacity)
    sd = values.std() / math.sqrt(n)
    assert abs(draws.mean() - values.mean()) < 5 * sd


# -- baselines ----------------------------------------------------------------

def test_classical_selects_everything():
    beta = baseline_classical(3)
    assert beta.tolist() == [1, 1, 1]
    assert threshold_select(beta, 0.5).tolist() == [1, 1, 1]
    I = np.array([0.2, 0.7, 1.0])
    assert compute_relevance(I, threshold_select(beta, 0.5)) == \
        pytest.approx(I.sum() / (np.linalg.norm(I) * math.sqrt(3)), abs=TOL)


def test_random_selection_frequency():
    rng = np.random.default_rng(0)
    alphas = np.array([threshold_select(baseline_random(4, rng), 0.5) for _ in range(100_000)])
    assert np.all(np.abs(alphas.mean(axis=0) - 0.5) < 0.01)
    assert np.array_equal(baseline_random(4, np.random.default_rng(1)),
                          baseline_random(4, np.random.default_rng(1)))
    assert baseline_random(0, rng).shape == (0,)


def test_fixed_by_column_means():
    cfg = small_env()
    cfg.importance = np.array([[1.0, 0.1, 0.6], [0.8, 0.3, 0.8]])
    cfg.dynamics = ActivityDynamics.sticky(2)
    assert cfg.importance.mean(axis=0) == pytest.approx([0.9, 0.2, 0.7])
    assert np.flatnonzero(baseline_fixed(cfg, 2)).tolist() == [0, 2]
    assert np.array_equal(baseline_fixed(cfg, 3), baseline_classical(3))
    assert not baseline_fixed(cfg, 0).any()
    with pytest.raises(ValueError):
        baseline_fixed(cfg, 4)


def test_make_policy_unknown():
    with pytest.raises(ValueError):
        make_policy("greedy", small_env())
    with pytest.raises(ValueError):
        make_policy("daahm", small_env())


# -- loops --------------------------------------------------------------------

def test_train_zero_episodes():
    _, hist = train(small_env(), AgentConfig(), 0)
    assert len(hist) == 0


def test_train_deterministic():
    cfg = AgentConfig(warmup=16, batch_size=8, hidden=8)
    a1, h1 = train(small_env(), cfg, 12, seed=3)
    a2, h2 = train(small_env(), cfg, 12, seed=3)
    for name in ("mean_reward", "critic_loss", "actor_objective", "noise"):
        assert np.array_equal(getattr(h1, name), getattr(h2, name), equal_nan=True)
    assert a1.actor == a2.actor and a1.critic == a2.critic
    _, h3 = train(small_env(), cfg, 12, seed=4)
    assert h3.mean_reward != h1.mean_reward


def test_evaluate_single_slot():
    env = EnvConfig([[1.0, 0.5]], [DeviceSpec(1e8)], [1e5, 4e5], [1e5, 4e5], [100, 100],
                    ActivityDynamics("iid", [1.0]), T=1)
    total, rows = evaluate(make_policy("fixed", env, fixed_k=1), env, 1)
    assert len(rows) == 1 and rows[0].alpha_mask == 1
    assert total == rows[0].reward == pytest.approx(2 / math.sqrt(5) - 0.05005, abs=TOL)


def test_evaluate_classical_matches_recomputation():
    env = small_env(T=6)
    total, rows = evaluate(make_policy("classical", env), env, 4, seed=2)
    assert total == pytest.approx(sum(r.reward for r in rows), abs=1e-12)
    for r in rows:
        assert r.relevance == pytest.approx(
            compute_relevance(env.importance[r.activity], np.ones(3)), abs=TOL)
        assert r.reward == pytest.approx(r.relevance - env.lam * r.cost, abs=TOL)


def test_strategies_share_traces():
    env = small_env(T=8)
    _, a = evaluate(make_policy("classical", env), env, 3, seed=9)
    _, b = evaluate(make_policy("random", env), env, 3, seed=9)
    assert [r.activity for r in a] == [r.activity for r in b]
