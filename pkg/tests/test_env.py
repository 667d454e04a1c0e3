import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daahm.env import (ActivityDynamics, CapacityError, EnvConfig, EnvState,
                       EpisodeExhaustedError, MonitoringEnv, brute_force_best, env_reset,
                       env_step, sample_tasks, step_reward, trace_next)
from daahm.model import DeviceSpec, TaskSpec, alpha_mask, mask_to_alpha

TOL = 1e-9


def two_metric_config(lam=1.0, T=5):
    """I=(1, 0.5), D=(1e5, 4e5), c=(100, 100), one device at 1e8 Hz."""
    return EnvConfig(
        importance=[[1.0, 0.5]],
        devices=[DeviceSpec(1e8, rho=1e-27, zeta=3, mu=0.5)],
        d_min=[1e5, 4e5], d_max=[1e5, 4e5], c=[100, 100],
        dynamics=ActivityDynamics("iid", [1.0]), lam=lam, T=T)


def hand_utility(alpha):
    # independent re-derivation of the two-metric chain
    I = (1.0, 0.5)
    t = (alpha[0] * 1e5 * 100 + alpha[1] * 4e5 * 100) / 1e8
    ec = 1e-27 * 1e8 ** 3 * t
    cost = 0.5 * ec + 0.5 * t
    k = sum(alpha)
    rel = 0.0 if k == 0 else (I[0] * alpha[0] + I[1] * alpha[1]) / (math.sqrt(1.25) * math.sqrt(k))
    return rel - cost


def test_two_metric_hand_values():
    assert hand_utility((0, 0)) == 0.0
    assert hand_utility((1, 0)) == pytest.approx(2 / math.sqrt(5) - 0.05005, abs=1e-15)
    # published to five places from R rounded to 0.8944
    assert hand_utility((1, 0)) == pytest.approx(0.84435, abs=1e-4)
    assert hand_utility((0, 1)) == pytest.approx(0.24701, abs=1e-5)
    assert hand_utility((1, 1)) == pytest.approx(0.69843, abs=1e-5)


def test_brute_force_two_metric_oracle():
    cfg = two_metric_config()
    state = EnvState(0, 1e8, 0)
    task = TaskSpec((1e5, 4e5), (100, 100))
    alpha, u = brute_force_best(state, task, cfg)
    assert alpha.tolist() == [1, 0]
    assert u == pytest.approx(hand_utility((1, 0)), abs=TOL)
    for mask in range(4):
        a = mask_to_alpha(mask, 2)
        assert step_reward(state, a.astype(float), task, cfg)[0] == \
            pytest.approx(hand_utility(tuple(a)), abs=TOL)


def test_env_step_two_metric_reward():
    cfg = two_metric_config()
    state, rng = env_reset(cfg, 0, seed=3)
    out = env_step(state, [0.9, 0.1], cfg, rng)
    assert out.reward == pytest.approx(hand_utility((1, 0)), abs=TOL)
    assert out.info.alpha.tolist() == [1, 0]
    assert out.next_state.slot == 1


def test_below_threshold_gives_zero_reward():
    cfg = two_metric_config()
    state, rng = env_reset(cfg, 0, seed=0)
    out = env_step(state, [0.5, 0.2], cfg, rng)
    assert out.reward == 0.0 and out.info.cost == 0.0


def test_lambda_zero_maximises_relevance():
    cfg = two_metric_config(lam=0.0)
    alpha, u = brute_force_best(EnvState(0, 1e8, 0), TaskSpec((1e5, 4e5), (100, 100)), cfg)
    # (1,0) has cosine 2/sqrt(5) ~ 0.894, (1,1) has ~0.949
    assert alpha.tolist() == [1, 1]
    assert u == pytest.approx(1.5 / (math.sqrt(1.25) * math.sqrt(2)), abs=TOL)


def test_single_metric_oracle_selects_it():
    cfg = EnvConfig([[1.0]], [DeviceSpec(1e9)], [1e3], [1e3], [10.0],
                    ActivityDynamics("iid", [1.0]))
    alpha, u = brute_force_best(EnvState(0, 1e9, 0), TaskSpec((1e3,), (10.0,)), cfg)
    assert alpha.tolist() == [1] and 0 < u < 1


def test_brute_force_tie_break_lowest_encoding():
    # two identical metrics, each costing ~0.4: {0} and {1} tie (~0.3067) and beat {0,1}
    cfg = EnvConfig([[1.0, 1.0]], [DeviceSpec(1e8)], [4e5, 4e5], [4e5, 4e5], [200, 200],
                    ActivityDynamics("iid", [1.0]))
    task = TaskSpec((4e5, 4e5), (200, 200))
    state = EnvState(0, 1e8, 0)
    single = [step_reward(state, mask_to_alpha(m, 2).astype(float), task, cfg)[0]
              for m in (1, 2, 3)]
    assert single[0] == single[1] > single[2]
    alpha, u = brute_force_best(state, task, cfg)
    assert alpha_mask(alpha) == 1
    assert u == pytest.approx(1 / math.sqrt(2) - 0.4004, abs=TOL)


def test_brute_force_refuses_large_m():
    M = 21
    cfg = EnvConfig(np.ones((1, M)), [DeviceSpec(1e9)], np.ones(M), np.ones(M), np.ones(M),
                    ActivityDynamics("iid", [1.0]))
    with pytest.raises(CapacityError):
        brute_force_best(EnvState(0, 1e9, 0), TaskSpec(np.ones(M), np.ones(M)), cfg)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_oracle_dominates_every_selection(M, seed):
    rng = np.random.default_rng(seed)
    imp = rng.uniform(0, 1, size=(2, M))
    imp[:, 0] = 1.0
    cfg = EnvConfig(imp, [DeviceSpec(rng.uniform(1e8, 2e9))], np.full(M, 1e4),
                    np.full(M, 8e5), rng.uniform(50, 300, M), ActivityDynamics.sticky(2))
    state = EnvState(int(rng.integers(2)), cfg.devices[0].f, 0)
    task = sample_tasks(cfg, rng)
    _, best = brute_force_best(state, task, cfg)
    for mask in range(1 << M):
        u, _ = step_reward(state, mask_to_alpha(mask, M).astype(float), task, cfg)
        assert u <= best + 1e-12


def test_reward_decomposes_into_relevance_and_cost():
    cfg = two_metric_config(lam=2.5)
    state, rng = env_reset(cfg, 0, seed=1)
    out = env_step(state, [1.0, 1.0], cfg, rng)
    assert out.reward == pytest.approx(out.info.relevance - 2.5 * out.info.cost, abs=TOL)
    assert out.info.cost == pytest.approx(0.5 * out.info.energy + 0.5 * out.info.delay, abs=TOL)


# -- reset, traces, tasks -----------------------------------------------------

def desk_like(G=4, kind="iid"):
    dyn = ActivityDynamics("iid", np.full(G, 1 / G)) if kind == "iid" else \
        ActivityDynamics.sticky(G)
    return EnvConfig(np.eye(G), [DeviceSpec(4e8), DeviceSpec(8e8)], np.full(G, 1e5),
                     np.full(G, 4e5), np.full(G, 100.0), dyn, T=10)


def test_reset_deterministic_and_in_range():
    cfg = desk_like()
    a, _ = env_reset(cfg, 1, seed=42)
    b, _ = env_reset(cfg, 1, seed=42)
    assert a == b
    assert 0 <= a.activity < 4 and a.f == 8e8 and a.slot == 0
    # replaying the seeded generator gives the same draw
    expected = int(np.searchsorted(np.cumsum(np.full(4, 0.25)),
                                   np.random.default_rng(42).random(), side="right"))
    assert a.activity == expected
    with pytest.raises(ValueError):
        env_reset(cfg, 2, seed=0)


def test_reset_single_activity():
    cfg = EnvConfig([[1.0]], [DeviceSpec(1e8)], [1], [1], [1], ActivityDynamics("iid", [1.0]))
    assert env_reset(cfg, 0, seed=9)[0].activity == 0


def test_trace_next_deterministic_rows():
    rng = np.random.default_rng(0)
    ident = ActivityDynamics("markov", np.eye(3))
    assert all(trace_next(2, ident, rng) == 2 for _ in range(100))
    det = ActivityDynamics("markov", [[0, 1, 0], [1, 0, 0], [0, 0, 1]])
    assert all(trace_next(0, det, rng) == 1 for _ in range(100))


def test_trace_next_iid_frequencies():
    rng = np.random.default_rng(1)
    dyn = ActivityDynamics("iid", [0.5, 0.5])
    draws = np.array([trace_next(0, dyn, rng) for _ in range(100_000)])
    assert abs(draws.mean() - 0.5) < 0.01


def test_markov_row_must_sum_to_one():
    with pytest.raises(ValueError, match="row 1"):
        ActivityDynamics("markov", [[1.0, 0.0], [0.5, 0.4]])


def test_sample_tasks():
    rng = np.random.default_rng(2)
    cfg = desk_like()
    cfg.d_min = np.array([1e5, 3e5, 0, 0.0])
    cfg.d_max = np.array([4e5, 3e5, 0, 0.0])
    draws = np.array([sample_tasks(cfg, rng).D for _ in range(100_000)])
    assert abs(draws[:, 0].mean() - 2.5e5) < 0.02 * 2.5e5
    assert np.all(draws[:, 1] == 3e5)
    assert np.all(draws[:, 2:] == 0)
    assert draws[:, 0].min() >= 1e5 and draws[:, 0].max() <= 4e5


def test_episode_exhaustion():
    cfg = two_metric_config(T=3)
    env = MonitoringEnv(cfg)
    env.reset(0)
    for _ in range(3):
        env.step([1, 1])
    assert env.done
    with pytest.raises(EpisodeExhaustedError):
        env.step([1, 1])


def test_trace_independent_of_policy():
    cfg = desk_like(kind="markov")
    traces = []
    for beta in (np.zeros(4), np.ones(4)):
        env = MonitoringEnv(cfg, 0)
        env.reset(5)
        seq = []
        while not env.done:
            seq.append(env.state.activity)
            env.step(beta)
        traces.append(seq)
    assert traces[0] == traces[1]


def test_static_mode_holds_activity():
    env = MonitoringEnv(desk_like(kind="iid"), 0, mode="static")
    first = env.reset(11).activity
    while not env.done:
        assert env.step(np.ones(4)).next_state.activity == first
