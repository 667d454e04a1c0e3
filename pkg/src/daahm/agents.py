"""DDPG learner, the three comparison policies, and train / evaluate loops."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .env import EnvConfig, EnvState, MonitoringEnv
from .model import alpha_mask
from .nn import Adam, Mlp, PoisonedUpdateError, backward, forward, mlp_init, soft_update

log = logging.getLogger(__name__)


class ReplayNotReadyError(RuntimeError):
    pass


@dataclass
class AgentConfig:
    hidden: int = 64
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 64
    buffer_capacity: int = 50_000
    warmup: int = 1_000
    noise_start: float = 0.2
    noise_end: float = 0.02
    update_every: int = 1
    # L2 weight on the actor's pre-sigmoid outputs; keeps the sigmoid out of saturation
    logit_l2: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("buffer capacity must hold at least one batch")
        if self.update_every < 1:
            raise ValueError("update_every must be >= 1")


def encode_state(state: EnvState, G: int, f_max: float) -> np.ndarray:
    """One-hot activity followed by f / f_max."""
    s = np.zeros(G + 1)
    s[state.activity] = 1.0
    s[G] = state.f / f_max
    return s


class Transition(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored column-wise."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, s, a, r, s2, done) -> None:
        i = self.cursor
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < batch:
            raise ReplayNotReadyError(f"buffer holds {self.size} transitions, need {batch}")
        # slots are ordered oldest-first once the ring has wrapped
        return (rng.integers(0, self.size, size=batch) + (self.cursor if self.size == self.capacity
                                                          else 0)) % self.capacity

    def sample(self, batch: int, rng: np.random.Generator) -> Transition:
        """Uniform sample with replacement."""
        idx = self.indices(batch, rng)
        return Transition(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx])


class DdpgAgent:
    def __init__(self, state_dim: int, action_dim: int, cfg: AgentConfig | None = None, seed=0):
        self.cfg = cfg or AgentConfig()
        self.state_dim, self.action_dim = state_dim, action_dim
        rng = np.random.default_rng(seed)
        h = self.cfg.hidden
        self.actor = mlp_init([state_dim, h, action_dim], ["relu", "sigmoid"], rng)
        self.critic = mlp_init([state_dim + action_dim, h, 1], ["relu", "identity"], rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = Adam(lr=self.cfg.actor_lr)
        self.critic_opt = Adam(lr=self.cfg.critic_lr)
        self.last_td_target: np.ndarray | None = None

    @property
    def gamma(self):
        return self.cfg.gamma

    @property
    def tau(self):
        return self.cfg.tau

    def act(self, s, noise_scale: float = 0.0, rng: np.random.Generator | None = None):
        beta = forward(self.actor, s)[0]
        if noise_scale > 0:
            beta = beta + rng.normal(0.0, noise_scale, size=beta.shape)
        return np.clip(beta, 0.0, 1.0)

    def td_target(self, r, s2, done) -> np.ndarray:
        a2 = forward(self.target_actor, s2)[0]
        q2 = forward(self.target_critic, np.concatenate([s2, a2], axis=1))[0][:, 0]
        return r + self.gamma * (1.0 - done) * q2

    def update(self, batch: Transition) -> tuple[float, float]:
        """One critic step, one actor step, then soft target updates.

        Returns ``(critic_loss, actor_objective)`` where the objective is the
        batch mean of Q(s, actor(s)) before the actor step.
        """
        s, a, r, s2, done = batch
        n = len(r)
        if n == 0:
            raise ValueError("empty batch")
        y = self.td_target(r, s2, done)
        self.last_td_target = y

        q, cache = forward(self.critic, np.concatenate([s, a], axis=1))
        err = q[:, 0] - y
        critic_loss = float(np.mean(err * err))
        if not np.isfinite(critic_loss):
            raise PoisonedUpdateError(
                f"critic loss is {critic_loss}; |y| max {np.max(np.abs(y)):.3g}, "
                f"|q| max {np.max(np.abs(q)):.3g}")
        grads, _ = backward(self.critic, cache, (2.0 / n) * err[:, None])
        self.critic_opt.apply([self.critic.flat], [self.critic.flatten_grads(grads)])

        beta, a_cache = forward(self.actor, s)
        q_pi, c_cache = forward(self.critic, np.concatenate([s, beta], axis=1))
        objective = float(np.mean(q_pi))
        # ascend Q: loss = -mean(Q), gradient flows through the critic's action input
        _, dq_dx = backward(self.critic, c_cache, np.full((n, 1), -1.0 / n))
        dz = None
        if self.cfg.logit_l2 > 0:
            dz = (2.0 * self.cfg.logit_l2 / n) * a_cache.pre[-1]
        a_grads, _ = backward(self.actor, a_cache, dq_dx[:, self.state_dim:], dz)
        self.actor_opt.apply([self.actor.flat], [self.actor.flatten_grads(a_grads)])

        soft_update(self.target_critic, self.critic, self.tau)
        soft_update(self.target_actor, self.actor, self.tau)
        return critic_loss, objective


# -- baselines -------------------------------------------------------------

def baseline_classical(M: int) -> np.ndarray:
    return np.ones(M)


def baseline_random(M: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=M)


def baseline_fixed(config: EnvConfig, k: int) -> np.ndarray:
    """Weight 1 on the k metrics with the highest mean importance."""
    M = config.M
    if not 0 <= k <= M:
        raise ValueError(f"k must be in [0, {M}], got {k}")
    order = np.argsort(-config.importance.mean(axis=0), kind="stable")
    beta = np.zeros(M)
    beta[order[:k]] = 1.0
    return beta


# A policy maps (state, rng) to a weight vector.
Policy = Callable[[EnvState, np.random.Generator], np.ndarray]


def make_policy(name: str, config: EnvConfig, agent: DdpgAgent | None = None,
                fixed_k: int | None = None) -> Policy:
    if name == "daahm":
        if agent is None:
            raise ValueError("the daahm strategy needs a trained agent")
        G, f_max = config.G, config.f_max
        return lambda state, rng: agent.act(encode_state(state, G, f_max))
    if name == "classical":
        beta = baseline_classical(config.M)
        return lambda state, rng: beta
    if name == "random":
        return lambda state, rng: baseline_random(config.M, rng)
    if name == "fixed":
        beta = baseline_fixed(config, config.M // 2 if fixed_k is None else fixed_k)
        return lambda state, rng: beta
    raise ValueError(f"unknown strategy {name!r}")


# -- loops -----------------------------------------------------------------

def episode_seed(seed: int, episode: int, stream: int = 0) -> np.random.SeedSequence:
    """Seed for one episode, independent of which policy is being run."""
    return np.random.SeedSequence([seed, stream, episode])


@dataclass
class History:
    mean_reward: list[float] = field(default_factory=list)   # per-slot average
    total_reward: list[float] = field(default_factory=list)  # episode sum
    critic_loss: list[float] = field(default_factory=list)
    actor_objective: list[float] = field(default_factory=list)
    noise: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.mean_reward)


def noise_schedule(episode: int, episodes: int, start: float, end: float) -> float:
    """Linear decay from ``start`` to ``end`` over the first half of training."""
    half = max(episodes // 2, 1)
    frac = min(episode / half, 1.0)
    return start + (end - start) * frac


def train(config: EnvConfig, cfg: AgentConfig, episodes: int, seed: int = 0,
          mode: str = "dynamic", agent: DdpgAgent | None = None,
          progress: Callable[[int, History], None] | None = None
          ) -> tuple[DdpgAgent, History]:
    """Train a shared DDPG agent; episode e runs on device e % N."""
    G, M = config.G, config.M
    agent = agent or DdpgAgent(G + 1, M, cfg, seed=episode_seed(seed, 0, stream=1))
    rng = np.random.default_rng(episode_seed(seed, 0, stream=2))
    buf = ReplayBuffer(cfg.buffer_capacity, G + 1, M)
    envs = [MonitoringEnv(config, d, mode) for d in range(config.N)]
    hist = History()
    f_max = config.f_max
    steps = 0
    for ep in range(episodes):
        env = envs[ep % config.N]
        state = env.reset(episode_seed(seed, ep, stream=3))
        s = encode_state(state, G, f_max)
        noise = noise_schedule(ep, episodes, cfg.noise_start, cfg.noise_end)
        total, losses, objs = 0.0, [], []
        while not env.done:
            beta = agent.act(s, noise, rng)
            out = env.step(beta)
            s2 = encode_state(out.next_state, G, f_max)
            # the process never terminates; episode ends are truncations, so keep bootstrapping
            buf.push(s, beta, out.reward, s2, False)
            total += out.reward
            s = s2
            steps += 1
            if len(buf) >= max(cfg.warmup, cfg.batch_size) and steps % cfg.update_every == 0:
                try:
                    cl, obj = agent.update(buf.sample(cfg.batch_size, rng))
                except PoisonedUpdateError as exc:
                    raise PoisonedUpdateError(f"episode {ep}, step {steps}: {exc}") from exc
                losses.append(cl)
                objs.append(obj)
        hist.mean_reward.append(total / config.T)
        hist.total_reward.append(total)
        hist.critic_loss.append(float(np.mean(losses)) if losses else float("nan"))
        hist.actor_objective.append(float(np.mean(objs)) if objs else float("nan"))
        hist.noise.append(noise)
        if progress is not None:
            progress(ep, hist)
    return agent, hist


class Row(NamedTuple):
    strategy: str
    episode: int
    slot: int
    activity: int
    reward: float
    relevance: float
    cost: float
    alpha_mask: int


def evaluate(policy: Policy, config: EnvConfig, episodes: int, seed: int = 0,
             mode: str = "dynamic", name: str = "policy") -> tuple[float, list[Row]]:
    """Noise-free rollout; evaluation episode e runs on device e % N.

    Environment randomness is seeded per episode from ``seed`` alone, and the
    policy gets its own generator, so all strategies see identical traces.
    """
    rows: list[Row] = []
    total = 0.0
    policy_rng = np.random.default_rng(episode_seed(seed, 0, stream=5))
    for ep in range(episodes):
        env = MonitoringEnv(config, ep % config.N, mode)
        state = env.reset(episode_seed(seed, ep, stream=4))
        while not env.done:
            out = env.step(policy(state, policy_rng))
            rows.append(Row(name, ep, state.slot, state.activity, out.reward,
                            out.info.relevance, out.info.cost, alpha_mask(out.info.alpha)))
            total += out.reward
            state = out.next_state
    return total, rows
