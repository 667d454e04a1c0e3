"""Experiment drivers shared by the CLI, the scripts and the acceptance tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .agents import DdpgAgent, History, Row, evaluate, make_policy, train
from .config import ExperimentConfig
from .env import EnvState, brute_force_best, sample_tasks, step_reward
from .model import alpha_mask

log = logging.getLogger(__name__)

STRATEGIES = ("daahm", "fixed", "classical", "random")


def train_agent(cfg: ExperimentConfig,
                progress: Callable[[int, History], None] | None = None
                ) -> tuple[DdpgAgent, History]:
    return train(cfg.train_env(), cfg.agent, cfg.episodes, seed=cfg.seed, mode=cfg.mode,
                 progress=progress)


def run_strategy(cfg: ExperimentConfig, name: str, agent: DdpgAgent | None = None,
                 episodes: int | None = None) -> tuple[float, list[Row]]:
    policy = make_policy(name, cfg.env, agent, cfg.k_fixed)
    return evaluate(policy, cfg.env, cfg.eval_episodes if episodes is None else episodes,
                    seed=cfg.seed, mode=cfg.mode, name=name)


@dataclass
class Comparison:
    totals: dict[str, float]
    rows: dict[str, list[Row]]

    def mean_per_slot(self, name: str) -> float:
        return self.totals[name] / max(len(self.rows[name]), 1)

    def ratio(self, a: str, b: str) -> float:
        return self.totals[a] / self.totals[b]

    def summary(self) -> list[tuple]:
        fixed = self.totals.get("fixed")
        out = []
        for name, total in self.totals.items():
            ratio = total / fixed if fixed else float("nan")
            out.append((name, total, self.mean_per_slot(name), ratio))
        return out

    def timeseries(self) -> list[tuple]:
        """Per slot index, each strategy's reward averaged over episodes."""
        names = list(self.totals)
        T = 1 + max((r.slot for rows in self.rows.values() for r in rows), default=-1)
        sums = {n: np.zeros(T) for n in names}
        counts = {n: np.zeros(T) for n in names}
        for n in names:
            for r in self.rows[n]:
                sums[n][r.slot] += r.reward
                counts[n][r.slot] += 1
        return [(t, *(float(sums[n][t] / max(counts[n][t], 1)) for n in names))
                for t in range(T)]


def compare(cfg: ExperimentConfig, agent: DdpgAgent,
            strategies=STRATEGIES) -> Comparison:
    """Evaluate every strategy on the same seeded traces and task draws."""
    totals, rows = {}, {}
    for name in strategies:
        totals[name], rows[name] = run_strategy(cfg, name, agent)
        log.info("%-9s cumulative reward %.3f", name, totals[name])
    return Comparison(totals, rows)


@dataclass
class OracleSample:
    device: int
    activity: int
    oracle_mask: int
    oracle_utility: float
    utilities: dict[str, float]
    masks: dict[str, int]


def oracle_samples(cfg: ExperimentConfig, agent: DdpgAgent | None, n: int = 1000,
                   seed: int | None = None, strategies=STRATEGIES) -> list[OracleSample]:
    """Draw ``n`` (device, activity, task) states and score each strategy
    against the exhaustive best selection for that exact task."""
    env = cfg.env
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 6]))
    policy_rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    policies = {s: make_policy(s, env, agent, cfg.k_fixed) for s in strategies
                if s != "daahm" or agent is not None}
    out = []
    for _ in range(n):
        device = int(rng.integers(env.N))
        dev = env.devices[device]
        state = EnvState(int(rng.integers(env.G)), dev.f, 0)
        task = sample_tasks(env, rng)
        best_alpha, best_u = brute_force_best(state, task, env, dev)
        utils, masks = {}, {}
        for name, policy in policies.items():
            u, info = step_reward(state, policy(state, policy_rng), task, env, dev)
            utils[name], masks[name] = u, alpha_mask(info.alpha)
        out.append(OracleSample(device, state.activity, alpha_mask(best_alpha), best_u,
                                utils, masks))
    return out


def oracle_proximity(samples: list[OracleSample], name: str = "daahm",
                     fraction: float = 0.9) -> float:
    """Share of samples where ``name`` reaches ``fraction`` of the best utility."""
    if not samples:
        return float("nan")
    hits = sum(s.utilities[name] >= fraction * s.oracle_utility for s in samples)
    return hits / len(samples)


def moving_average(x, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(x) < window:
        return np.array([])
    c = np.cumsum(np.concatenate([[0.0], x]))
    return (c[window:] - c[:-window]) / window


@dataclass
class ConvergenceReport:
    late_std: float
    spread: float
    late_mean: float
    early_mean: float

    @property
    def stable(self) -> bool:
        return self.late_std < 0.1 * self.spread

    @property
    def improved(self) -> bool:
        return self.late_mean > self.early_mean

    @property
    def converged(self) -> bool:
        return self.stable and self.improved


def convergence_report(episode_rewards, window: int = 100, late: float = 0.2,
                       early: float = 0.1) -> ConvergenceReport:
    """Stability of the moving-average training curve over the final ``late``
    share of episodes, and its level against the first ``early`` share."""
    r = np.asarray(episode_rewards, dtype=np.float64)
    ma = moving_average(r, window)
    if ma.size == 0:
        raise ValueError(f"need at least {window} episodes, got {r.size}")
    # moving-average point i summarises episodes i .. i+window-1
    tail = ma[ma.size - max(int(round(late * r.size)), 1):]
    head = r[:max(int(round(early * r.size)), 1)]
    return ConvergenceReport(float(tail.std()), float(ma.max() - ma.min()),
                             float(tail.mean()), float(head.mean()))
