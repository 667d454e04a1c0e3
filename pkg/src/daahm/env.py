"""Per-device monitoring environment with synthetic activity traces.

One :class:`MonitoringEnv` models one wearable. Each slot the device sees
its wearer's activity and its own CPU frequency, picks metric weights
``beta``, and is rewarded with relevance minus weighted cost. Activities
follow an iid or first-order Markov process; datasizes are drawn uniformly
per metric every slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import (DeviceSpec, TaskSpec, compute_cost, compute_delay, compute_energy,
                    compute_relevance, per_step_utility, threshold_select)

MAX_ENUMERATION_METRICS = 20


class EpisodeExhaustedError(RuntimeError):
    pass


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class ActivityDynamics:
    """``kind="iid"``: ``probs`` is a length-G distribution.
    ``kind="markov"``: ``probs`` is a row-stochastic GxG matrix and
    ``initial`` the distribution of the first activity (uniform if None).
    """

    kind: str
    probs: np.ndarray
    initial: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if self.kind == "iid":
            if probs.ndim != 1:
                raise ValueError("iid dynamics need a probability vector")
            _check_distribution(probs, "iid distribution")
        elif self.kind == "markov":
            if probs.ndim != 2 or probs.shape[0] != probs.shape[1]:
                raise ValueError(f"transition matrix must be square, got {probs.shape}")
            for g, row in enumerate(probs):
                _check_distribution(row, f"transition matrix row {g}")
        else:
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if self.initial is not None:
            init = np.asarray(self.initial, dtype=np.float64)
            if init.shape != (self.G,):
                raise ValueError(f"initial distribution must have {self.G} entries")
            _check_distribution(init, "initial distribution")
            object.__setattr__(self, "initial", init)
        object.__setattr__(self, "_cdf", np.cumsum(self.probs, axis=-1))
        object.__setattr__(self, "_init_cdf", np.cumsum(self.initial_distribution()))

    @property
    def G(self) -> int:
        return self.probs.shape[0]

    def initial_distribution(self) -> np.ndarray:
        if self.kind == "iid":
            return self.probs
        if self.initial is not None:
            return self.initial
        return np.full(self.G, 1.0 / self.G)

    @classmethod
    def sticky(cls, G: int, stay: float = 0.9) -> "ActivityDynamics":
        """Markov chain that keeps the activity with prob ``stay``, else jumps uniformly."""
        if G == 1:
            return cls("markov", np.ones((1, 1)))
        mat = np.full((G, G), (1.0 - stay) / (G - 1))
        np.fill_diagonal(mat, stay)
        return cls("markov", mat)


def _check_distribution(p, what):
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{what} must be non-negative and sum to 1 (sums to {p.sum():.12g})")


@dataclass
class EnvConfig:
    importance: np.ndarray                 # G x M, entries in [0, 1]
    devices: list[DeviceSpec]
    d_min: np.ndarray                      # bits, per metric
    d_max: np.ndarray
    c: np.ndarray                          # cycles per bit, per metric
    dynamics: ActivityDynamics
    theta: float = 0.5
    lam: float = 1.0
    T: int = 200
    seed: int = 0
    activity_names: list[str] = field(default_factory=list)
    metric_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.importance = np.asarray(self.importance, dtype=np.float64)
        self.d_min = np.asarray(self.d_min, dtype=np.float64)
        self.d_max = np.asarray(self.d_max, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        self.devices = list(self.devices)
        validate_importance(self.importance)
        G, M = self.importance.shape
        for name in ("d_min", "d_max", "c"):
            if getattr(self, name).shape != (M,):
                raise ValueError(f"{name} must have {M} entries")
        if np.any(self.d_min < 0) or np.any(self.c < 0):
            raise ValueError("datasizes and cycles per bit must be non-negative")
        if np.any(self.d_min > self.d_max):
            raise ValueError("d_min must not exceed d_max")
        if self.dynamics.G != G:
            raise ValueError(f"dynamics cover {self.dynamics.G} activities, importance has {G}")
        if not self.devices:
            raise ValueError("need at least one device")
        if self.T < 1:
            raise ValueError("episode length T must be >= 1")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must be in (0, 1)")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    @property
    def G(self) -> int:
        return self.importance.shape[0]

    @property
    def M(self) -> int:
        return self.importance.shape[1]

    @property
    def N(self) -> int:
        return len(self.devices)

    @property
    def f_max(self) -> float:
        return max(d.f for d in self.devices)


def validate_importance(mat) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.size == 0:
        raise ValueError(f"importance must be a non-empty G x M matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)) or np.any(mat < 0) or np.any(mat > 1):
        bad = np.argwhere(~((mat >= 0) & (mat <= 1)))[0]
        raise ValueError(f"importance entry {tuple(int(i) for i in bad)} outside [0, 1]")
    for g, row in enumerate(mat):
        if not np.any(row > 0):
            raise ValueError(f"importance row {g} has no positive entry")
    return mat


class EnvState(NamedTuple):
    activity: int
    f: float
    slot: int


class StepInfo(NamedTuple):
    relevance: float
    delay: float
    energy: float
    cost: float
    alpha: np.ndarray


class StepOutcome(NamedTuple):
    next_state: EnvState
    reward: float
    info: StepInfo


def _draw(cdf: np.ndarray, rng: np.random.Generator) -> int:
    # inverse-CDF draw; zero-probability entries have empty intervals
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)


def trace_next(current: int, dynamics: ActivityDynamics, rng: np.random.Generator) -> int:
    """Next activity from the iid distribution or row ``current`` of the chain."""
    if dynamics.kind == "iid":
        return _draw(dynamics._cdf, rng)
    return _draw(dynamics._cdf[current], rng)


def sample_tasks(config: EnvConfig, rng: np.random.Generator) -> TaskSpec:
    """Datasizes uniform on [d_min, d_max] per metric; cycles per bit fixed."""
    return TaskSpec.trusted(rng.uniform(config.d_min, config.d_max), config.c)


def env_reset(config: EnvConfig, device: int, seed) -> tuple[EnvState, np.random.Generator]:
    """Initial state for ``device`` plus the generator that drives its episode."""
    if not 0 <= device < config.N:
        raise ValueError(f"device {device} out of range for {config.N} devices")
    rng = np.random.default_rng(seed)
    activity = _draw(config.dynamics._init_cdf, rng)
    return EnvState(activity, config.devices[device].f, 0), rng


def _device_for(config: EnvConfig, f: float) -> DeviceSpec:
    for d in config.devices:
        if d.f == f:
            return d
    raise ValueError(f"no device with frequency {f}")


def step_reward(state: EnvState, beta, task: TaskSpec, config: EnvConfig,
                dev: DeviceSpec | None = None) -> tuple[float, StepInfo]:
    """Reward of playing ``beta`` in ``state`` against a fixed task draw."""
    dev = dev or _device_for(config, state.f)
    alpha = threshold_select(beta, config.theta)
    t = compute_delay(alpha, task, dev.f)
    ec = compute_energy(dev, t)
    cost = compute_cost(dev.mu, ec, t)
    rel = compute_relevance(config.importance[state.activity], alpha)
    return per_step_utility(rel, cost, config.lam), StepInfo(rel, t, ec, cost, alpha)


def env_step(state: EnvState, beta, config: EnvConfig, rng: np.random.Generator,
             static: bool = False, dev: DeviceSpec | None = None) -> StepOutcome:
    """Apply ``beta`` for one slot.

    The generator is consumed in a fixed order (task draw, then next
    activity) that does not depend on ``beta``, so every policy facing the
    same seed sees the same trace and the same tasks.
    """
    if state.slot >= config.T:
        raise EpisodeExhaustedError(f"episode ended after {config.T} slots")
    task = sample_tasks(config, rng)
    reward, info = step_reward(state, beta, task, config, dev)
    nxt = trace_next(state.activity, config.dynamics, rng)
    if static:
        nxt = state.activity
    return StepOutcome(EnvState(nxt, state.f, state.slot + 1), reward, info)


class MonitoringEnv:
    """Gym-style wrapper: ``reset(seed)`` then ``step(beta)`` until ``done``.

    ``mode="static"`` holds the activity drawn at reset for the whole episode.
    """

    def __init__(self, config: EnvConfig, device: int = 0, mode: str = "dynamic"):
        if mode not in ("static", "dynamic"):
            raise ValueError(f"mode must be 'static' or 'dynamic', got {mode!r}")
        if not 0 <= device < config.N:
            raise ValueError(f"device {device} out of range for {config.N} devices")
        self.config = config
        self.device = device
        self.mode = mode
        self.spec = config.devices[device]
        self.state: EnvState | None = None
        self.rng: np.random.Generator | None = None
        self.last_task: TaskSpec | None = None

    def reset(self, seed=None) -> EnvState:
        self.state, self.rng = env_reset(self.config, self.device, seed)
        return self.state

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.slot >= self.config.T

    def step(self, beta) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        out = env_step(self.state, beta, self.config, self.rng,
                       static=self.mode == "static", dev=self.spec)
        self.state = out.next_state
        return out


def brute_force_best(state: EnvState, task: TaskSpec, config: EnvConfig,
                     dev: DeviceSpec | None = None) -> tuple[np.ndarray, float]:
    """Best selection for one slot by trying all 2**M subsets.

    Ties go to the lowest binary encoding (metric 0 least significant).
    """
    M = config.M
    if M > MAX_ENUMERATION_METRICS:
        raise CapacityError(f"refusing to enumerate 2**{M} selections (limit M <= "
                            f"{MAX_ENUMERATION_METRICS})")
    dev = dev or _device_for(config, state.f)
    importance = config.importance[state.activity]
    best_mask, best_u = 0, -np.inf
    for mask in range(1 << M):
        alpha = np.array([(mask >> i) & 1 for i in range(M)], dtype=np.int64)
        t = compute_delay(alpha, task, dev.f)
        cost = compute_cost(dev.mu, compute_energy(dev, t), t)
        u = per_step_utility(compute_relevance(importance, alpha), cost, config.lam)
        if u > best_u:
            best_mask, best_u = mask, u
    return np.array([(best_mask >> i) & 1 for i in range(M)], dtype=np.int64), best_u
