"""Closed-form monitoring economics: delay, energy, cost, relevance,
threshold selection and per-slot utility.

All functions are pure. Invalid inputs raise ``ValueError``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DeviceSpec:
    """A wearable's CPU frequency (Hz) and energy constants."""

    f: float
    rho: float = 1e-27
    zeta: float = 3.0
    mu: float = 0.5

    def __post_init__(self):
        if not self.f > 0:
            raise ValueError(f"device frequency must be positive, got {self.f}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.zeta >= 2:
            raise ValueError(f"zeta must be >= 2, got {self.zeta}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must be in [0, 1], got {self.mu}")


@dataclass(frozen=True)
class TaskSpec:
    """Per-metric datasize ``D`` (bits) and cycles per bit ``c`` for one slot."""

    D: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.D, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        if D.shape != c.shape or D.ndim != 1:
            raise ValueError(f"D and c must be equal-length vectors, got {D.shape} and {c.shape}")
        if np.any(D < 0) or np.any(c < 0):
            raise ValueError("datasizes and cycles per bit must be non-negative")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "c", c)

    @classmethod
    def trusted(cls, D: np.ndarray, c: np.ndarray) -> "TaskSpec":
        """Build from arrays already known to be valid float64 vectors."""
        task = object.__new__(cls)
        object.__setattr__(task, "D", D)
        object.__setattr__(task, "c", c)
        return task

    @property
    def workload(self) -> np.ndarray:
        """CPU cycles each metric needs this slot."""
        return self.D * self.c


def _vec(x, name):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {v.shape}")
    return v


def compute_delay(alpha, task: TaskSpec, f: float) -> float:
    """Processing time in seconds for the selected metrics on a CPU at ``f`` Hz."""
    alpha = _vec(alpha, "alpha")
    if alpha.shape != task.D.shape:
        raise ValueError(f"selection has {alpha.size} metrics, task has {task.D.size}")
    if not f > 0:
        raise ValueError(f"frequency must be positive, got {f}")
    return float(np.dot(alpha, task.D * task.c) / f)


def compute_energy(dev: DeviceSpec, t: float) -> float:
    """Joules spent computing for ``t`` seconds: rho * f**zeta * t."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return dev.rho * dev.f ** dev.zeta * t


def compute_cost(mu: float, ec: float, t: float) -> float:
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must be in [0, 1], got {mu}")
    if ec < 0 or t < 0:
        raise ValueError("energy and delay must be non-negative")
    return mu * ec + (1.0 - mu) * t


def compute_relevance(importance, alpha) -> float:
    """Cosine similarity between an activity's importance row and a selection.

    An empty selection has relevance 0.
    """
    importance = _vec(importance, "importance")
    alpha = _vec(alpha, "alpha")
    if importance.shape != alpha.shape:
        raise ValueError(f"importance has {importance.size} metrics, selection has {alpha.size}")
    if importance.min() < 0:
        raise ValueError("importance weights must be non-negative")
    norm_i = np.sqrt(np.dot(importance, importance))
    if norm_i == 0:
        raise ValueError("importance row is all zero")
    norm_a = np.sqrt(np.dot(alpha, alpha))
    if norm_a == 0:
        return 0.0
    return float(np.dot(importance, alpha) / (norm_i * norm_a))


def threshold_select(beta, theta: float = 0.5) -> np.ndarray:
    """Binary selection: metric m is monitored iff beta[m] > theta (strictly)."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {theta}")
    beta = _vec(beta, "beta")
    if beta.size and (beta.min() < 0 or beta.max() > 1):
        raise ValueError("weights must lie in [0, 1]")
    return (beta > theta).astype(np.int64)


def per_step_utility(relevance: float, cost: float, lam: float = 1.0) -> float:
    """One device's slot reward: relevance - lam * cost."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    return relevance - lam * cost


def alpha_mask(alpha) -> int:
    """Integer encoding of a selection, metric 0 in the least significant bit."""
    return sum(1 << i for i, a in enumerate(np.asarray(alpha)) if a)


def mask_to_alpha(mask: int, M: int) -> np.ndarray:
    return np.array([(mask >> i) & 1 for i in range(M)], dtype=np.int64)


def evaluate_selection(importance_row, alpha, task: TaskSpec, dev: DeviceSpec,
                       lam: float) -> dict:
    """Relevance, delay, energy, cost and utility of one selection."""
    t = compute_delay(alpha, task, dev.f)
    ec = compute_energy(dev, t)
    cost = compute_cost(dev.mu, ec, t)
    rel = compute_relevance(importance_row, alpha)
    return dict(relevance=rel, delay=t, energy=ec, cost=cost,
                utility=per_step_utility(rel, cost, lam))
