"""Activity-aware health-metric selection: environment, DDPG agent, baselines."""

from .agents import AgentConfig, DdpgAgent, ReplayBuffer, evaluate, make_policy, train
from .env import ActivityDynamics, EnvConfig, MonitoringEnv, brute_force_best
from .model import (DeviceSpec, TaskSpec, compute_cost, compute_delay, compute_energy,
                    compute_relevance, per_step_utility, threshold_select)

__version__ = "0.1.0"
