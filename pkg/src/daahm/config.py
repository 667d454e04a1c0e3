"""Experiment configuration: presets, YAML ingestion and the importance CSV.

A config file is YAML; every key is optional and anything omitted comes
from the chosen preset (``full`` unless the file or caller says
otherwise)::

    preset: desk
    seed: 7
    episodes: 3000        # training episodes
    train_slots: 20       # slots per training episode
    eval_episodes: 30     # evaluation episodes (episode e runs device e % N)
    mode: dynamic         # or static
    out: results
    fixed_k: 3            # metrics kept by the Fixed baseline
    env:
      T: 200
      theta: 0.5
      lam: 1.0
      importance_file: my_weights.csv   # or inline `importance: [[...], ...]`
      devices:
        - {f: 4.0e+8, rho: 1.0e-27, zeta: 3.0, mu: 0.5}
      d_min: [...]        # bits, one per metric
      d_max: [...]
      c: [...]            # cycles per bit
      dynamics: {kind: markov, stay: 0.9}
      # or {kind: markov, matrix: [[...]], initial: [...]} / {kind: iid, probs: [...]}
    agent: {hidden: 64, gamma: 0.99, tau: 0.005, actor_lr: 1.0e-4, ...}
"""

from __future__ import annotations

import csv
import dataclasses
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .agents import AgentConfig
from .env import ActivityDynamics, EnvConfig, validate_importance
from .model import DeviceSpec

PRESETS = ("full", "desk")

DESK_ACTIVITIES = ["running", "cycling", "weightlifting", "yoga", "walking", "meditation"]
FULL_ACTIVITIES = [
    "running", "jogging", "cycling", "jumping_rope", "rowing", "dancing",
    "weightlifting", "squats", "push_ups", "pull_ups", "deadlifting", "bench_pressing",
    "yoga", "pilates", "tai_chi", "stretching", "meditation",
    "walking", "gardening", "hiking", "golf", "bowling",
    "football", "basketball", "volleyball", "tennis", "badminton",
    "swimming", "surfing", "diving",
]

# metric -> (mean datasize in bits, cycles per bit); sizes vary +-20% per slot
METRIC_WORKLOADS = {
    "heart_rate": (4.0e5, 150.0),
    "breathing_rate": (2.5e5, 200.0),
    "spo2": (6.0e5, 200.0),
    "hrv": (4.5e5, 200.0),
    "cadence": (3.0e5, 100.0),
    "skin_temp": (1.0e5, 400.0),
    "blood_pressure": (5.0e5, 200.0),
    "step_count": (2.0e5, 100.0),
    "energy_expenditure": (2.5e5, 200.0),
    "ecg": (1.0e6, 150.0),
}
DEVICE_FREQS = (4.0e8, 8.0e8, 1.6e9)
DATASIZE_SPREAD = 0.2


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key."""


@dataclass
class ExperimentConfig:
    env: EnvConfig
    agent: AgentConfig
    episodes: int = 3000
    train_slots: int = 20
    eval_episodes: int = 30
    mode: str = "dynamic"
    out: str = "results"
    seed: int = 0
    fixed_k: int | None = None
    preset: str = "full"

    def __post_init__(self):
        if self.mode not in ("static", "dynamic"):
            raise ConfigError(f"mode: expected 'static' or 'dynamic', got {self.mode!r}")
        for key in ("episodes", "eval_episodes"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key}: must be non-negative")
        if self.train_slots < 1:
            raise ConfigError("train_slots: must be >= 1")
        if self.fixed_k is not None and not 0 <= self.fixed_k <= self.env.M:
            raise ConfigError(f"fixed_k: must be in [0, {self.env.M}]")

    @property
    def k_fixed(self) -> int:
        return self.env.M // 2 if self.fixed_k is None else self.fixed_k

    def train_env(self) -> EnvConfig:
        """The environment with training-length episodes."""
        return dataclasses.replace(self.env, T=self.train_slots)


def _data_path(name: str):
    return resources.files("daahm") / "data" / name


def load_importance(path) -> tuple[np.ndarray, list[str]]:
    """Read a G x M importance CSV whose first row names the metrics."""
    path = Path(str(path))
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    except OSError as exc:
        raise ConfigError(f"importance file {path}: {exc.strerror or exc}") from exc
    if len(rows) < 2:
        raise ConfigError(f"importance file {path}: need a header and at least one row")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    values = []
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ConfigError(f"importance file {path}, line {i}: {len(row)} columns, "
                              f"header has {len(header)}")
        try:
            vals = [float(x) for x in row]
        except ValueError as exc:
            raise ConfigError(f"importance file {path}, line {i}: {exc}") from exc
        for j, v in enumerate(vals):
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"importance file {path}, line {i}, column {header[j]!r}: "
                                  f"{v} outside [0, 1]")
        values.append(vals)
    mat = np.array(values)
    try:
        validate_importance(mat)
    except ValueError as exc:
        raise ConfigError(f"importance file {path}: {exc}") from exc
    return mat, header


def _preset_env(preset: str) -> EnvConfig:
    if preset not in PRESETS:
        raise ConfigError(f"preset: expected one of {PRESETS}, got {preset!r}")
    fname, activities = (("desk_importance.csv", DESK_ACTIVITIES) if preset == "desk"
                         else ("full_importance.csv", FULL_ACTIVITIES))
    with resources.as_file(_data_path(fname)) as p:
        importance, metrics = load_importance(p)
    D = np.array([METRIC_WORKLOADS[m][0] for m in metrics])
    c = np.array([METRIC_WORKLOADS[m][1] for m in metrics])
    return EnvConfig(
        importance=importance,
        devices=[DeviceSpec(f) for f in DEVICE_FREQS],
        d_min=D * (1 - DATASIZE_SPREAD),
        d_max=D * (1 + DATASIZE_SPREAD),
        c=c,
        dynamics=ActivityDynamics.sticky(importance.shape[0], 0.9),
        T=200,
        activity_names=list(activities),
        metric_names=metrics,
    )


def preset_config(preset: str = "full") -> ExperimentConfig:
    return ExperimentConfig(env=_preset_env(preset), agent=AgentConfig(), preset=preset,
                            fixed_k=3 if preset == "desk" else None)


# -- YAML ------------------------------------------------------------------

_TOP_KEYS = {"preset", "seed", "episodes", "train_slots", "eval_episodes", "mode", "out",
             "fixed_k", "env", "agent"}
_ENV_KEYS = {"T", "theta", "lam", "importance", "importance_file", "devices", "d_min",
             "d_max", "c", "dynamics", "activity_names", "metric_names"}


def _check_keys(d, allowed, prefix):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{prefix}{k}: unknown key")


def _num(d, key, prefix, cast=float):
    try:
        return cast(float(d[key])) if cast is int else cast(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix}{key}: expected a number, got {d[key]!r}") from exc


def _vector(d, key, prefix):
    try:
        return np.array([float(x) for x in d[key]])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix}{key}: expected a list of numbers") from exc


def _build_env(raw: dict, base: EnvConfig, root: Path) -> EnvConfig:
    p = "env."
    _check_keys(raw, _ENV_KEYS, p)
    kw = {f.name: getattr(base, f.name) for f in dataclasses.fields(EnvConfig)}
    if "importance_file" in raw and "importance" in raw:
        raise ConfigError("env.importance: give either importance or importance_file, not both")
    if "importance_file" in raw:
        path = Path(raw["importance_file"])
        kw["importance"], kw["metric_names"] = load_importance(path if path.is_absolute()
                                                               else root / path)
    elif "importance" in raw:
        try:
            kw["importance"] = validate_importance(np.array(raw["importance"], dtype=float))
        except ValueError as exc:
            raise ConfigError(f"env.importance: {exc}") from exc
    G, M = kw["importance"].shape
    if G != base.G:
        kw["activity_names"] = [f"activity_{g}" for g in range(G)]
        kw["dynamics"] = ActivityDynamics.sticky(G, 0.9)
    if M != base.M:
        kw["metric_names"] = kw["metric_names"] if len(kw["metric_names"]) == M else \
            [f"metric_{m}" for m in range(M)]
        if not all(k in raw for k in ("d_min", "d_max", "c")):
            raise ConfigError("env.d_min: importance changes the metric count, so d_min, "
                              "d_max and c must be given")
    for key in ("T",):
        if key in raw:
            kw[key] = _num(raw, key, p, int)
    for key in ("theta", "lam"):
        if key in raw:
            kw[key] = _num(raw, key, p)
    for key in ("d_min", "d_max", "c"):
        if key in raw:
            kw[key] = _vector(raw, key, p)
    for key in ("activity_names", "metric_names"):
        if key in raw:
            kw[key] = [str(x) for x in raw[key]]
    if "devices" in raw:
        if not isinstance(raw["devices"], list) or not raw["devices"]:
            raise ConfigError("env.devices: expected a non-empty list")
        devs = []
        for i, d in enumerate(raw["devices"]):
            dp = f"env.devices[{i}]."
            _check_keys(d, {"f", "rho", "zeta", "mu"}, dp)
            if "f" not in d:
                raise ConfigError(f"{dp}f: required")
            try:
                devs.append(DeviceSpec(**{k: _num(d, k, dp) for k in d}))
            except ValueError as exc:
                raise ConfigError(f"{dp[:-1]}: {exc}") from exc
        kw["devices"] = devs
    if "dynamics" in raw:
        kw["dynamics"] = _build_dynamics(raw["dynamics"], G)
    try:
        return EnvConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"env: {exc}") from exc


def _build_dynamics(raw, G) -> ActivityDynamics:
    p = "env.dynamics."
    _check_keys(raw, {"kind", "stay", "matrix", "initial", "probs"}, p)
    kind = raw.get("kind", "markov")
    try:
        if kind == "iid":
            probs = raw.get("probs")
            probs = np.full(G, 1.0 / G) if probs is None else np.array(probs, dtype=float)
            return ActivityDynamics("iid", probs)
        if kind == "markov":
            if "matrix" in raw:
                key = "matrix"
                mat = np.array(raw["matrix"], dtype=float)
                init = raw.get("initial")
                return ActivityDynamics("markov", mat, None if init is None else
                                        np.array(init, dtype=float))
            key = "stay"
            return ActivityDynamics.sticky(G, float(raw.get("stay", 0.9)))
    except ValueError as exc:
        raise ConfigError(f"{p}{'probs' if kind == 'iid' else key}: {exc}") from exc
    raise ConfigError(f"{p}kind: expected 'iid' or 'markov', got {kind!r}")


def config_from_dict(raw: dict | None, preset: str | None = None,
                     root: Path | None = None) -> ExperimentConfig:
    """Overlay ``raw`` on a preset. ``preset`` overrides ``raw['preset']``."""
    raw = raw or {}
    _check_keys(raw, _TOP_KEYS, "")
    preset = preset or raw.get("preset", "full")
    base = preset_config(preset)
    root = root or Path.cwd()
    env = _build_env(raw.get("env") or {}, base.env, root)
    agent_raw = raw.get("agent") or {}
    agent_fields = {f.name: f.type for f in dataclasses.fields(AgentConfig)}
    _check_keys(agent_raw, set(agent_fields), "agent.")
    agent_kw = {}
    for k in agent_raw:
        agent_kw[k] = _num(agent_raw, k, "agent.",
                           int if agent_fields[k] in ("int", int) else float)
    try:
        agent = AgentConfig(**agent_kw)
    except ValueError as exc:
        raise ConfigError(f"agent: {exc}") from exc
    kw = {f.name: getattr(base, f.name) for f in dataclasses.fields(ExperimentConfig)}
    kw.update(env=env, agent=agent)
    for key in ("seed", "episodes", "train_slots", "eval_episodes"):
        if key in raw:
            kw[key] = _num(raw, key, "", int)
    if "fixed_k" in raw:
        kw["fixed_k"] = None if raw["fixed_k"] is None else _num(raw, "fixed_k", "", int)
    for key in ("mode", "out"):
        if key in raw:
            kw[key] = str(raw[key])
    return ExperimentConfig(**kw)


def load_config(path=None, preset: str | None = None) -> ExperimentConfig:
    """Load a YAML config; ``DAAHM_SEED`` in the environment overrides the seed."""
    raw, root = {}, Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path}: not found")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path}: parse error: {exc}") from exc
        root = path.parent
    cfg = config_from_dict(raw, preset, root)
    if os.environ.get("DAAHM_SEED"):
        try:
            cfg.seed = int(os.environ["DAAHM_SEED"])
        except ValueError as exc:
            raise ConfigError(f"DAAHM_SEED: expected an integer, got "
                              f"{os.environ['DAAHM_SEED']!r}") from exc
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Fully explicit form; feeding it back to ``config_from_dict`` is lossless."""
    env = cfg.env
    dyn = env.dynamics
    dyn_d = {"kind": dyn.kind}
    if dyn.kind == "iid":
        dyn_d["probs"] = dyn.probs.tolist()
    else:
        dyn_d["matrix"] = dyn.probs.tolist()
        if dyn.initial is not None:
            dyn_d["initial"] = dyn.initial.tolist()
    return {
        "preset": cfg.preset,
        "seed": cfg.seed,
        "episodes": cfg.episodes,
        "train_slots": cfg.train_slots,
        "eval_episodes": cfg.eval_episodes,
        "mode": cfg.mode,
        "out": cfg.out,
        "fixed_k": cfg.fixed_k,
        "env": {
            "T": env.T,
            "theta": env.theta,
            "lam": env.lam,
            "importance": env.importance.tolist(),
            "devices": [dataclasses.asdict(d) for d in env.devices],
            "d_min": env.d_min.tolist(),
            "d_max": env.d_max.tolist(),
            "c": env.c.tolist(),
            "dynamics": dyn_d,
            "activity_names": list(env.activity_names),
            "metric_names": list(env.metric_names),
        },
        "agent": dataclasses.asdict(cfg.agent),
    }


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))
