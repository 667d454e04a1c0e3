"""Agent checkpoints as versioned, checksummed JSON.

Layout (version 1)::

    {
      "format": "daahm-checkpoint",
      "version": 1,
      "sha256": "<hex digest of the canonical payload>",
      "payload": {
        "state_dim": 7, "action_dim": 6,
        "agent": {<AgentConfig fields>},
        "networks": {
          "actor":         {"sizes": [7, 64, 6], "activations": ["relu", "sigmoid"],
                            "weights": [[...row-major W0...], ...], "biases": [[...], ...]},
          "critic": ..., "target_actor": ..., "target_critic": ...
        }
      }
    }

Weight matrices are ``(fan_in, fan_out)`` flattened row-major. The canonical
payload is ``json.dumps(payload, sort_keys=True, separators=(",", ":"))``.
Floats are written with Python's shortest round-trip repr, so every
parameter survives a save/load bit-exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .agents import AgentConfig, DdpgAgent
from .nn import Mlp

FORMAT = "daahm-checkpoint"
VERSION = 1
NETWORKS = ("actor", "critic", "target_actor", "target_critic")


class CheckpointError(ValueError):
    pass


def _canonical(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def _net_to_dict(net: Mlp) -> dict:
    return {
        "sizes": net.sizes,
        "activations": list(net.activations),
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d: dict) -> Mlp:
    sizes = d["sizes"]
    weights = [np.array(w, dtype=np.float64).reshape(fi, fo)
               for w, fi, fo in zip(d["weights"], sizes[:-1], sizes[1:])]
    biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
    return Mlp(weights, biases, d["activations"])


def save_checkpoint(agent: DdpgAgent, path) -> None:
    payload = {
        "state_dim": agent.state_dim,
        "action_dim": agent.action_dim,
        "agent": dataclasses.asdict(agent.cfg),
        "networks": {name: _net_to_dict(getattr(agent, name)) for name in NETWORKS},
    }
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "sha256": hashlib.sha256(_canonical(payload)).hexdigest(),
        "payload": payload,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> DdpgAgent:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt or truncated checkpoint ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {doc.get('version')!r} is not "
                              f"supported (expected {VERSION})")
    payload = doc.get("payload")
    if hashlib.sha256(_canonical(payload)).hexdigest() != doc.get("sha256"):
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    try:
        cfg = AgentConfig(**payload["agent"])
        agent = DdpgAgent(payload["state_dim"], payload["action_dim"], cfg)
        for name in NETWORKS:
            net = _net_from_dict(payload["networks"][name])
            if net.sizes != getattr(agent, name).sizes:
                raise CheckpointError(f"{path}: {name} has sizes {net.sizes}, expected "
                                      f"{getattr(agent, name).sizes}")
            setattr(agent, name, net)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: malformed payload ({exc})") from exc
    return agent
