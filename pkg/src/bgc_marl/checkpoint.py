"""Versioned checkpoints: config, agent, mixer, optional student, counters."""
from __future__ import annotations

import os
from pathlib import Path

import torch

from .agent import StudentNet
from .config import ExperimentConfig
from .errors import CheckpointError
from .learner import build_networks

FORMAT = "bgc-marl-checkpoint"
VERSION = 1


def _cpu_state(module):
    return {k: v.detach().cpu().clone() for k, v in module.state_dict().items()}


def save_checkpoint(path, cfg: ExperimentConfig, agent, mixer, student=None, meta=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {
        "format": FORMAT,
        "version": VERSION,
        "config": cfg.to_dict(),
        "agent": _cpu_state(agent),
        "mixer": _cpu_state(mixer),
        "student": None if student is None else _cpu_state(student),
        "meta": dict(meta or {}),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(blob, tmp)
    os.replace(tmp, path)
    return path


def _load_into(module, state, what):
    expected = module.state_dict()
    missing = sorted(set(expected) - set(state))
    extra = sorted(set(state) - set(expected))
    if missing or extra:
        raise CheckpointError(f"{what}: parameter names differ (missing {missing}, unexpected {extra})")
    for name, tensor in state.items():
        if tuple(tensor.shape) != tuple(expected[name].shape):
            raise CheckpointError(
                f"{what}.{name}: checkpoint has shape {tuple(tensor.shape)}, config expects {tuple(expected[name].shape)}"
            )
    module.load_state_dict(state)


def read_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(blob, dict) or blob.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if blob.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {blob.get('version')}")
    return blob


def load_checkpoint(path, cfg: ExperimentConfig | None = None):
    """Rebuild networks from ``cfg`` (or the stored config) and load the weights.

    Returns (cfg, agent, mixer, student_or_None, meta).
    """
    blob = read_checkpoint(path)
    if cfg is None:
        cfg = ExperimentConfig.from_dict(blob["config"]).validate()
    agent, mixer = build_networks(cfg)
    _load_into(agent, blob["agent"], "agent")
    _load_into(mixer, blob["mixer"], "mixer")
    student = None
    if blob.get("student") is not None:
        if not getattr(agent, "uses_graph", False):
            raise CheckpointError("student weights stored with a non-BGC agent")
        student = StudentNet(agent.input_dim, agent.hidden_dim, agent.group_dim)
        _load_into(student, blob["student"], "student")
    for mod in (agent, mixer, student):
        if mod is not None:
            mod.eval()
    return cfg, agent, mixer, student, blob.get("meta", {})
