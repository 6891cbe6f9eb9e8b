"""Experiment configuration.

Files are INI (section / key / value). Every key maps onto a dataclass field;
unknown sections or keys are rejected, as is a file that omits a required key.
Command-line overrides use ``section.key=value``. The resolved configuration
is always written back next to the run outputs.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .env import EnvConfig
from .errors import ConfigError


@dataclass
class ModelConfig:
    agent: str = "bgc"  # bgc | rnn
    mixer: str = "qmix"  # qmix | vdn
    hidden_dim: int = 64
    group_dim: int = 32
    individual_dim: int = 32
    knn_k: int = 2
    gat_layers: int = 1
    value_projection: bool = False
    gat_dropout: float = 0.5
    leaky_slope: float = 0.2
    # belief-head init: offset added to the mean bias, constant logvar bias
    mean_bias_offset: float = 0.5
    logvar_bias_init: float = -6.0
    mixer_embed_dim: int = 64
    mixer_layers: int = 2


@dataclass
class LossConfig:
    delta: float = 0.005
    lambda_split: float = 0.1
    lambda_distill: float = 1.0
    gamma: float = 0.99


@dataclass
class TrainingConfig:
    seed: int = 0
    total_env_steps: int = 200_000
    buffer_capacity: int = 5000
    batch_size: int = 7
    workers: int = 7
    epsilon_start: float = 1.0
    epsilon_finish: float = 0.05
    epsilon_anneal_steps: int = 50_000
    target_update_interval: int = 200
    train_steps_per_iteration: int = 1
    lr: float = 5e-4
    # multiplies env rewards inside the TD target only; env returns stay in [0, 1]
    reward_scale: float = 1.0
    grad_clip: float = 10.0
    eval_interval: int = 10_000
    eval_episodes: int = 20
    checkpoint_interval: int = 50_000
    distill_env_steps: int = 50_000
    distill_epsilon: float = 0.05
    distill_batch_size: int = 16
    distill_steps_per_iteration: int = 2
    distill_eval_episodes: int = 200
    distill_agreement_states: int = 1000


@dataclass
class IOConfig:
    run_dir: str = ""
    run_id: str = "run"


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    io: IOConfig = field(default_factory=IOConfig)

    def validate(self) -> "ExperimentConfig":
        self.env.validate()
        m, lo, tr = self.model, self.loss, self.training
        if m.agent not in ("bgc", "rnn"):
            raise ConfigError(f"model.agent must be 'bgc' or 'rnn', got {m.agent!r}")
        if m.mixer not in ("qmix", "vdn"):
            raise ConfigError(f"model.mixer must be 'qmix' or 'vdn', got {m.mixer!r}")
        for name in ("hidden_dim", "group_dim", "individual_dim", "gat_layers", "mixer_embed_dim"):
            if getattr(m, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")
        if m.mixer_layers != 2:
            raise ConfigError("model.mixer_layers: only the two-layer mixing network is implemented")
        if not 0 <= m.knn_k <= self.env.n_allies - 1:
            raise ConfigError(f"model.knn_k must be in [0, n_allies-1={self.env.n_allies - 1}], got {m.knn_k}")
        if not 0 <= m.gat_dropout < 1:
            raise ConfigError("model.gat_dropout must be in [0, 1)")
        if m.leaky_slope < 0:
            raise ConfigError("model.leaky_slope must be >= 0")
        if not -10.0 <= m.logvar_bias_init <= 2.0:
            raise ConfigError("model.logvar_bias_init must lie in the logvar clamp range [-10, 2]")
        if lo.delta <= 0:
            raise ConfigError("loss.delta must be > 0")
        if lo.lambda_split < 0 or lo.lambda_distill < 0:
            raise ConfigError("loss.lambda_split and loss.lambda_distill must be >= 0")
        if not 0 <= lo.gamma <= 1:
            raise ConfigError("loss.gamma must be in [0, 1]")
        for name in ("buffer_capacity", "batch_size", "workers", "target_update_interval", "eval_episodes",
                     "distill_batch_size", "distill_eval_episodes", "distill_agreement_states"):
            if getattr(tr, name) < 1:
                raise ConfigError(f"training.{name} must be >= 1")
        for name in ("total_env_steps", "epsilon_anneal_steps", "train_steps_per_iteration", "eval_interval",
                     "checkpoint_interval", "distill_env_steps", "distill_steps_per_iteration"):
            if getattr(tr, name) < 0:
                raise ConfigError(f"training.{name} must be >= 0")
        if tr.batch_size > tr.buffer_capacity:
            raise ConfigError("training.batch_size must not exceed training.buffer_capacity")
        for name in ("epsilon_start", "epsilon_finish", "distill_epsilon"):
            if not 0 <= getattr(tr, name) <= 1:
                raise ConfigError(f"training.{name} must be a probability")
        if tr.reward_scale <= 0:
            raise ConfigError("training.reward_scale must be > 0")
        if tr.lr <= 0 or tr.grad_clip <= 0:
            raise ConfigError("training.lr and training.grad_clip must be > 0")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        cfg = cls()
        for section, values in data.items():
            for key, value in values.items():
                _assign(cfg, section, key, value)
        return cfg


SECTIONS = ("env", "model", "loss", "training", "io")
# keys a config file must state explicitly
REQUIRED = (("env", "n_allies"), ("env", "n_enemies"))


def _section(cfg, name):
    if name not in SECTIONS:
        raise ConfigError(f"unknown config section [{name}]")
    return getattr(cfg, name)


def _coerce(section, key, value, typ):
    if not isinstance(value, str):
        return typ(value)
    text = value.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text.replace("_", ""))
        if typ is float:
            return float(text.replace("_", ""))
        return text
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {value!r} as {typ.__name__}") from None


def _assign(cfg, section, key, value):
    obj = _section(cfg, section)
    hints = typing.get_type_hints(type(obj))
    if key not in hints:
        raise ConfigError(f"unknown config key {section}.{key}")
    setattr(obj, key, _coerce(section, key, value, hints[key]))


def parse_overrides(items) -> dict:
    out: dict = {}
    for item in items or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        out.setdefault(section, {})[key] = value
    return out


def load_config(path, overrides=None) -> ExperimentConfig:
    """Read an INI file, apply ``{section: {key: value}}`` overrides, validate."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    for section, key in REQUIRED:
        if not parser.has_option(section, key):
            raise ConfigError(f"missing required field {section}.{key}")
    cfg = ExperimentConfig()
    for section in parser.sections():
        for key, value in parser.items(section):
            _assign(cfg, section, key, value)
    for section, values in (overrides or {}).items():
        for key, value in values.items():
            _assign(cfg, section, key, value)
    return cfg.validate()


def dumps_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, values in cfg.to_dict().items():
        parser[section] = {k: str(v) for k, v in values.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps_config(cfg))
