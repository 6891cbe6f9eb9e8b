"""Belief-grouped cooperative MARL on a decentralised skirmish gridworld."""
from ._accel import HAVE_NUMBA, USE_NUMBA
from .agent import BGCAgent, RNNAgent, StudentNet
from .config import ExperimentConfig, load_config
from .env import EnvConfig, SkirmishEnv
from .errors import BGCError, CheckpointError, ConfigError, ContractViolation, NumericError
from .mixers import QMixer, VDNMixer

__version__ = "0.1.0"

__all__ = [
    "BGCAgent", "RNNAgent", "StudentNet", "QMixer", "VDNMixer", "EnvConfig", "SkirmishEnv",
    "ExperimentConfig", "load_config", "BGCError", "CheckpointError", "ConfigError",
    "ContractViolation", "NumericError", "HAVE_NUMBA", "USE_NUMBA",
]
