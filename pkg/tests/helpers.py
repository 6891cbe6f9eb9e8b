import numpy as np

from bgc_marl.config import ExperimentConfig
from bgc_marl.env import EnvConfig


def tiny_config(agent="bgc", mixer="qmix", **training):
    """2v2 on a small map with small networks: fast enough for unit tests."""
    cfg = ExperimentConfig()
    cfg.env = EnvConfig(grid_width=8, grid_height=6, n_allies=2, n_enemies=2, max_steps=15, ally_hp=3.0, enemy_hp=2.0)
    cfg.model.agent, cfg.model.mixer = agent, mixer
    cfg.model.hidden_dim, cfg.model.group_dim, cfg.model.individual_dim = 16, 8, 8
    cfg.model.knn_k = 1
    cfg.model.mixer_embed_dim = 8
    t = cfg.training
    t.total_env_steps, t.batch_size, t.workers = 300, 4, 2
    t.eval_interval, t.eval_episodes, t.checkpoint_interval = 0, 4, 0
    t.target_update_interval = 5
    t.distill_env_steps, t.distill_eval_episodes, t.distill_agreement_states = 100, 4, 50
    for k, v in training.items():
        setattr(t, k, v)
    return cfg.validate()


def params_of(*modules):
    return [p.detach().clone() for m in modules for p in m.parameters()]


def same_params(a, b):
    return len(a) == len(b) and all(np.array_equal(x.numpy(), y.numpy()) for x, y in zip(a, b))
