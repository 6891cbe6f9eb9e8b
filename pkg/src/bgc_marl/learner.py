"""Single-threaded learner: TD + split-loss updates and target maintenance."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .agent import build_inputs, make_agent
from .buffer import EpisodeBatch, ReplayBuffer
from .config import ExperimentConfig
from .mixers import make_mixer
from .objectives import LossBreakdown, split_loss, td_loss, total_loss
from .topology import adjacency_mask


def build_networks(cfg: ExperimentConfig):
    env, m = cfg.env, cfg.model
    input_dim = env.obs_dim + env.n_allies + env.n_actions
    agent = make_agent(
        m.agent, input_dim, env.n_actions,
        hidden_dim=m.hidden_dim, group_dim=m.group_dim, individual_dim=m.individual_dim,
        gat_layers=m.gat_layers, gat_dropout=m.gat_dropout, leaky_slope=m.leaky_slope,
        value_projection=m.value_projection,
        mean_bias_offset=m.mean_bias_offset, logvar_bias_init=m.logvar_bias_init,
    )
    mixer = make_mixer(m.mixer, env.n_allies, env.state_dim, m.mixer_embed_dim)
    return agent, mixer


@dataclass
class TrainState:
    agent: torch.nn.Module
    mixer: torch.nn.Module
    target_agent: torch.nn.Module
    target_mixer: torch.nn.Module
    optimizer: torch.optim.Optimizer
    generator: torch.Generator  # belief noise and attention dropout in updates
    rng: np.random.Generator  # replay sampling
    env_steps: int = 0
    episodes: int = 0
    train_steps: int = 0
    last_target_update: int = 0

    @property
    def params(self):
        return list(self.agent.parameters()) + list(self.mixer.parameters())


def make_train_state(cfg: ExperimentConfig, seed: Optional[int] = None) -> TrainState:
    seed = cfg.training.seed if seed is None else seed
    ss = np.random.SeedSequence(seed)
    init_seed, gen_seed, rng_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    torch.manual_seed(init_seed)
    agent, mixer = build_networks(cfg)
    params = list(agent.parameters()) + list(mixer.parameters())
    opt = torch.optim.Adam(params, lr=cfg.training.lr)
    gen = torch.Generator().manual_seed(gen_seed)
    return TrainState(agent, mixer, copy.deepcopy(agent), copy.deepcopy(mixer), opt, gen, np.random.default_rng(rng_seed))


def batch_to_torch(batch: EpisodeBatch, n_actions: int, k: int, graph: bool = True) -> dict:
    actions = torch.as_tensor(batch.actions)
    B, _, n = actions.shape
    last = torch.cat([torch.full((B, 1, n), -1, dtype=torch.long), actions], dim=1)
    obs = torch.as_tensor(batch.obs)
    out = {
        "inputs": build_inputs(obs, last, n_actions),
        "state": torch.as_tensor(batch.state),
        "avail": torch.as_tensor(batch.avail),
        "actions": actions,
        "rewards": torch.as_tensor(batch.rewards),
        "terminated": torch.as_tensor(batch.terminated),
        "filled": torch.as_tensor(batch.filled),
        "masks": torch.as_tensor(adjacency_mask(batch.positions, k)) if graph else None,
    }
    return out


def compute_losses(state: TrainState, batch: EpisodeBatch, cfg: ExperimentConfig):
    """Returns (total loss tensor, LossBreakdown) for one batch of episodes."""
    lo = cfg.loss
    agent, mixer = state.agent, state.mixer
    graph = getattr(agent, "uses_graph", False)
    bt = batch_to_torch(batch, cfg.env.n_actions, cfg.model.knn_k, graph)
    noise = None
    if graph:
        shape = bt["inputs"].shape[:-1] + (agent.group_dim,)
        noise = torch.randn(shape, generator=state.generator)
    out = agent.forward_sequence(bt["inputs"], bt["masks"], noise, train=True, generator=state.generator)
    chosen = out.q[:, :-1].gather(-1, bt["actions"].unsqueeze(-1)).squeeze(-1)
    q_tot = mixer(chosen, bt["state"][:, :-1])
    with torch.no_grad():
        tout = state.target_agent.forward_sequence(bt["inputs"], bt["masks"])
        next_q = tout.q[:, 1:].masked_fill(~bt["avail"][:, 1:], float("-inf")).max(-1).values
        target_tot = state.target_mixer(next_q, bt["state"][:, 1:])
    td = td_loss(q_tot, target_tot, bt["rewards"] * cfg.training.reward_scale, bt["terminated"], bt["filled"], lo.gamma)
    split = None
    if graph:
        per_step = split_loss(out.mean[:, :-1], out.logvar[:, :-1], bt["masks"][:, :-1], lo.delta)
        filled = bt["filled"].to(per_step.dtype)
        split = (per_step * filled).sum() / filled.sum().clamp(min=1.0)
    return total_loss(td, split, None, lo.lambda_split, lo.lambda_distill)


def train_step(state: TrainState, buffer: ReplayBuffer, cfg: ExperimentConfig) -> Optional[LossBreakdown]:
    """One gradient update on a uniformly sampled batch; None if the buffer is too small."""
    bs = cfg.training.batch_size
    if not buffer.can_sample(bs):
        return None
    batch = buffer.sample(bs, state.rng)
    return train_on_batch(state, batch, cfg)


def train_on_batch(state: TrainState, batch: EpisodeBatch, cfg: ExperimentConfig) -> LossBreakdown:
    loss, breakdown = compute_losses(state, batch, cfg)
    state.optimizer.zero_grad()
    loss.backward()
    torch.nn.utils.clip_grad_norm_(state.params, cfg.training.grad_clip)
    state.optimizer.step()
    state.train_steps += 1
    if state.train_steps - state.last_target_update >= cfg.training.target_update_interval:
        update_target(state)
    return breakdown


def update_target(state: TrainState) -> TrainState:
    state.target_agent.load_state_dict(copy.deepcopy(state.agent.state_dict()))
    state.target_mixer.load_state_dict(copy.deepcopy(state.mixer.state_dict()))
    state.last_target_update = state.train_steps
    return state
