"""Episode collection.

A runner owns a fixed set of worker slots, each with its own environment and
its own random stream. Slots advance in lockstep so one batched forward pass
serves all of them; no environment, hidden state or generator is shared
between slots, so results do not depend on how many slots run together.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .agent import build_inputs, select_actions
from .buffer import EpisodeBatch
from .env import EnvConfig, SkirmishEnv
from .topology import adjacency_mask

EVAL_SEED_BASE = 2**31


@dataclass
class EpisodeStats:
    seed: int
    episode_return: float
    won: bool
    length: int


@dataclass
class Rollout:
    batch: EpisodeBatch
    stats: list
    features: Optional[list] = None  # per episode: (length, n, dim) acting group features
    agree: int = 0  # teacher/distilled greedy agreements over alive agents
    compared: int = 0


@dataclass
class Policy:
    """What acts: the agent alone (teacher mode) or with the student's group features (distilled mode)."""

    agent: torch.nn.Module
    k: int = 2
    student: Optional[torch.nn.Module] = None
    mode: str = "teacher"

    def __post_init__(self):
        if self.mode not in ("teacher", "distilled"):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if self.mode == "distilled" and self.student is None:
            raise ValueError("distilled mode needs a student network")


def _greedy(q, avail):
    return np.where(avail, q, -np.inf).argmax(-1)


@torch.no_grad()
def run_episodes(
    policy: Policy,
    env_config: EnvConfig,
    seeds,
    rngs,
    epsilon: float = 0.0,
    noise: bool = False,
    record_features: bool = False,
    compare: bool = False,
) -> Rollout:
    """Play one episode per slot, all slots in lockstep.

    ``seeds`` are environment reset seeds; ``rngs`` are per-slot numpy
    generators used for exploration and belief noise (untouched when
    ``epsilon == 0`` and ``noise`` is False).
    """
    cfg = env_config
    E, n, A = len(seeds), cfg.n_allies, cfg.n_actions
    agent, student = policy.agent, policy.student
    graph = getattr(agent, "uses_graph", False)
    envs = [SkirmishEnv(cfg) for _ in range(E)]
    batch = EpisodeBatch.empty(E, cfg)
    obs = np.zeros((E, n, cfg.obs_dim))
    avail = np.zeros((E, n, A), dtype=bool)
    pos = np.zeros((E, n, 2))
    for e, env in enumerate(envs):
        o, s, p = env.reset(int(seeds[e]))
        obs[e], pos[e], avail[e] = o, p.xy, env.avail_actions()
        batch.obs[e, 0], batch.state[e, 0], batch.avail[e, 0] = o, s, avail[e]
        batch.positions[e, 0], batch.alive[e, 0] = p.xy, p.alive
    active = np.ones(E, dtype=bool)
    returns = np.zeros(E)
    won = np.zeros(E, dtype=bool)
    lengths = np.zeros(E, dtype=int)
    last = torch.full((E, n), -1, dtype=torch.long)
    h = agent.init_hidden(E, n)
    hs = student.init_hidden(E, n) if student is not None else None
    feats = [[] for _ in range(E)] if record_features else None
    agree = compared = 0
    group_dim = getattr(agent, "group_dim", 0)
    t = 0
    while active.any():
        x = build_inputs(torch.as_tensor(obs, dtype=torch.float32), last, A)
        mask = torch.as_tensor(adjacency_mask(pos, policy.k)) if graph else None
        eps = None
        if noise and graph:
            eps = torch.as_tensor(
                np.stack([rngs[e].standard_normal((n, group_dim)) if active[e] else np.zeros((n, group_dim)) for e in range(E)]),
                dtype=torch.float32,
            )
        out = agent(x, h, mask, eps)
        h = out.hidden
        q = out.q.numpy()
        acting_feat = out.group_feature
        if student is not None:
            est, hs = student(x, hs)
            q_dist = agent.fuse_q(est, out.individual).numpy()
            if policy.mode == "distilled":
                q, acting_feat = q_dist, est
        actions = np.zeros((E, n), dtype=np.int64)
        for e in np.flatnonzero(active):
            actions[e] = select_actions(q[e], avail[e], epsilon, rngs[e]) if epsilon > 0 else _greedy(q[e], avail[e])
            if compare and student is not None:
                alive = batch.alive[e, t]
                agree += int((_greedy(out.q[e].numpy(), avail[e]) == _greedy(q_dist[e], avail[e]))[alive].sum())
                compared += int(alive.sum())
            if feats is not None and acting_feat is not None:
                feats[e].append(acting_feat[e].numpy().copy())
            res = envs[e].step(actions[e])
            p = envs[e].positions()
            batch.actions[e, t] = actions[e]
            batch.rewards[e, t] = res.reward
            batch.terminated[e, t] = res.terminated
            batch.filled[e, t] = True
            batch.obs[e, t + 1], batch.state[e, t + 1], batch.avail[e, t + 1] = res.observations, res.state, res.avail_actions
            batch.positions[e, t + 1], batch.alive[e, t + 1] = p.xy, p.alive
            obs[e], avail[e], pos[e] = res.observations, res.avail_actions, p.xy
            returns[e] += res.reward
            lengths[e] += 1
            if res.terminated:
                active[e] = False
                won[e] = res.won
        last = torch.as_tensor(actions)
        t += 1
    stats = [EpisodeStats(int(seeds[e]), float(returns[e]), bool(won[e]), int(lengths[e])) for e in range(E)]
    features = None
    if feats is not None:
        features = [np.stack(f) if f else np.zeros((0, n, group_dim)) for f in feats]
    return Rollout(batch, stats, features, agree, compared)


def rollout_episode(policy: Policy, env_config: EnvConfig, seed: int, rng, epsilon=0.0, mode="train"):
    """Single-episode convenience wrapper. ``mode='eval'`` disables noise and exploration."""
    train = mode == "train"
    ro = run_episodes(policy, env_config, [seed], [rng], epsilon if train else 0.0, noise=train)
    return ro.batch, ro.stats[0]


def eval_seeds(seed: int, n_episodes: int) -> list:
    """Held-out reset seeds; training seeds are drawn below 2**31 so the ranges never meet."""
    return [EVAL_SEED_BASE + seed * 1_000_003 + i for i in range(n_episodes)]


@dataclass
class EvalResult:
    win_rate: float
    mean_return: float
    wins: list = field(default_factory=list)
    returns: list = field(default_factory=list)
    lengths: list = field(default_factory=list)


def evaluate(policy: Policy, env_config: EnvConfig, n_episodes: int, seed: int = 0, chunk: int = 8) -> EvalResult:
    """Greedy, noise-free episodes on held-out seeds."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    seeds = eval_seeds(seed, n_episodes)
    stats = []
    for i in range(0, n_episodes, chunk):
        part = seeds[i:i + chunk]
        stats += run_episodes(policy, env_config, part, [None] * len(part)).stats
    wins = [s.won for s in stats]
    rets = [s.episode_return for s in stats]
    return EvalResult(float(np.mean(wins)), float(np.mean(rets)), wins, rets, [s.length for s in stats])


def random_policy_returns(env_config: EnvConfig, n_episodes: int, seed: int = 0):
    """Returns and win flags of uniformly random legal play on the held-out seeds."""
    env = SkirmishEnv(env_config)
    rng = np.random.default_rng(seed)
    rets, wins = [], []
    for s in eval_seeds(seed, n_episodes):
        env.reset(s)
        avail = env.avail_actions()
        total, done = 0.0, False
        while not done:
            acts = np.array([rng.choice(np.flatnonzero(row)) for row in avail])
            res = env.step(acts)
            total += res.reward
            avail, done = res.avail_actions, res.terminated
        rets.append(total)
        wins.append(res.won)
    return np.array(rets), np.array(wins)
