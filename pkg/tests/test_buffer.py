import numpy as np
import pytest
import torch

from bgc_marl.buffer import EpisodeBatch, ReplayBuffer
from bgc_marl.learner import build_networks
from bgc_marl.runner import Policy, run_episodes

from helpers import tiny_config


def _rollouts(cfg, n, seed=0):
    torch.manual_seed(seed)
    agent, _ = build_networks(cfg)
    rngs = [np.random.default_rng([seed, i]) for i in range(n)]
    return run_episodes(Policy(agent, cfg.model.knn_k), cfg.env, list(range(seed, seed + n)), rngs, epsilon=1.0, noise=True)


def _tagged(cfg, tags):
    b = EpisodeBatch.empty(len(tags), cfg.env)
    b.rewards[:, 0] = tags
    b.filled[:, 0] = True
    return b


def test_fifo_eviction_preserves_order():
    cfg = tiny_config()
    buf = ReplayBuffer(5, cfg.env)
    for chunk in ([0, 1, 2], [3, 4], [5, 6, 7]):
        buf.insert(_tagged(cfg, chunk))
    assert len(buf) == 5
    assert buf.episodes().rewards[:, 0].tolist() == [3, 4, 5, 6, 7]
    assert buf.inserted == 8


@pytest.mark.parametrize("capacity,k", [(1, 3), (4, 1), (7, 7), (6, 13)])
def test_fifo_after_capacity_plus_k(capacity, k):
    cfg = tiny_config()
    buf = ReplayBuffer(capacity, cfg.env)
    for i in range(capacity + k):
        buf.insert(_tagged(cfg, [i]))
    assert len(buf) == capacity
    assert buf.episodes().rewards[:, 0].tolist() == list(range(k, capacity + k))


def test_padding_invariants_on_real_rollouts():
    cfg = tiny_config()
    ro = _rollouts(cfg, 6)
    b = ro.batch
    f = b.filled.astype(int)
    assert (np.diff(f, axis=1) <= 0).all()
    assert (b.rewards[~b.filled] == 0).all()
    assert (b.lengths <= cfg.env.max_steps).all()
    # exactly one terminal flag, on the last filled step
    assert (b.terminated.sum(1) == 1).all()
    assert b.terminated[np.arange(len(b)), b.lengths - 1].all()
    assert b.avail.any(-1).all()


def test_sample_uniform_without_replacement_and_deterministic():
    cfg = tiny_config()
    buf = ReplayBuffer(10, cfg.env)
    buf.insert(_tagged(cfg, list(range(10))))
    assert not buf.can_sample(11) and buf.can_sample(10)
    a = buf.sample(6, np.random.default_rng(3)).rewards[:, 0]
    b = buf.sample(6, np.random.default_rng(3)).rewards[:, 0]
    assert np.array_equal(a, b) and len(set(a.tolist())) == 6
    counts = np.zeros(10)
    rng = np.random.default_rng(0)
    for _ in range(3000):
        counts[buf.sample(3, rng).rewards[:, 0].astype(int)] += 1
    # each episode is drawn with probability 3/10 per sample
    assert np.abs(counts / 3000 - 0.3).max() < 0.04


def test_insert_copies_data():
    cfg = tiny_config()
    buf = ReplayBuffer(3, cfg.env)
    src = _tagged(cfg, [1.0])
    buf.insert(src)
    src.rewards[:] = 99
    assert buf.episodes().rewards[0, 0] == 1.0
