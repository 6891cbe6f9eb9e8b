"""Padded episode storage for recurrent Q-learning."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .env import EnvConfig


@dataclass
class EpisodeBatch:
    """B padded episodes. Per-step arrays hold T+1 entries (the extra one is
    the bootstrap step); transition arrays hold T. T = max_steps."""

    obs: np.ndarray  # (B, T+1, n, obs_dim) float32
    state: np.ndarray  # (B, T+1, state_dim) float32
    avail: np.ndarray  # (B, T+1, n, n_actions) bool
    positions: np.ndarray  # (B, T+1, n, 2) float32
    alive: np.ndarray  # (B, T+1, n) bool
    actions: np.ndarray  # (B, T, n) int64
    rewards: np.ndarray  # (B, T) float32
    terminated: np.ndarray  # (B, T) bool
    filled: np.ndarray  # (B, T) bool

    @classmethod
    def empty(cls, batch: int, cfg: EnvConfig) -> "EpisodeBatch":
        T, n = cfg.max_steps, cfg.n_allies
        avail = np.zeros((batch, T + 1, n, cfg.n_actions), dtype=bool)
        avail[..., 0] = True  # padding keeps no-op available so target maxima stay finite
        return cls(
            obs=np.zeros((batch, T + 1, n, cfg.obs_dim), dtype=np.float32),
            state=np.zeros((batch, T + 1, cfg.state_dim), dtype=np.float32),
            avail=avail,
            positions=np.zeros((batch, T + 1, n, 2), dtype=np.float32),
            alive=np.zeros((batch, T + 1, n), dtype=bool),
            actions=np.zeros((batch, T, n), dtype=np.int64),
            rewards=np.zeros((batch, T), dtype=np.float32),
            terminated=np.zeros((batch, T), dtype=bool),
            filled=np.zeros((batch, T), dtype=bool),
        )

    def __len__(self):
        return self.obs.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return self.filled.sum(1)

    def select(self, idx) -> "EpisodeBatch":
        return EpisodeBatch(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})

    @staticmethod
    def concat(batches) -> "EpisodeBatch":
        return EpisodeBatch(**{f.name: np.concatenate([getattr(b, f.name) for b in batches]) for f in fields(EpisodeBatch)})


class ReplayBuffer:
    """FIFO ring of whole episodes."""

    def __init__(self, capacity: int, env_config: EnvConfig):
        self.capacity = int(capacity)
        self._store = EpisodeBatch.empty(self.capacity, env_config)
        self._next = 0
        self._size = 0
        self.inserted = 0

    def __len__(self):
        return self._size

    def insert(self, batch: EpisodeBatch) -> None:
        for b in range(len(batch)):
            for f in fields(EpisodeBatch):
                getattr(self._store, f.name)[self._next] = getattr(batch, f.name)[b]
            self._next = (self._next + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)
            self.inserted += 1

    def order(self) -> np.ndarray:
        """Storage slots from oldest to newest."""
        start = (self._next - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def episodes(self) -> EpisodeBatch:
        return self._store.select(self.order())

    def can_sample(self, batch_size: int) -> bool:
        return self._size >= batch_size

    def sample(self, batch_size: int, rng: np.random.Generator) -> EpisodeBatch:
        slots = self.order()
        pick = rng.choice(self._size, size=batch_size, replace=False)
        return self._store.select(slots[np.sort(pick)])
