"""Squad-skirmish gridworld: a small Dec-POMDP battle stand-in for SMAC maps.

Allies spawn in the left third of the grid, enemies in the right third. Allies
are the learning team; enemies follow a fixed script (focus fire on the
nearest ally in range, otherwise step toward the nearest ally).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ConfigError, ContractViolation

NOOP = 0


@dataclass
class EnvConfig:
    grid_width: int = 12
    grid_height: int = 8
    n_allies: int = 4
    n_enemies: int = 4
    sight_range: float = 6.0
    attack_range: float = 3.0
    ally_hp: float = 6.0
    enemy_hp: float = 5.0
    damage: float = 1.0
    max_steps: int = 40
    seed: int = 0
    # 0 spreads allies uniformly over the left third; c > 0 packs them into c
    # tight clusters stacked vertically.
    spawn_clusters: int = 0

    def validate(self) -> "EnvConfig":
        for name in ("grid_width", "grid_height", "n_allies", "n_enemies", "max_steps"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"env.{name} must be >= 1, got {getattr(self, name)}")
        for name in ("sight_range", "attack_range", "ally_hp", "enemy_hp", "damage"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"env.{name} must be > 0, got {getattr(self, name)}")
        if self.attack_range > self.sight_range:
            raise ConfigError("env.attack_range must be <= env.sight_range")
        third = max(self.grid_width // 3, 1)
        if self.n_allies > third * self.grid_height or self.n_enemies > third * self.grid_height:
            raise ConfigError("env grid third too small to spawn all units")
        if self.spawn_clusters < 0:
            raise ConfigError("env.spawn_clusters must be >= 0")
        if self.spawn_clusters:
            per = -(-self.n_allies // self.spawn_clusters)
            if per > 3 or 4 * self.spawn_clusters > self.grid_height or third < 2:
                raise ConfigError("env grid too small for the requested spawn clusters (<=3 per cluster, 4 rows each)")
        return self

    @property
    def n_actions(self) -> int:
        return 1 + kernels.N_MOVE + self.n_enemies

    @property
    def obs_dim(self) -> int:
        return kernels.FEAT * (self.n_allies - 1 + self.n_enemies) + 1

    @property
    def state_dim(self) -> int:
        return 4 * (self.n_allies + self.n_enemies) + 1

    @property
    def sentinel(self) -> tuple[int, int]:
        return (-4 * self.grid_width, -4 * self.grid_height)

    @property
    def reward_scale(self) -> float:
        return 200.0 + 10.0 * self.n_enemies + self.n_enemies * self.enemy_hp

    @property
    def max_return(self) -> float:
        # every hp point, every kill and the win bonus, times the scale
        return (self.n_enemies * self.enemy_hp + 10.0 * self.n_enemies + 200.0) / self.reward_scale


class AgentPositions(NamedTuple):
    xy: np.ndarray  # (n_allies, 2); dead allies sit at EnvConfig.sentinel
    alive: np.ndarray  # (n_allies,) bool


class StepResult(NamedTuple):
    observations: np.ndarray
    state: np.ndarray
    reward: float
    terminated: bool
    won: bool
    avail_actions: np.ndarray
    info: dict


class SkirmishEnv:
    """n_allies vs n_enemies gridworld battle."""

    def __init__(self, config: EnvConfig, trace_path=None):
        self.config = config.validate()
        self._sentinel = np.array(config.sentinel, dtype=np.int64)
        self._trace = open(trace_path, "a") if trace_path else None
        self._t = None

    # ------------------------------------------------------------------ lifecycle

    def reset(self, seed: int | None = None):
        cfg = self.config
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        third = max(cfg.grid_width // 3, 1)
        if cfg.spawn_clusters:
            self.ally_pos = self._cluster_spawn(rng, third)
        else:
            self.ally_pos = self._spawn(rng, 0, third, cfg.n_allies)
        self.enemy_pos = self._spawn(rng, cfg.grid_width - third, cfg.grid_width, cfg.n_enemies)
        self.ally_hp = np.full(cfg.n_allies, float(cfg.ally_hp))
        self.enemy_hp = np.full(cfg.n_enemies, float(cfg.enemy_hp))
        self._t = 0
        self._done = False
        self._record({"step": 0, "reset_seed": None if seed is None else int(seed)})
        return self.observations(), self.global_state(), self.positions()

    def _spawn(self, rng, x_lo, x_hi, n):
        cells = np.array([(x, y) for x in range(x_lo, x_hi) for y in range(self.config.grid_height)], dtype=np.int64)
        pick = rng.choice(len(cells), size=n, replace=False)
        return cells[pick].copy()

    def _cluster_spawn(self, rng, third):
        cfg = self.config
        c = cfg.spawn_clusters
        shape = np.array([(0, 0), (1, 0), (0, 1)], dtype=np.int64)
        band = cfg.grid_height // c
        pos = np.zeros((cfg.n_allies, 2), dtype=np.int64)
        members = np.array_split(np.arange(cfg.n_allies), c)
        for ci, idx in enumerate(members):
            # cluster anchor: random column in the third, random row inside the band's safe zone
            x0 = rng.integers(0, third - 1)
            y_lo = ci * band
            y0 = y_lo + rng.integers(0, band - 3 + 1)
            for slot, agent in enumerate(idx):
                pos[agent] = (x0, y0) + shape[slot]
        return pos

    def close(self):
        if self._trace:
            self._trace.close()
            self._trace = None

    # ------------------------------------------------------------------ queries

    def _require_reset(self):
        if self._t is None:
            raise ContractViolation("environment used before reset()")

    def global_state(self) -> np.ndarray:
        self._require_reset()
        cfg = self.config
        parts = []
        for pos, hp, hp_max in ((self.ally_pos, self.ally_hp, cfg.ally_hp), (self.enemy_pos, self.enemy_hp, cfg.enemy_hp)):
            alive = hp > 0
            block = np.zeros((len(hp), 4))
            block[:, 0] = np.where(alive, pos[:, 0] / max(cfg.grid_width - 1, 1), 0.0)
            block[:, 1] = np.where(alive, pos[:, 1] / max(cfg.grid_height - 1, 1), 0.0)
            block[:, 2] = hp / hp_max
            block[:, 3] = alive
            parts.append(block.reshape(-1))
        parts.append(np.array([self._t / cfg.max_steps]))
        return np.concatenate(parts)

    def observations(self) -> np.ndarray:
        self._require_reset()
        cfg = self.config
        return kernels.observations(
            self.ally_pos, self.ally_hp, self.enemy_pos, self.enemy_hp,
            float(cfg.ally_hp), float(cfg.enemy_hp), float(cfg.sight_range),
        )

    def observe(self, agent: int) -> np.ndarray:
        self._check_agent(agent)
        return self.observations()[agent]

    def positions(self) -> AgentPositions:
        self._require_reset()
        return AgentPositions(self.ally_pos.copy(), self.ally_hp > 0)

    def avail_actions(self) -> np.ndarray:
        self._require_reset()
        cfg = self.config
        return kernels.avail_actions(
            self.ally_pos, self.ally_hp, self.enemy_pos, self.enemy_hp,
            cfg.grid_width, cfg.grid_height, float(cfg.attack_range),
        )

    def available_actions(self, agent: int) -> np.ndarray:
        self._check_agent(agent)
        return self.avail_actions()[agent]

    def _check_agent(self, agent):
        if not 0 <= agent < self.config.n_allies:
            raise ContractViolation(f"agent index {agent} out of range [0, {self.config.n_allies})")

    # ------------------------------------------------------------------ dynamics

    def step(self, joint_action) -> StepResult:
        self._require_reset()
        if self._done:
            raise ContractViolation("step() called on a finished episode; reset first")
        cfg = self.config
        actions = np.asarray(joint_action, dtype=np.int64)
        if actions.shape != (cfg.n_allies,):
            raise ContractViolation(f"expected {cfg.n_allies} actions, got shape {actions.shape}")
        avail = self.avail_actions()
        for i, a in enumerate(actions):
            if not (0 <= a < cfg.n_actions and avail[i, a]):
                raise ContractViolation(f"agent {i}: action {a} is not available")
        enemies_before = int((self.enemy_hp > 0).sum())
        dealt, kills, taken = kernels.resolve_step(
            actions, self.ally_pos, self.ally_hp, self.enemy_pos, self.enemy_hp,
            float(cfg.damage), float(cfg.attack_range), cfg.grid_width, cfg.grid_height, self._sentinel,
        )
        assert kills <= enemies_before
        self._t += 1
        won = bool((self.enemy_hp <= 0).all())
        lost = bool((self.ally_hp <= 0).all())
        timeout = self._t >= cfg.max_steps
        terminated = won or lost or timeout
        self._done = terminated
        reward = (dealt + 10.0 * kills + (200.0 if won else 0.0)) / cfg.reward_scale
        info = {"damage_dealt": dealt, "kills": int(kills), "damage_taken": taken, "timeout": timeout and not (won or lost), "t": self._t}
        self._record({
            "step": self._t,
            "positions": self.ally_pos.tolist(),
            "enemy_positions": self.enemy_pos.tolist(),
            "actions": actions.tolist(),
            "reward": reward,
        })
        return StepResult(self.observations(), self.global_state(), reward, terminated, won, self.avail_actions(), info)

    def _record(self, rec):
        if self._trace:
            self._trace.write(json.dumps(rec) + "\n")

    def snapshot(self) -> dict:
        """Copy of the full internal state (for tests and debugging)."""
        return {
            "ally_pos": self.ally_pos.copy(), "ally_hp": self.ally_hp.copy(),
            "enemy_pos": self.enemy_pos.copy(), "enemy_hp": self.enemy_hp.copy(),
            "t": self._t, "config": asdict(self.config),
        }
