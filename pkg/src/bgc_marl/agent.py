"""Agent networks.

``BGCAgent`` is the shared per-agent network: MLP embedding and GRU over the
local history, a diagonal-Gaussian belief head plus an individual feature,
a reparameterized group-feature sample clustered by masked graph attention,
and a hypernetwork that turns the clustered group feature into the weight and
bias of the linear layer mapping the individual feature to Q-values.

``StudentNet`` replaces the graph-attention path at execution time: it sees
only the agent's own history and regresses the clustered group feature.

``RNNAgent`` is the plain recurrent Q-network used by the QMIX/VDN baselines.
"""
from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractViolation, NumericError

LOGVAR_MIN = -10.0
LOGVAR_MAX = 2.0


class AgentOutput(NamedTuple):
    q: torch.Tensor  # (..., n, n_actions)
    hidden: torch.Tensor  # (..., n, hidden_dim); last step for sequences
    group_feature: Optional[torch.Tensor] = None  # clustered g' (or the student estimate)
    mean: Optional[torch.Tensor] = None
    logvar: Optional[torch.Tensor] = None
    individual: Optional[torch.Tensor] = None


# ---------------------------------------------------------------------- inputs

def build_input(observation, agent_id: int, last_action: Optional[int], n_agents: int, n_actions: int) -> np.ndarray:
    """[observation | one-hot(agent_id) | one-hot(last_action)].

    ``last_action=None`` (episode start) gives an all-zero action block.
    """
    if not 0 <= agent_id < n_agents:
        raise ContractViolation(f"agent_id {agent_id} out of range [0, {n_agents})")
    if last_action is not None and not 0 <= last_action < n_actions:
        raise ContractViolation(f"last_action {last_action} out of range [0, {n_actions})")
    obs = np.asarray(observation, dtype=np.float64).reshape(-1)
    ident = np.zeros(n_agents)
    ident[agent_id] = 1.0
    act = np.zeros(n_actions)
    if last_action is not None:
        act[last_action] = 1.0
    return np.concatenate([obs, ident, act])


def build_inputs(obs: torch.Tensor, last_actions: torch.Tensor, n_actions: int) -> torch.Tensor:
    """Batched build_input. obs (..., n, O); last_actions (..., n) int, -1 = none."""
    n = obs.shape[-2]
    ident = torch.eye(n, dtype=obs.dtype, device=obs.device).expand(*obs.shape[:-1], n)
    act = F.one_hot(last_actions.clamp(min=0), n_actions).to(obs.dtype)
    act = act * (last_actions >= 0).unsqueeze(-1).to(obs.dtype)
    return torch.cat([obs, ident, act], dim=-1)


# ---------------------------------------------------------------------- pieces

def reparameterize(mean: torch.Tensor, logvar: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """g = mean + sigma * noise with sigma = exp(logvar / 2)."""
    if noise.shape[-1] != mean.shape[-1]:
        raise ContractViolation(f"noise dim {noise.shape[-1]} != belief dim {mean.shape[-1]}")
    return mean + torch.exp(0.5 * logvar) * noise


class GraphAttention(nn.Module):
    """Single-head masked graph attention.

    e_ij = a . [W g_i || W g_j] over j in N_i, alpha_i. = softmax_j LeakyReLU(e_i.),
    g'_i = ReLU(sum_j alpha_ij v_j) with v_j = g_j (default) or W g_j when
    ``value_projection`` is set.
    """

    def __init__(self, dim: int, leaky_slope: float = 0.2, dropout: float = 0.5, value_projection: bool = False):
        super().__init__()
        self.W = nn.Linear(dim, dim, bias=False)
        self.a = nn.Parameter(torch.empty(2 * dim))
        bound = (6.0 / (2 * dim + 1)) ** 0.5
        nn.init.uniform_(self.a, -bound, bound)
        self.leaky_slope = leaky_slope
        self.dropout = dropout
        self.value_projection = value_projection

    def attention(self, g, mask, train=False, generator=None):
        wg = self.W(g)
        d = wg.shape[-1]
        e = (wg @ self.a[:d]).unsqueeze(-1) + (wg @ self.a[d:]).unsqueeze(-2)
        e = F.leaky_relu(e, self.leaky_slope)
        e = e.masked_fill(~mask, float("-inf"))
        alpha = torch.softmax(e, dim=-1)
        if train and self.dropout > 0:
            keep = torch.rand(alpha.shape, generator=generator, dtype=alpha.dtype, device=alpha.device) >= self.dropout
            alpha = alpha * keep / (1.0 - self.dropout)
        return alpha, wg

    def forward(self, g, mask, train=False, generator=None):
        if mask.shape[-1] != g.shape[-2] or mask.shape[-2] != g.shape[-2]:
            raise ContractViolation(f"mask shape {tuple(mask.shape)} does not match {g.shape[-2]} agents")
        alpha, wg = self.attention(g, mask, train, generator)
        values = wg if self.value_projection else g
        return F.relu(alpha @ values)


class Recurrent(nn.Module):
    """One-hidden-layer ReLU embedding followed by a GRU cell."""

    def __init__(self, input_dim: int, hidden_dim: int = 64):
        super().__init__()
        self.fc = nn.Linear(input_dim, hidden_dim)
        self.rnn = nn.GRUCell(hidden_dim, hidden_dim)
        self.hidden_dim = hidden_dim

    def forward(self, x, h):
        lead = x.shape[:-1]
        e = F.relu(self.fc(x)).reshape(-1, self.hidden_dim)
        h = self.rnn(e, h.reshape(-1, self.hidden_dim))
        return h.reshape(*lead, self.hidden_dim)

    def unroll(self, inputs, h0=None):
        """inputs (B, T, ..., I) -> hidden states (B, T, ..., H)."""
        if h0 is None:
            h0 = inputs.new_zeros(inputs.shape[:1] + inputs.shape[2:-1] + (self.hidden_dim,))
        hs = []
        h = h0
        for t in range(inputs.shape[1]):
            h = self(inputs[:, t], h)
            hs.append(h)
        return torch.stack(hs, dim=1)


def encode_and_recur(net: Recurrent, x, h):
    """Embed one input step and advance the GRU. Returns (features, hidden'); they coincide."""
    if not torch.isfinite(x).all() or not torch.isfinite(h).all():
        raise NumericError("non-finite input to the recurrent encoder")
    h = net(x, h)
    return h, h


# ---------------------------------------------------------------------- agents

class BGCAgent(nn.Module):
    uses_graph = True

    def __init__(
        self,
        input_dim: int,
        n_actions: int,
        hidden_dim: int = 64,
        group_dim: int = 32,
        individual_dim: int = 32,
        gat_layers: int = 1,
        gat_dropout: float = 0.5,
        leaky_slope: float = 0.2,
        value_projection: bool = False,
        mean_bias_offset: float = 0.5,
        logvar_bias_init: float = -6.0,
    ):
        super().__init__()
        self.input_dim, self.n_actions = input_dim, n_actions
        self.hidden_dim, self.group_dim, self.individual_dim = hidden_dim, group_dim, individual_dim
        self.encoder = Recurrent(input_dim, hidden_dim)
        self.mean_head = nn.Linear(hidden_dim, group_dim)
        self.logvar_head = nn.Linear(hidden_dim, group_dim)
        self.individual_head = nn.Linear(hidden_dim, individual_dim)
        self.gat = nn.ModuleList(
            GraphAttention(group_dim, leaky_slope, gat_dropout, value_projection) for _ in range(gat_layers)
        )
        self.hyper_w = nn.Linear(group_dim, n_actions * individual_dim)
        self.hyper_b = nn.Linear(group_dim, n_actions)
        # Start with confident beliefs whose means sit on the live side of the
        # ReLU in g'. From a default init, sampling noise swamps the means and
        # TD learning zeroes the group channel for good.
        with torch.no_grad():
            self.mean_head.bias.add_(mean_bias_offset)
            self.logvar_head.bias.fill_(logvar_bias_init)

    def init_hidden(self, *lead):
        return torch.zeros(*lead, self.hidden_dim)

    def belief_head(self, features):
        mean = self.mean_head(features)
        logvar = self.logvar_head(features).clamp(LOGVAR_MIN, LOGVAR_MAX)
        return mean, logvar, self.individual_head(features)

    def cluster(self, g, mask, train=False, generator=None):
        for layer in self.gat:
            g = layer(g, mask, train, generator)
        return g

    def fuse_q(self, group_feature, individual):
        w = self.hyper_w(group_feature).reshape(*group_feature.shape[:-1], self.n_actions, self.individual_dim)
        return (w @ individual.unsqueeze(-1)).squeeze(-1) + self.hyper_b(group_feature)

    def heads(self, features, mask, noise=None, train=False, generator=None, group_override=None):
        mean, logvar, s = self.belief_head(features)
        if group_override is not None:
            gp = group_override
        else:
            g = mean if noise is None else reparameterize(mean, logvar, noise)
            gp = self.cluster(g, mask, train, generator)
        return self.fuse_q(gp, s), gp, mean, logvar, s

    def forward(self, x, h, mask, noise=None, train=False, generator=None, group_override=None) -> AgentOutput:
        """One time step for all agents. x (..., n, I), h (..., n, H), mask (..., n, n) bool."""
        h = self.encoder(x, h)
        q, gp, mean, logvar, s = self.heads(h, mask, noise, train, generator, group_override)
        return AgentOutput(q, h, gp, mean, logvar, s)

    def forward_sequence(self, inputs, masks, noise=None, train=False, generator=None, group_override=None) -> AgentOutput:
        """Whole episodes. inputs (B, T, n, I), masks (B, T, n, n); outputs keep (B, T, ...)."""
        hs = self.encoder.unroll(inputs)
        q, gp, mean, logvar, s = self.heads(hs, masks, noise, train, generator, group_override)
        return AgentOutput(q, hs, gp, mean, logvar, s)


class RNNAgent(nn.Module):
    """Plain GRU Q-network (the QMIX/VDN baseline agent)."""

    uses_graph = False

    def __init__(self, input_dim: int, n_actions: int, hidden_dim: int = 64, **_ignored):
        super().__init__()
        self.input_dim, self.n_actions, self.hidden_dim = input_dim, n_actions, hidden_dim
        self.encoder = Recurrent(input_dim, hidden_dim)
        self.q_head = nn.Linear(hidden_dim, n_actions)

    def init_hidden(self, *lead):
        return torch.zeros(*lead, self.hidden_dim)

    def forward(self, x, h, mask=None, noise=None, train=False, generator=None, group_override=None) -> AgentOutput:
        h = self.encoder(x, h)
        return AgentOutput(self.q_head(h), h)

    def forward_sequence(self, inputs, masks=None, noise=None, train=False, generator=None, group_override=None) -> AgentOutput:
        hs = self.encoder.unroll(inputs)
        return AgentOutput(self.q_head(hs), hs)


class StudentNet(nn.Module):
    """Local-history-only estimator of the clustered group feature."""

    def __init__(self, input_dim: int, hidden_dim: int = 64, group_dim: int = 32):
        super().__init__()
        self.hidden_dim, self.group_dim = hidden_dim, group_dim
        self.encoder = Recurrent(input_dim, hidden_dim)
        self.head = nn.Linear(hidden_dim, group_dim)

    def init_hidden(self, *lead):
        return torch.zeros(*lead, self.hidden_dim)

    def forward(self, x, h):
        h = self.encoder(x, h)
        return self.head(h), h

    def forward_sequence(self, inputs):
        hs = self.encoder.unroll(inputs)
        return self.head(hs), hs

    @classmethod
    def from_teacher(cls, teacher: BGCAgent) -> "StudentNet":
        """Warm start: copy the teacher's encoder and use its belief-mean head."""
        student = cls(teacher.input_dim, teacher.hidden_dim, teacher.group_dim)
        student.encoder.load_state_dict(teacher.encoder.state_dict())
        student.head.load_state_dict(teacher.mean_head.state_dict())
        return student


def student_forward(student: StudentNet, x, h):
    return student(x, h)


# ---------------------------------------------------------------------- acting

def select_actions(q, avail, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Epsilon-greedy over available actions, one row per agent.

    Greedy ties go to the lowest index. Consumes exactly one uniform draw per
    agent plus one integer draw per exploring agent.
    """
    q = np.asarray(q, dtype=np.float64)
    avail = np.asarray(avail, dtype=bool)
    if q.ndim == 1:
        return select_actions(q[None], avail[None], epsilon, rng)[0]
    if not avail.any(axis=-1).all():
        raise ContractViolation("an agent has no available action")
    masked = np.where(avail, q, -np.inf)
    greedy = masked.argmax(-1)
    explore = rng.random(len(q)) < epsilon
    out = greedy.copy()
    for i in np.flatnonzero(explore):
        choices = np.flatnonzero(avail[i])
        out[i] = choices[rng.integers(len(choices))]
    return out


def select_action(q_values, available, epsilon: float, rng: np.random.Generator) -> int:
    return int(select_actions(q_values, available, epsilon, rng))


def make_agent(kind: str, input_dim: int, n_actions: int, **model_kwargs) -> nn.Module:
    if kind == "bgc":
        return BGCAgent(input_dim, n_actions, **model_kwargs)
    if kind == "rnn":
        return RNNAgent(input_dim, n_actions, hidden_dim=model_kwargs.get("hidden_dim", 64))
    raise ContractViolation(f"unknown agent kind {kind!r}")
