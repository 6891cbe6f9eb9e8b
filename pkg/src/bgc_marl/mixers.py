"""Joint-Q mixers: additive VDN and monotonic, state-conditioned QMIX."""
import torch
import torch.nn as nn
import torch.nn.functional as F


def vdn_mix(agent_qs: torch.Tensor) -> torch.Tensor:
    return agent_qs.sum(-1)


class VDNMixer(nn.Module):
    def forward(self, agent_qs, state=None):
        return vdn_mix(agent_qs)


class QMixer(nn.Module):
    """Two-layer mixing network whose weights come from hypernetworks of the state.

    q_tot = |w2(s)| . ELU(|W1(s)| q + b1(s)) + b2(s). Absolute values keep
    every mixing weight nonnegative, so q_tot is monotone in each agent's Q.
    """

    def __init__(self, n_agents: int, state_dim: int, embed_dim: int = 64):
        super().__init__()
        self.n_agents, self.state_dim, self.embed_dim = n_agents, state_dim, embed_dim
        self.hyper_w1 = nn.Linear(state_dim, n_agents * embed_dim)
        self.hyper_b1 = nn.Linear(state_dim, embed_dim)
        self.hyper_w2 = nn.Linear(state_dim, embed_dim)
        self.hyper_b2 = nn.Sequential(nn.Linear(state_dim, embed_dim), nn.ReLU(), nn.Linear(embed_dim, 1))

    def forward(self, agent_qs, state):
        lead = agent_qs.shape[:-1]
        w1 = torch.abs(self.hyper_w1(state)).reshape(*lead, self.n_agents, self.embed_dim)
        b1 = self.hyper_b1(state)
        hidden = F.elu((agent_qs.unsqueeze(-2) @ w1).squeeze(-2) + b1)
        w2 = torch.abs(self.hyper_w2(state))
        return (hidden * w2).sum(-1) + self.hyper_b2(state).squeeze(-1)


def qmix_mix(agent_qs, state, mixer: QMixer):
    return mixer(agent_qs, state)


def make_mixer(kind: str, n_agents: int, state_dim: int, embed_dim: int = 64) -> nn.Module:
    if kind == "qmix":
        return QMixer(n_agents, state_dim, embed_dim)
    if kind == "vdn":
        return VDNMixer()
    raise ValueError(f"unknown mixer {kind!r}")
